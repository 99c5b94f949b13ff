#include "acs/image.hpp"

#include <cmath>

namespace acs {

RealImage real_part(const ComplexImage& x) {
  RealImage out(x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].real();
  return out;
}

RealImage imag_part(const ComplexImage& x) {
  RealImage out(x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].imag();
  return out;
}

RealImage magnitude(const ComplexImage& x) {
  RealImage out(x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
  return out;
}

ComplexImage to_complex(const RealImage& re) {
  ComplexImage out(re.height(), re.width());
  for (std::size_t i = 0; i < re.size(); ++i) out[i] = cplx(re[i], 0.0);
  return out;
}

ComplexImage to_complex(const RealImage& re, const RealImage& im) {
  require(re.same_shape(im), "to_complex: real and imaginary parts differ in shape");
  ComplexImage out(re.height(), re.width());
  for (std::size_t i = 0; i < re.size(); ++i) out[i] = cplx(re[i], im[i]);
  return out;
}

double norm2(const ComplexImage& x) {
  double s = 0.0;
  for (const auto& v : x.values()) s += std::norm(v);
  return std::sqrt(s);
}

double norm2(const RealImage& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return std::sqrt(s);
}

cplx inner(const ComplexImage& a, const ComplexImage& b) {
  require(a.same_shape(b), "inner: shape mismatch");
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

}  // namespace acs
