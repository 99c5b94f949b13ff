#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "acs/errors.hpp"

namespace acs {

using cplx = std::complex<double>;

/// Dense row-major 2D array.
template <typename T>
class Image2D {
 public:
  Image2D() = default;
  Image2D(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), values_(height * width, fill) {}
  Image2D(std::size_t height, std::size_t width, std::vector<T> values)
      : height_(height), width_(width), values_(std::move(values)) {
    require(values_.size() == height_ * width_, "Image2D: value count does not match height*width");
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * width_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * width_ + c]; }
  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  std::vector<T>& values() & noexcept { return values_; }
  const std::vector<T>& values() const& noexcept { return values_; }
  std::vector<T> values() && noexcept { return std::move(values_); }

  bool same_shape(const Image2D& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const Image2D&, const Image2D&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> values_;
};

using ComplexImage = Image2D<cplx>;
using RealImage = Image2D<double>;

RealImage real_part(const ComplexImage& x);
RealImage imag_part(const ComplexImage& x);
RealImage magnitude(const ComplexImage& x);
ComplexImage to_complex(const RealImage& re);
ComplexImage to_complex(const RealImage& re, const RealImage& im);

double norm2(const ComplexImage& x);
double norm2(const RealImage& x);
/// sum_i conj(a_i) * b_i
cplx inner(const ComplexImage& a, const ComplexImage& b);

}  // namespace acs
