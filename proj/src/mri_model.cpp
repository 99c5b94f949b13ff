#include "acs/mri_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acs/rng.hpp"
#include "acs/transforms.hpp"

namespace acs {

std::size_t SamplingMask::num_sampled() const {
  return static_cast<std::size_t>(std::count(sampled.begin(), sampled.end(), std::uint8_t{1}));
}

SamplingMask SamplingMask::full(std::size_t width) {
  SamplingMask m;
  m.width = width;
  m.sampled.assign(width, 1);
  m.acceleration = 1.0;
  m.center_fraction = 1.0;
  m.center_begin = 0;
  m.center_count = width;
  return m;
}

double default_center_fraction(double acceleration) { return 0.32 / acceleration; }

SamplingMask make_mask(std::size_t width, double acceleration, double center_fraction, std::uint64_t seed) {
  if (width < 8) throw ParameterError("make_mask: width must be at least 8");
  if (!(acceleration >= 1.0 && acceleration <= static_cast<double>(width)))
    throw ParameterError("make_mask: acceleration must lie in [1, width]");
  if (!(center_fraction > 0.0 && center_fraction <= 1.0))
    throw ParameterError("make_mask: center fraction must lie in (0, 1]");
  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(width) / acceleration));
  const auto center = static_cast<std::size_t>(std::lround(center_fraction * static_cast<double>(width)));
  if (budget < center)
    throw ParameterError("make_mask: sampling budget of " + std::to_string(budget) +
                         " columns is smaller than the center band of " + std::to_string(center));

  SamplingMask m;
  m.width = width;
  m.acceleration = acceleration;
  m.center_fraction = center_fraction;
  m.center_count = center;
  m.center_begin = (width - center + 1) / 2;
  m.sampled.assign(width, 0);
  std::vector<std::size_t> pool;
  for (std::size_t c = 0; c < width; ++c) {
    if (m.in_center(c))
      m.sampled[c] = 1;
    else
      pool.push_back(c);
  }
  // Partial Fisher-Yates over the off-center columns.
  CounterRng rng(seed);
  const std::size_t extra = budget - center;
  for (std::size_t i = 0; i < extra; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    m.sampled[pool[i]] = 1;
  }
  return m;
}

namespace {

void check_shape(const ComplexImage& x, const SamplingMask& mask) {
  require(x.width() == mask.width && mask.sampled.size() == mask.width,
          "image width " + std::to_string(x.width()) + " does not match mask width " + std::to_string(mask.width));
}

void apply_columns(ComplexImage& k, const SamplingMask& mask, bool center_only) {
  for (std::size_t r = 0; r < k.height(); ++r)
    for (std::size_t c = 0; c < k.width(); ++c) {
      const bool keep = center_only ? mask.in_center(c) : mask.is_sampled(c);
      if (!keep) k(r, c) = cplx{};
    }
}

}  // namespace

KSpaceData forward(const ComplexImage& x, const SamplingMask& mask) {
  check_shape(x, mask);
  KSpaceData b{fft2c(x), mask};
  apply_columns(b.measurements, mask, false);
  return b;
}

ComplexImage adjoint(const KSpaceData& b) {
  check_shape(b.measurements, b.mask);
  ComplexImage k = b.measurements;
  apply_columns(k, b.mask, false);
  return ifft2c(k);
}

ComplexImage normal_projection(const ComplexImage& x, const SamplingMask& mask) {
  return adjoint(forward(x, mask));
}

ComplexImage zero_filled(const KSpaceData& b) { return adjoint(b); }

ComplexImage low_freq_recon(const KSpaceData& b) {
  check_shape(b.measurements, b.mask);
  ComplexImage k = b.measurements;
  apply_columns(k, b.mask, true);
  return ifft2c(k);
}

ad::Tensor pack_complex(const std::vector<ComplexImage>& slices, bool requires_grad) {
  require(!slices.empty(), "pack_complex: no slices");
  const std::size_t h = slices[0].height();
  const std::size_t w = slices[0].width();
  const std::size_t hw = h * w;
  std::vector<double> v(2 * slices.size() * hw);
  for (std::size_t s = 0; s < slices.size(); ++s) {
    require(slices[s].height() == h && slices[s].width() == w, "pack_complex: slices differ in shape");
    for (std::size_t i = 0; i < hw; ++i) {
      v[2 * s * hw + i] = slices[s][i].real();
      v[(2 * s + 1) * hw + i] = slices[s][i].imag();
    }
  }
  return ad::Tensor::from({1, 2 * slices.size(), h, w}, std::move(v), requires_grad);
}

std::vector<ComplexImage> unpack_complex(const ad::Tensor& t) {
  require(t.rank() == 4 && t.dim(0) == 1 && t.dim(1) % 2 == 0, "unpack_complex: expected [1, 2S, H, W]");
  const std::size_t h = t.dim(2);
  const std::size_t w = t.dim(3);
  const std::size_t hw = h * w;
  std::vector<ComplexImage> out;
  for (std::size_t s = 0; s < t.dim(1) / 2; ++s) {
    ComplexImage img(h, w);
    for (std::size_t i = 0; i < hw; ++i) img[i] = cplx(t[2 * s * hw + i], t[(2 * s + 1) * hw + i]);
    out.push_back(std::move(img));
  }
  return out;
}

namespace {

std::vector<double> project_channels(std::span<const double> v, std::size_t pairs, std::size_t h, std::size_t w,
                                     const SamplingMask& mask) {
  const std::size_t hw = h * w;
  std::vector<double> out(v.size());
  for (std::size_t p = 0; p < pairs; ++p) {
    ComplexImage img(h, w);
    for (std::size_t i = 0; i < hw; ++i) img[i] = cplx(v[2 * p * hw + i], v[(2 * p + 1) * hw + i]);
    auto y = normal_projection(img, mask);
    for (std::size_t i = 0; i < hw; ++i) {
      out[2 * p * hw + i] = y[i].real();
      out[(2 * p + 1) * hw + i] = y[i].imag();
    }
  }
  return out;
}

}  // namespace

ad::Tensor normal_projection(const ad::Tensor& x, const SamplingMask& mask) {
  require(x.rank() == 4 && x.dim(1) % 2 == 0, "normal_projection: expected [N, 2S, H, W]");
  require(x.dim(3) == mask.width, "normal_projection: width does not match mask");
  const std::size_t pairs = x.dim(0) * x.dim(1) / 2;
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  auto out = project_channels(x.data(), pairs, h, w, mask);
  return ad::Tensor::make_result(x.shape(), std::move(out), "normal_projection", {x},
                                 [pairs, h, w, mask](ad::detail::Node& self) {
                                   auto g = project_channels(self.grad, pairs, h, w, mask);
                                   auto& dst = self.parents[0]->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                                 });
}

}  // namespace acs
