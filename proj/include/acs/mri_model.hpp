#pragma once

#include <cstdint>
#include <vector>

#include "acs/image.hpp"
#include "acs/tensor.hpp"

namespace acs {

/// Per-column Cartesian sampling pattern with a fully sampled center band.
struct SamplingMask {
  std::size_t width = 0;
  std::vector<std::uint8_t> sampled;  // 1 = column acquired
  double acceleration = 1.0;
  double center_fraction = 1.0;
  std::size_t center_begin = 0;
  std::size_t center_count = 0;

  bool is_sampled(std::size_t col) const { return sampled[col] != 0; }
  bool in_center(std::size_t col) const { return col >= center_begin && col < center_begin + center_count; }
  std::size_t num_sampled() const;

  /// Every column sampled, center band spanning the full width.
  static SamplingMask full(std::size_t width);

  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

struct KSpaceData {
  ComplexImage measurements;  // zero on unsampled columns
  SamplingMask mask;
};

/// fastMRI-style default: 0.08 at 4x, 0.04 at 8x, i.e. 0.32 / R.
double default_center_fraction(double acceleration);

/// Exactly round(width / acceleration) sampled columns: the round(cf * width)
/// center columns plus a uniform draw without replacement from the rest.
SamplingMask make_mask(std::size_t width, double acceleration, double center_fraction, std::uint64_t seed);

/// A = M o fft2c.
KSpaceData forward(const ComplexImage& x, const SamplingMask& mask);
/// A^H = ifft2c o M.
ComplexImage adjoint(const KSpaceData& b);
/// A^H A x.
ComplexImage normal_projection(const ComplexImage& x, const SamplingMask& mask);

ComplexImage zero_filled(const KSpaceData& b);
/// Adjoint of the measurements restricted to the fully sampled center band.
ComplexImage low_freq_recon(const KSpaceData& b);

/// Differentiable A^H A applied to every (re, im) channel pair of
/// x[N, 2S, H, W]. The operator is self-adjoint, so the backward pass
/// applies it to the incoming gradient.
ad::Tensor normal_projection(const ad::Tensor& x, const SamplingMask& mask);

/// (re, im) channel packing of complex images into a [1, 2S, H, W] tensor.
ad::Tensor pack_complex(const std::vector<ComplexImage>& slices, bool requires_grad = false);
std::vector<ComplexImage> unpack_complex(const ad::Tensor& t);

}  // namespace acs
