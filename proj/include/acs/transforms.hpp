#pragma once

#include <cstddef>

#include "acs/image.hpp"

namespace acs {

/// Centered orthonormal 2D DFT: ifftshift -> DFT -> fftshift, scaled by
/// 1/sqrt(H*W). DC lands at (H/2, W/2) with floor indexing.
ComplexImage fft2c(const ComplexImage& image);
/// Inverse of fft2c.
ComplexImage ifft2c(const ComplexImage& kspace);

/// Multi-level orthonormal Haar decomposition stored in the usual pyramid
/// layout: for level j (1 = finest) with h = H/2^j, w = W/2^j, the detail
/// bands occupy HL = [0,h)x[w,2w), LH = [h,2h)x[0,w), HH = [h,2h)x[w,2w); the
/// final approximation LL sits in [0,h_L)x[0,w_L).
class WaveletCoeffs {
 public:
  enum class Band { LH, HL, HH };

  WaveletCoeffs() = default;
  WaveletCoeffs(std::size_t levels, RealImage pyramid) : levels_(levels), pyramid_(std::move(pyramid)) {}

  std::size_t levels() const noexcept { return levels_; }
  std::size_t height() const noexcept { return pyramid_.height(); }
  std::size_t width() const noexcept { return pyramid_.width(); }

  RealImage approximation() const;
  RealImage detail(std::size_t level, Band band) const;

  RealImage& pyramid() noexcept { return pyramid_; }
  const RealImage& pyramid() const noexcept { return pyramid_; }

 private:
  std::size_t levels_ = 0;
  RealImage pyramid_;
};

/// Requires H and W divisible by 2^levels.
WaveletCoeffs dwt2(const RealImage& image, std::size_t levels);
RealImage idwt2(const WaveletCoeffs& coeffs);

}  // namespace acs
