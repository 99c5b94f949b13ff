#pragma once

#include <vector>

#include "acs/image.hpp"

namespace acs {

/// Parameters of the Gaussian-windowed SSIM family.
struct SsimParams {
  std::size_t window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::size_t msssim_scales = 3;
  /// Empty means the standard five-scale weights truncated to msssim_scales
  /// and renormalized to sum to one.
  std::vector<double> scale_weights;
  /// Dynamic range from the union of both images instead of the target only.
  bool union_range = false;
};

/// Normalized 1D Gaussian window.
std::vector<double> gaussian_window(std::size_t size, double sigma);
std::vector<double> resolve_scale_weights(const SsimParams& p);
double dynamic_range(const RealImage& t, const RealImage& y, bool union_range);
/// Throws PreconditionError when an image cannot host the window pyramid.
void check_ssim_geometry(const RealImage& t, const RealImage& y, const SsimParams& p, std::size_t scales);

/// Mean SSIM over the valid (unpadded) window positions.
double ssim(const RealImage& t, const RealImage& y, const SsimParams& p = {});
/// prod_{j<M-1} cs_j^{w_j} * ssim_M^{w_M}, with per-scale means clamped at 0
/// and 2x2 mean pooling between scales. L is fixed from the full-resolution pair.
double ms_ssim(const RealImage& t, const RealImage& y, const SsimParams& p = {});

/// ||t - y||^2 / ||t||^2
double nmse(const RealImage& t, const RealImage& y);
/// 10 log10(max(t)^2 / mse)
double psnr(const RealImage& t, const RealImage& y);

}  // namespace acs
