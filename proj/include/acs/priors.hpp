#pragma once

#include <vector>

#include "acs/image.hpp"
#include "acs/mri_model.hpp"
#include "acs/tensor.hpp"

namespace acs {

/// Domain-knowledge channels fed to each reconstruction block.
struct PriorChannels {
  ComplexImage e_b;   // soft data consistency
  ComplexImage e_phi; // phase-corrected estimate
  RealImage e_bg;     // background location, 1 = background
};

/// Resolution of the background mask; values are snapped to multiples of it.
inline constexpr double kBackgroundQuantum = 0x1.0p-20;
inline constexpr double kDefaultBackgroundTheta = 0.1;

/// A^H (A x - b): image-domain gradient of the data-fidelity term.
ComplexImage data_consistency(const ComplexImage& x, const KSpaceData& b);

/// Smooth phase estimate angle(low_freq_recon(b)); zero where the
/// low-frequency magnitude is below 1e-12 of its maximum.
RealImage phase_map(const KSpaceData& b);
/// x * exp(-i phi) with phi = phase_map(b).
ComplexImage phase_prior(const ComplexImage& x, const KSpaceData& b);
ComplexImage apply_phase(const ComplexImage& x, const RealImage& phi);

/// 1 - clamp(|lf| / (theta * max|lf|), 0, 1) with lf the low-frequency
/// reconstruction, snapped to kBackgroundQuantum; all ones if lf vanishes.
RealImage background_mask(const KSpaceData& b, double theta = kDefaultBackgroundTheta);

PriorChannels compute_priors(const ComplexImage& x, const KSpaceData& b, double theta = kDefaultBackgroundTheta);

/// Differentiable e_b for a packed stack x[1, 2S, H, W], one KSpaceData per slice.
ad::Tensor data_consistency(const ad::Tensor& x, const std::vector<KSpaceData>& b);

}  // namespace acs
