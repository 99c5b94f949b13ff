#include "acs/priors.hpp"

#include <algorithm>
#include <cmath>

#include "acs/ops.hpp"

namespace acs {

ComplexImage data_consistency(const ComplexImage& x, const KSpaceData& b) {
  require(x.same_shape(b.measurements), "data_consistency: image and k-space differ in shape");
  KSpaceData r = forward(x, b.mask);
  for (std::size_t i = 0; i < x.size(); ++i) r.measurements[i] -= b.measurements[i];
  return adjoint(r);
}

RealImage phase_map(const KSpaceData& b) {
  const auto lf = low_freq_recon(b);
  double peak = 0.0;
  for (const auto& v : lf.values()) peak = std::max(peak, std::abs(v));
  RealImage phi(lf.height(), lf.width(), 0.0);
  if (peak == 0.0) return phi;
  for (std::size_t i = 0; i < lf.size(); ++i)
    if (std::abs(lf[i]) >= 1e-12 * peak) phi[i] = std::arg(lf[i]);
  return phi;
}

ComplexImage apply_phase(const ComplexImage& x, const RealImage& phi) {
  require(x.height() == phi.height() && x.width() == phi.width(), "apply_phase: shape mismatch");
  ComplexImage out(x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * std::polar(1.0, -phi[i]);
  return out;
}

ComplexImage phase_prior(const ComplexImage& x, const KSpaceData& b) { return apply_phase(x, phase_map(b)); }

RealImage background_mask(const KSpaceData& b, double theta) {
  require(theta > 0.0 && theta <= 1.0, "background_mask: theta must lie in (0, 1]");
  const auto lf = low_freq_recon(b);
  RealImage m(lf.height(), lf.width(), 1.0);
  double peak = 0.0;
  for (const auto& v : lf.values()) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return m;
  const double denom = theta * peak;
  for (std::size_t i = 0; i < lf.size(); ++i) {
    const double v = 1.0 - std::clamp(std::abs(lf[i]) / denom, 0.0, 1.0);
    m[i] = std::round(v / kBackgroundQuantum) * kBackgroundQuantum;
  }
  return m;
}

PriorChannels compute_priors(const ComplexImage& x, const KSpaceData& b, double theta) {
  return {data_consistency(x, b), phase_prior(x, b), background_mask(b, theta)};
}

ad::Tensor data_consistency(const ad::Tensor& x, const std::vector<KSpaceData>& b) {
  require(x.rank() == 4 && x.dim(0) == 1 && x.dim(1) == 2 * b.size(),
          "data_consistency: stack of " + std::to_string(b.size()) + " slices does not match tensor " +
              ad::to_string(x.shape()));
  std::vector<ComplexImage> ahb;
  ahb.reserve(b.size());
  for (const auto& k : b) ahb.push_back(adjoint(k));
  const auto offset = pack_complex(ahb);

  const bool shared_mask = std::all_of(b.begin(), b.end(), [&](const KSpaceData& k) { return k.mask == b[0].mask; });
  if (shared_mask) return ad::sub(normal_projection(x, b[0].mask), offset);
  std::vector<ad::Tensor> parts;
  for (std::size_t s = 0; s < b.size(); ++s)
    parts.push_back(normal_projection(ad::slice_channels(x, 2 * s, 2), b[s].mask));
  return ad::sub(ad::concat_channels(parts), offset);
}

}  // namespace acs
