#include "acs/classical_cs.hpp"

#include <cmath>
#include <sstream>

#include "acs/metrics.hpp"

namespace acs {
namespace {

double l1(const WaveletCoeffs& w) {
  double s = 0.0;
  for (double v : w.pyramid().values()) s += std::abs(v);
  return s;
}

void shrink(WaveletCoeffs& w, double t) {
  for (double& v : w.pyramid().values()) {
    const double m = std::abs(v) - t;
    v = m > 0.0 ? std::copysign(m, v) : 0.0;
  }
}

void check_config(const SolverConfig& cfg) {
  require(cfg.lambda >= 0.0, "SolverConfig: lambda must be non-negative");
  require(cfg.step_size > 0.0, "SolverConfig: step size must be positive");
  require(cfg.tol >= 0.0, "SolverConfig: tol must be non-negative");
  require(cfg.wavelet_levels >= 1, "SolverConfig: at least one wavelet level");
}

}  // namespace

double objective(const ComplexImage& x, const KSpaceData& b, const SolverConfig& cfg) {
  require(x.same_shape(b.measurements), "objective: image and k-space differ in shape");
  const auto ax = forward(x, b.mask);
  double fid = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Unsampled entries of b are zero by contract; the residual is masked.
    fid += std::norm(ax.measurements[i] - (b.mask.is_sampled(i % x.width()) ? b.measurements[i] : cplx{}));
  }
  if (cfg.lambda == 0.0) return fid;
  const double reg = l1(dwt2(real_part(x), cfg.wavelet_levels)) + l1(dwt2(imag_part(x), cfg.wavelet_levels));
  return fid + cfg.lambda * reg;
}

ComplexImage prox_grad_step(const ComplexImage& x, const KSpaceData& b, const SolverConfig& cfg) {
  const auto ax = forward(x, b.mask);
  KSpaceData residual{ax.measurements, b.mask};
  for (std::size_t i = 0; i < x.size(); ++i) residual.measurements[i] -= b.measurements[i];
  const auto grad = adjoint(residual);
  ComplexImage z(x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] - cfg.step_size * grad[i];
  auto wr = dwt2(real_part(z), cfg.wavelet_levels);
  auto wi = dwt2(imag_part(z), cfg.wavelet_levels);
  // The fidelity term carries no 1/2, so its gradient is 2 A^H(Ax - b).
  const double t = 0.5 * cfg.step_size * cfg.lambda;
  shrink(wr, t);
  shrink(wi, t);
  return to_complex(idwt2(wr), idwt2(wi));
}

SolveResult ista_solve(const KSpaceData& b, const SolverConfig& cfg) {
  check_config(cfg);
  SolveResult res;
  ComplexImage x = zero_filled(b);
  double f = objective(x, b, cfg);
  res.objective_trace.push_back(f);

  ComplexImage y = x;  // FISTA extrapolation point
  double t = 1.0;
  const double floor = 1e-12 * (norm2(b.measurements) * norm2(b.measurements)) + 1e-300;
  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    ComplexImage next = prox_grad_step(cfg.accelerated ? y : x, b, cfg);
    const double f_next = objective(next, b, cfg);
    if (!std::isfinite(f_next)) throw NumericalError("ista_solve: non-finite objective at iteration " + std::to_string(k + 1));
    if (!cfg.accelerated && f_next - f > 1e-6 * std::abs(f) + floor) {
      std::ostringstream msg;
      msg << "ista_solve: objective increased from " << f << " to " << f_next << " at iteration " << k + 1
          << " (step size " << cfg.step_size << " too large?)";
      throw NumericalError(msg.str());
    }
    if (cfg.accelerated) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = next[i] + beta * (next[i] - x[i]);
      t = t_next;
    }
    x = std::move(next);
    res.objective_trace.push_back(f_next);
    res.iterations = k + 1;
    const double rel = std::abs(f - f_next) / std::max(std::abs(f), 1e-300);
    f = f_next;
    if (rel < cfg.tol) break;
  }
  res.image = std::move(x);
  return res;
}

std::vector<double> default_lambda_grid() { return {1e-4, 3e-4, 1e-3, 3e-3, 1e-2}; }

LambdaChoice tune_lambda(const std::vector<TuningCase>& cases, const std::vector<double>& grid, SolverConfig cfg) {
  require(!cases.empty() && !grid.empty(), "tune_lambda: need at least one case and one grid value");
  LambdaChoice choice;
  double best = -2.0;
  for (double lambda : grid) {
    cfg.lambda = lambda;
    double s = 0.0;
    for (const auto& c : cases) s += ssim(c.target, magnitude(ista_solve(c.kspace, cfg).image));
    s /= static_cast<double>(cases.size());
    choice.mean_ssim.push_back(s);
    if (s > best) {
      best = s;
      choice.lambda = lambda;
    }
  }
  return choice;
}

}  // namespace acs
