#pragma once

#include <cstddef>
#include <vector>

#include "acs/image.hpp"
#include "acs/mri_model.hpp"
#include "acs/transforms.hpp"

namespace acs {

/// Configuration of the wavelet-L1 solver for
///   min_x ||A x - b||^2 + lambda * ||W x||_1
/// with W the Haar transform applied to the real and imaginary channels.
struct SolverConfig {
  double lambda = 1e-3;
  std::size_t max_iters = 200;
  double step_size = 1.0;  // must not exceed 1/L; L = 1 for a masked unitary A
  double tol = 0.0;        // relative objective change stopping threshold
  std::size_t wavelet_levels = 3;
  bool accelerated = false;  // FISTA momentum
};

struct SolveResult {
  ComplexImage image;
  /// Objective at x_0 followed by the value after each iteration.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
};

double objective(const ComplexImage& x, const KSpaceData& b, const SolverConfig& cfg);

/// One proximal-gradient step: W^T soft(W(x - step A^H(Ax - b)), step*lambda/2).
ComplexImage prox_grad_step(const ComplexImage& x, const KSpaceData& b, const SolverConfig& cfg);

/// ISTA (or FISTA when cfg.accelerated) started from the zero-filled image.
/// Plain ISTA aborts with NumericalError if an iteration raises the objective
/// by more than 1e-6 relative.
SolveResult ista_solve(const KSpaceData& b, const SolverConfig& cfg);

/// One reconstruction problem with known truth, for lambda selection.
struct TuningCase {
  RealImage target;  // ground-truth magnitude
  KSpaceData kspace;
};

struct LambdaChoice {
  double lambda = 0.0;
  std::vector<double> mean_ssim;  // one entry per grid value
};

/// The default grid used for lambda selection.
std::vector<double> default_lambda_grid();

/// Pick the grid value maximizing mean magnitude SSIM over `cases`.
LambdaChoice tune_lambda(const std::vector<TuningCase>& cases, const std::vector<double>& grid, SolverConfig cfg);

}  // namespace acs
