#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "acs/classical_cs.hpp"
#include "acs/data.hpp"
#include "acs/metrics.hpp"
#include "oracles.hpp"

using namespace acs;

namespace {

// Haar L1 norm via direct 2x2 butterflies on a plain vector.
double haar_l1(std::vector<double> ll, std::size_t h, std::size_t w, std::size_t levels) {
  double s = 0.0;
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<double> next(h / 2 * (w / 2));
    for (std::size_t r = 0; r < h / 2; ++r)
      for (std::size_t c = 0; c < w / 2; ++c) {
        const double a = ll[2 * r * w + 2 * c], b = ll[2 * r * w + 2 * c + 1];
        const double cc = ll[(2 * r + 1) * w + 2 * c], d = ll[(2 * r + 1) * w + 2 * c + 1];
        next[r * (w / 2) + c] = (a + b + cc + d) / 2;
        s += std::abs(a + b - cc - d) / 2 + std::abs(a - b + cc - d) / 2 + std::abs(a - b - cc + d) / 2;
      }
    ll = std::move(next);
    h /= 2;
    w /= 2;
  }
  for (double v : ll) s += std::abs(v);
  return s;
}

double objective_oracle(const ComplexImage& x, const ComplexImage& b, const SamplingMask& m, double lambda,
                        std::size_t levels) {
  const auto k = oracle::dft2c(x);
  double fid = 0.0;
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < x.width(); ++c)
      if (m.is_sampled(c)) fid += std::norm(k(r, c) - b(r, c));
  std::vector<double> re(x.size()), im(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    re[i] = x[i].real();
    im[i] = x[i].imag();
  }
  return fid + lambda * (haar_l1(re, x.height(), x.width(), levels) + haar_l1(im, x.height(), x.width(), levels));
}

SolverConfig config(double lambda, std::size_t iters, bool accelerated = false) {
  SolverConfig cfg;
  cfg.lambda = lambda;
  cfg.max_iters = iters;
  cfg.accelerated = accelerated;
  return cfg;
}

}  // namespace

TEST_CASE("objective examples") {
  const auto vol = generate_phantom(1, 64, 1);
  const auto gt = vol.complex_slice(0);
  const auto b = forward(gt, SamplingMask::full(64));
  CHECK(objective(gt, b, config(0.0, 1)) < 1e-20);

  const auto bm = forward(gt, make_mask(64, 4.0, 0.08, 2));
  CHECK(objective(ComplexImage(64, 64), bm, config(1e-3, 1)) == doctest::Approx(norm2(bm.measurements) *
                                                                               norm2(bm.measurements)).epsilon(1e-12));
}

TEST_CASE("objective agrees with a direct formula") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = make_mask(16, 2.0, 0.25, seed);
    const auto x = oracle::random_complex(16, 16, seed);
    const auto b = forward(oracle::random_complex(16, 16, 50 + seed), m);
    const double got = objective(x, b, config(0.37, 1, false));
    const double want = objective_oracle(x, b.measurements, m, 0.37, 3);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
  }
}

TEST_CASE("lambda zero with a full mask recovers the image in one step") {
  const auto vol = generate_phantom(4, 64, 1);
  const auto gt = vol.complex_slice(0);
  auto cfg = config(0.0, 1);
  const auto res = ista_solve(forward(gt, SamplingMask::full(64)), cfg);
  CHECK(res.iterations == 1);
  CHECK(nmse(vol.slices[0], magnitude(res.image)) < 1e-20);
}

TEST_CASE("large lambda collapses to zero") {
  const auto vol = generate_phantom(5, 64, 1);
  const auto b = forward(vol.complex_slice(0), make_mask(64, 4.0, 0.08, 5));
  const auto zf = zero_filled(b);
  double mx = 0.0;
  for (const auto& w : {dwt2(real_part(zf), 3), dwt2(imag_part(zf), 3)})
    for (double v : w.pyramid().values()) mx = std::max(mx, std::abs(v));
  const auto res = ista_solve(b, config(2.0 * mx, 3));
  for (const auto& v : res.image.values()) CHECK(v == cplx{});
}

TEST_CASE("ISTA on a 4x phantom: monotone trace and better than zero-filled") {
  const auto vol = generate_phantom(6, 64, 1);
  const auto b = forward(vol.complex_slice(0), make_mask(64, 4.0, 0.08, 6));
  const auto res = ista_solve(b, config(1e-3, 200));
  REQUIRE(res.objective_trace.size() == 201);
  for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
    CHECK(res.objective_trace[k] <= res.objective_trace[k - 1] + 1e-10);
  CHECK(ssim(vol.slices[0], magnitude(res.image)) > ssim(vol.slices[0], magnitude(zero_filled(b))));
}

TEST_CASE("monotone objective across random instances") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = make_mask(32, 3.0, 0.1, seed);
    const auto b = forward(oracle::random_complex(32, 32, seed), m);
    const auto res = ista_solve(b, config(0.05 * (1 + seed), 30));
    for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
      CHECK(res.objective_trace[k] <= res.objective_trace[k - 1] + 1e-10);
  }
}

TEST_CASE("closed-form fixed point with a full mask is stationary") {
  // With A unitary the minimizer is W^T soft(W y, lambda/2) per real channel, y = A^H b.
  const auto y = oracle::random_complex(32, 32, 77);
  const double lambda = 0.3;
  auto shrink = [&](const RealImage& ch) {
    auto w = dwt2(ch, 3);
    for (double& v : w.pyramid().values()) v = std::copysign(std::max(std::abs(v) - lambda / 2, 0.0), v);
    return idwt2(w);
  };
  const auto xstar = to_complex(shrink(real_part(y)), shrink(imag_part(y)));
  const auto b = forward(y, SamplingMask::full(32));
  const auto cfg = config(lambda, 1);
  const auto next = prox_grad_step(xstar, b, cfg);
  double moved = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) moved = std::max(moved, std::abs(next[i] - xstar[i]));
  CHECK(moved < 1e-10);

  // And it is a minimizer: small perturbations do not lower the objective.
  const double f0 = objective(xstar, b, cfg);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = xstar;
    const auto d = oracle::random_complex(32, 32, 900 + seed);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += 1e-3 * d[i];
    CHECK(objective(p, b, cfg) >= f0 - 1e-12);
  }
}

TEST_CASE("ISTA step lengths never grow") {
  const auto vol = generate_phantom(8, 64, 1);
  const auto b = forward(vol.complex_slice(0), make_mask(64, 4.0, 0.08, 8));
  const auto cfg = config(3e-3, 1);
  auto x = zero_filled(b);
  double prev = 1e300;
  for (int k = 0; k < 60; ++k) {
    auto next = prox_grad_step(x, b, cfg);
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += std::norm(next[i] - x[i]);
    d = std::sqrt(d);
    CHECK(d <= prev * (1 + 1e-12) + 1e-15);
    prev = d;
    x = std::move(next);
  }
}

TEST_CASE("FISTA is no worse than ISTA at equal iterations") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto vol = generate_phantom(seed, 64, 1);
    const auto b = forward(vol.complex_slice(0), make_mask(64, 4.0, 0.08, seed));
    const auto ista = ista_solve(b, config(1e-3, 100));
    const auto fista = ista_solve(b, config(1e-3, 100, true));
    CHECK(fista.objective_trace.back() <= ista.objective_trace.back() + 1e-8);
  }
}

TEST_CASE("tolerance stops early") {
  const auto vol = generate_phantom(9, 64, 1);
  const auto b = forward(vol.complex_slice(0), make_mask(64, 4.0, 0.08, 9));
  auto cfg = config(1e-3, 500);
  cfg.tol = 1e-4;
  const auto res = ista_solve(b, cfg);
  CHECK(res.iterations < 500);
  CHECK(res.objective_trace.size() == res.iterations + 1);
}

TEST_CASE("divergence guard and config errors") {
  const auto vol = generate_phantom(10, 64, 1);
  const auto b = forward(vol.complex_slice(0), make_mask(64, 4.0, 0.08, 10));
  auto cfg = config(1e-3, 10);
  cfg.step_size = 2.5;
  CHECK_THROWS_AS(ista_solve(b, cfg), NumericalError);
  cfg.step_size = 0.0;
  CHECK_THROWS_AS(ista_solve(b, cfg), PreconditionError);
  cfg = config(-1.0, 10);
  CHECK_THROWS_AS(ista_solve(b, cfg), PreconditionError);
}

TEST_CASE("lambda tuning picks the best grid value") {
  std::vector<TuningCase> cases;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const auto vol = generate_phantom(100 + seed, 64, 1);
    cases.push_back({vol.slices[0], forward(vol.complex_slice(0), make_mask(64, 4.0, 0.08, seed))});
  }
  const auto grid = default_lambda_grid();
  const auto choice = tune_lambda(cases, grid, config(0.0, 20));
  REQUIRE(choice.mean_ssim.size() == grid.size());
  const auto best = std::max_element(choice.mean_ssim.begin(), choice.mean_ssim.end()) - choice.mean_ssim.begin();
  CHECK(choice.lambda == grid[static_cast<std::size_t>(best)]);
}
