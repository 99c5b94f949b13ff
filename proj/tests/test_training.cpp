#include <doctest.h>

#include <cmath>

#include "acs/ops.hpp"
#include "acs/training.hpp"
#include "oracles.hpp"

using namespace acs;
using ad::Tensor;

namespace {

Tensor as_tensor(const RealImage& img, bool grad = false) {
  return Tensor::from({1, 1, img.height(), img.width()}, img.values(), grad);
}

RealImage smooth_random(std::size_t n, std::uint64_t seed) {
  auto x = oracle::random_real(n, n, seed, 0.0, 1.0);
  RealImage out(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += x((r + i) % n, (c + j) % n);
      out(r, c) = s / 9.0;
    }
  return out;
}

RealImage perturbed(const RealImage& t, double amount, std::uint64_t seed) {
  const auto noise = oracle::random_real(t.height(), t.width(), seed);
  RealImage y = t;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += amount * noise[i];
  return y;
}

Tensor complex_of(const RealImage& mag) { return pack_complex({to_complex(mag, RealImage(mag.height(), mag.width()))}); }

ModelConfig tiny_model(std::size_t neighbors = 1) {
  ModelConfig cfg;
  cfg.num_blocks = 1;
  cfg.base_channels = 2;
  cfg.scales = 2;
  cfg.slice_neighbors = neighbors;
  return cfg;
}

}  // namespace

TEST_CASE("MS-SSIM of an image with itself is one") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t = smooth_random(64, seed);
    CHECK(ms_ssim_tensor(t, as_tensor(t)).item() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ms_ssim(t, t) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("SSIM of a binary image against its inverse is not positive") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto t = oracle::random_real(64, 64, seed, 0.0, 1.0);
    RealImage inv(64, 64);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = t[i] < 0.5 ? 0.0 : 1.0;
      inv[i] = 1.0 - t[i];
    }
    CHECK(ssim(t, inv) <= 0.0);
    CHECK(ssim_tensor(t, as_tensor(inv)).item() <= 0.0);
  }
}

TEST_CASE("SSIM and MS-SSIM agree with the direct scalar implementation") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto t = smooth_random(64, 10 + seed);
    const auto y = perturbed(t, 0.15, 20 + seed);
    const double L = oracle::data_range(t);
    const double want_ssim = oracle::ssim_scalar(t, y, L).ssim;
    CHECK(std::abs(ssim(t, y) - want_ssim) < 1e-6);
    CHECK(std::abs(ssim_tensor(t, as_tensor(y)).item() - want_ssim) < 1e-6);
    const double want = oracle::ms_ssim_scalar(t, y);
    CHECK(want > 0.0);
    CHECK(std::abs(ms_ssim(t, y) - want) < 1e-6);
    CHECK(std::abs(ms_ssim_tensor(t, as_tensor(y)).item() - want) < 1e-6);
  }
}

TEST_CASE("MS-SSIM is bounded and symmetric with a union range") {
  SsimParams p;
  p.union_range = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t = smooth_random(64, 30 + seed);
    const auto y = perturbed(t, 0.3, 40 + seed);
    const double a = ms_ssim(t, y, p), b = ms_ssim(y, t, p);
    CHECK(a <= 1.0);
    CHECK(std::abs(a - b) < 1e-12);
    CHECK(ms_ssim_tensor(t, as_tensor(y), p).item() <= 1.0);
  }
}

TEST_CASE("MS-SSIM geometry errors") {
  const auto small = smooth_random(32, 1);
  CHECK_THROWS_AS(ms_ssim(small, small), PreconditionError);
  CHECK_THROWS_AS(ms_ssim_tensor(small, as_tensor(small)), PreconditionError);
  SsimParams even;
  even.window = 10;
  const auto t = smooth_random(64, 1);
  CHECK_THROWS_AS(ssim(t, t, even), PreconditionError);
}

TEST_CASE("MS-SSIM gradient matches finite differences") {
  const auto t = smooth_random(64, 5);
  auto y = as_tensor(perturbed(t, 0.1, 6), true);
  ad::backward(ms_ssim_tensor(t, y));
  const auto analytic = y.grad();
  const auto numeric = oracle::finite_difference([&] { return ms_ssim_tensor(t, y).item(); }, y.mutable_data());
  CHECK(oracle::relative_error(analytic, numeric) < 1e-5);
}

TEST_CASE("loss examples") {
  const auto t = smooth_random(64, 7);
  LossConfig cfg;
  CHECK(std::abs(reconstruction_loss(t, complex_of(t), cfg).item()) < 1e-9);

  const auto y = perturbed(t, 0.2, 8);
  double mae = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) mae += std::abs(t[i] - std::abs(y[i]));
  mae /= static_cast<double>(t.size());
  cfg.alpha = 0.0;
  CHECK(reconstruction_loss(t, complex_of(y), cfg).item() == mae);

  cfg.alpha = 0.84;
  const RealImage flat_t(64, 64, 0.5), flat_y(64, 64, 0.6);
  const double got = reconstruction_loss(flat_t, complex_of(flat_y), cfg).item();
  // Flat images have zero variance, so cs = 1 at every scale and only the
  // coarsest luminance term 2*0.5*0.6 / (0.5^2 + 0.6^2) survives.
  const double w_last = 0.3001 / (0.0448 + 0.2856 + 0.3001);
  const double want = 0.84 * (1.0 - std::pow(0.6 / 0.61, w_last)) + 0.16 * 0.1;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  cfg.alpha = 1.5;
  CHECK_THROWS_AS(reconstruction_loss(t, complex_of(t), cfg), PreconditionError);
}

TEST_CASE("loss is non-negative and vanishes only at the target") {
  LossConfig cfg;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto t = smooth_random(64, 50 + seed);
    const double v = reconstruction_loss(t, complex_of(perturbed(t, 0.01 * (seed + 1), 60 + seed)), cfg).item();
    CHECK(v > 0.0);
  }
}

TEST_CASE("loss ignores neighbor slices") {
  const auto t0 = smooth_random(64, 70), t1 = smooth_random(64, 71), t2 = smooth_random(64, 72);
  auto out = pack_complex({to_complex(t1, RealImage(64, 64)), to_complex(perturbed(t1, 0.1, 73), RealImage(64, 64)),
                           to_complex(t0, RealImage(64, 64))},
                          true);
  LossConfig cfg;
  const double base = stack_loss({t0, t1, t2}, out, 1, cfg).item();
  CHECK(stack_loss({t2, t1, t0}, out, 1, cfg).item() == base);
  ad::backward(stack_loss({t0, t1, t2}, out, 1, cfg));
  const auto g = out.grad();
  const std::size_t hw = 64 * 64;
  for (std::size_t i = 0; i < 2 * hw; ++i) CHECK(g[i] == 0.0);
  for (std::size_t i = 4 * hw; i < 6 * hw; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("RAdam first step uses the momentum branch") {
  CHECK(radam_rho(1, 0.999) <= 4.0);
  for (std::uint64_t t = 1; t < 100; ++t) CHECK(radam_rho(t + 1, 0.999) > radam_rho(t, 0.999));
  CHECK(radam_rho(100000, 0.999) == doctest::Approx(1999.0).epsilon(1e-9));
  auto p = Tensor::from({1}, {2.0}, true);
  ad::backward(ad::scale(ad::sum(p), 0.7));  // gradient 0.7
  OptimizerState st;
  radam_step({{"p", p}}, st, 0.01);
  // m_1 = 0.1 * 0.7, bias corrected by 1 - 0.9.
  const double m_hat = (0.1 * 0.7) / (1.0 - 0.9);
  CHECK(p.item() == doctest::Approx(2.0 - 0.01 * m_hat).epsilon(1e-15));
  CHECK(st.step == 1);
}

TEST_CASE("RAdam approaches Adam after many steps") {
  auto p = Tensor::from({1}, {3.0}, true);
  OptimizerState st;
  const double lr = 1e-3;
  double m = 0.0, v = 0.0;
  for (std::uint64_t t = 1; t <= 10000; ++t) {
    p.zero_grad();
    ad::backward(ad::scale(ad::mul(p, p), 0.5));  // f = p^2 / 2
    const double g = p.grad()[0];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double adam = -lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    const double before = p.item();
    radam_step({{"p", p}}, st, lr);
    if (t == 10000) CHECK(std::abs((p.item() - before) - adam) <= 0.01 * std::abs(adam));
  }
}

TEST_CASE("RAdam no-op cases and errors") {
  auto p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  const std::vector<double> start(p.data().begin(), p.data().end());
  OptimizerState st;
  for (int i = 0; i < 10; ++i) radam_step({{"p", p}}, st, 0.1);  // zero gradients
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == start);

  ad::backward(ad::sum(ad::mul(p, p)));
  OptimizerState st2;
  for (int i = 0; i < 10; ++i) radam_step({{"p", p}}, st2, 0.0);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == start);
  CHECK(st2.step == 10);

  auto q = Tensor::from({2}, {1.0, 1.0}, true);
  ad::backward(ad::sum(ad::mul(q, Tensor::from({2}, {1.0, std::nan("")}))));
  OptimizerState st3;
  try {
    radam_step({{"p", p}, {"bad.weight", q}}, st3, 0.1);
    FAIL("non-finite gradient accepted");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
  }
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == start);
}

TEST_CASE("one epoch over twelve examples takes two optimizer steps") {
  const std::vector<PhantomVolume> train_set{generate_phantom(1, 64, 12)};
  const std::vector<PhantomVolume> val_set{generate_phantom(2, 64, 1)};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.fine_tune_epochs = 0;
  std::size_t callbacks = 0;
  const auto res = train(Model::init(tiny_model()), train_set, val_set, cfg, [&](const EpochMetrics&) { ++callbacks; });
  CHECK(res.optimizer_steps == 2);
  CHECK(callbacks == 1);
  REQUIRE(res.log.size() == 1);
  CHECK(res.log[0].phase == "train");
  CHECK(res.log[0].lr == 1e-4);
  CHECK(std::isfinite(res.log[0].train_loss));
  CHECK(res.log[0].val_ssim > 0.0);
}

TEST_CASE("training schedule, reproducibility and the metrics log") {
  const std::vector<PhantomVolume> train_set{generate_phantom(3, 64, 4)};
  const std::vector<PhantomVolume> val_set{generate_phantom(4, 64, 1)};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.fine_tune_epochs = 1;
  cfg.batch_size = 3;
  cfg.seed = 17;
  const auto a = train(Model::init(tiny_model()), train_set, val_set, cfg);
  const auto b = train(Model::init(tiny_model()), train_set, val_set, cfg);
  CHECK(metrics_csv(a.log) == metrics_csv(b.log));
  CHECK(encode_checkpoint(a.model) == encode_checkpoint(b.model));
  REQUIRE(a.log.size() == 3);
  CHECK(a.log[2].phase == "finetune");
  CHECK(a.log[2].epoch == 3);
  CHECK(a.log[1].lr == doctest::Approx(1e-4 * 0.95).epsilon(1e-15));
  CHECK(a.log[2].lr == doctest::Approx(1e-4 * 0.95 * 0.95).epsilon(1e-15));
  CHECK(a.optimizer_steps == 6);
  CHECK(metrics_csv(a.log).rfind("epoch,phase,train_loss,val_ssim,val_nmse,lr\n", 0) == 0);

  cfg.seed = 18;
  CHECK(metrics_csv(train(Model::init(tiny_model()), train_set, val_set, cfg).log) != metrics_csv(a.log));
}

TEST_CASE("non-finite loss aborts with the batch index") {
  auto model = Model::init(tiny_model());
  for (double& v : model.blocks[0].head.bias.mutable_data()) v = std::nan("");
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.fine_tune_epochs = 0;
  try {
    train(model, {generate_phantom(1, 64, 2)}, {generate_phantom(2, 64, 1)}, cfg);
    FAIL("training accepted a NaN loss");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
  }
}

TEST_CASE("evaluation helpers") {
  const std::vector<PhantomVolume> vols{generate_phantom(5, 64, 2)};
  EvalOptions opt;
  opt.acceleration = 1.0;
  opt.center_fraction = 1.0;
  const auto full = evaluate(vols, opt);
  REQUIRE(full.size() == 2);
  for (const auto& m : full) {
    CHECK(m.ssim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.nmse < 1e-20);
  }
  opt.acceleration = 4.0;
  opt.center_fraction = 0.0;
  const auto zf = evaluate(vols, opt);
  opt.method = Method::Ista;
  opt.solver.lambda = 1e-3;
  opt.solver.max_iters = 50;
  std::vector<std::vector<double>> traces;
  const auto ista = evaluate(vols, opt, nullptr, &traces);
  CHECK(traces.size() == 2);
  CHECK(traces[0].size() == 51);
  CHECK(summarize(ista).mean_ssim > summarize(zf).mean_ssim);
  CHECK(ista[1].slice == 1);

  opt.method = Method::Adaptive;
  CHECK_THROWS_AS(evaluate(vols, opt), PreconditionError);

  const auto s = summarize({{0, 0, 0.5, 1.0, 0.0}, {0, 1, 0.7, 3.0, 0.0}});
  CHECK(s.mean_ssim == doctest::Approx(0.6));
  CHECK(s.mean_nmse == doctest::Approx(2.0));
  CHECK(s.std_ssim == doctest::Approx(0.1));
}
