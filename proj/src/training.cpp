#include "acs/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "acs/ops.hpp"
#include "acs/rng.hpp"

namespace acs {

using ad::Tensor;

namespace {

Tensor image_tensor(const RealImage& img) {
  return Tensor::from({1, 1, img.height(), img.width()}, img.values());
}

RealImage tensor_image(const Tensor& t) {
  return RealImage(t.dim(2), t.dim(3), std::vector<double>(t.data().begin(), t.data().end()));
}

Tensor window_kernel(const SsimParams& p) {
  const auto g = gaussian_window(p.window, p.gaussian_sigma);
  std::vector<double> k(g.size() * g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) k[i * g.size() + j] = g[i] * g[j];
  return Tensor::from({1, 1, g.size(), g.size()}, std::move(k));
}

struct TensorMeans {
  Tensor ssim;
  Tensor cs;
};

double tensor_mean(const Tensor& x) {
  const auto d = x.data();
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

TensorMeans ssim_means(const Tensor& t, const Tensor& y, const Tensor& win, double c1, double c2) {
  const Tensor zb = Tensor::zeros({1});
  auto filt = [&](const Tensor& v) { return ad::conv2d(v, win, zb, 1, 0); };
  // Second moments are taken about the image means, held constant.
  const double ct = tensor_mean(t);
  const double cy = tensor_mean(y);
  const Tensor ts = ad::add_scalar(t, -ct);
  const Tensor ys = ad::add_scalar(y, -cy);
  const Tensor mts = filt(ts);
  const Tensor mys = filt(ys);
  const Tensor vt = ad::sub(filt(ad::mul(ts, ts)), ad::mul(mts, mts));
  const Tensor vy = ad::sub(filt(ad::mul(ys, ys)), ad::mul(mys, mys));
  const Tensor cv = ad::sub(filt(ad::mul(ts, ys)), ad::mul(mts, mys));
  const Tensor mt = ad::add_scalar(mts, ct);
  const Tensor my = ad::add_scalar(mys, cy);
  const Tensor lum = ad::div(ad::add_scalar(ad::scale(ad::mul(mt, my), 2.0), c1),
                             ad::add_scalar(ad::add(ad::mul(mt, mt), ad::mul(my, my)), c1));
  const Tensor cs = ad::div(ad::add_scalar(ad::scale(cv, 2.0), c2), ad::add_scalar(ad::add(vt, vy), c2));
  return {ad::mean(ad::mul(lum, cs)), ad::mean(cs)};
}

std::pair<double, double> stability_constants(const RealImage& t, const Tensor& y, const SsimParams& p) {
  const double L = dynamic_range(t, tensor_image(y), p.union_range);
  return {(p.k1 * L) * (p.k1 * L), (p.k2 * L) * (p.k2 * L)};
}

void check_target(const RealImage& t, const Tensor& y) {
  require(y.rank() == 4 && y.dim(0) == 1 && y.dim(1) == 1, "ssim: prediction must be [1,1,H,W]");
  require(y.dim(2) == t.height() && y.dim(3) == t.width(), "ssim: target and prediction differ in shape");
}

}  // namespace

Tensor ssim_tensor(const RealImage& t, const Tensor& y, const SsimParams& p) {
  check_target(t, y);
  check_ssim_geometry(t, t, p, 1);
  const auto [c1, c2] = stability_constants(t, y, p);
  return ssim_means(image_tensor(t), y, window_kernel(p), c1, c2).ssim;
}

Tensor ms_ssim_tensor(const RealImage& t, const Tensor& y, const SsimParams& p) {
  check_target(t, y);
  check_ssim_geometry(t, t, p, p.msssim_scales);
  const auto w = resolve_scale_weights(p);
  const auto [c1, c2] = stability_constants(t, y, p);
  const Tensor win = window_kernel(p);
  Tensor a = image_tensor(t);
  Tensor b = y;
  Tensor result;
  for (std::size_t j = 0; j < p.msssim_scales; ++j) {
    const bool last = j + 1 == p.msssim_scales;
    const auto m = ssim_means(a, b, win, c1, c2);
    Tensor term = ad::pow_scalar(ad::relu(last ? m.ssim : m.cs), w[j]);
    result = result.defined() ? ad::mul(result, term) : term;
    if (!last) {
      a = ad::downsample2(a);
      b = ad::downsample2(b);
    }
  }
  return result;
}

Tensor reconstruction_loss(const RealImage& t, const Tensor& x_center, const LossConfig& cfg) {
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "loss: alpha must lie in [0, 1]");
  const Tensor mag = ad::complex_magnitude(x_center);
  require(mag.dim(2) == t.height() && mag.dim(3) == t.width(), "loss: target and reconstruction differ in shape");
  const Tensor l1 = ad::mean(ad::abs(ad::sub(mag, image_tensor(t))));
  if (cfg.alpha == 0.0) return l1;
  const Tensor dissim = ad::add_scalar(ad::scale(ms_ssim_tensor(t, mag, cfg.ssim), -1.0), 1.0);
  if (cfg.alpha == 1.0) return dissim;
  return ad::add(ad::scale(dissim, cfg.alpha), ad::scale(l1, 1.0 - cfg.alpha));
}

Tensor stack_loss(const std::vector<RealImage>& targets, const Tensor& output, std::size_t center,
                  const LossConfig& cfg) {
  require(center < targets.size() && output.dim(1) == 2 * targets.size(),
          "stack_loss: output channels do not match the target stack");
  return reconstruction_loss(targets[center], ad::slice_channels(output, 2 * center, 2), cfg);
}

double radam_rho(std::uint64_t t, double beta2) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(t));
  return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
}

void radam_step(const std::vector<std::pair<std::string, Tensor>>& params, OptimizerState& state, double lr) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& [name, p] : params) {
    auto g = p.grad();
    for (double v : g)
      if (!std::isfinite(v)) throw NumericalError("radam_step: non-finite gradient in parameter " + name);
    grads.push_back(std::move(g));
  }
  if (state.first_moment.empty()) {
    for (const auto& [name, p] : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  require(state.first_moment.size() == params.size(), "radam_step: optimizer state does not match parameters");

  const std::uint64_t t = ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho = radam_rho(t, b2);
  const bool rectified = rho > 4.0;
  const double r = rectified ? std::sqrt((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                             : 0.0;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor param = params[i].second;
    auto theta = param.mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    require(m.size() == theta.size(), "radam_step: moment buffer size mismatch for " + params[i].first);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grads[i][j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / bias1;
      if (rectified) {
        const double v_hat = std::sqrt(v[j] / bias2);
        theta[j] -= lr * r * m_hat / (v_hat + state.epsilon);
      } else {
        theta[j] -= lr * m_hat;
      }
    }
  }
}

TrainExample make_example(const PhantomVolume& volume, std::size_t slice, std::size_t neighbors, double acceleration,
                          std::uint64_t mask_seed) {
  const auto mask = make_mask(volume.size, acceleration, default_center_fraction(acceleration), mask_seed);
  TrainExample ex;
  for (std::size_t i : stack_indices(volume.num_slices(), slice, neighbors)) {
    ex.kspace.push_back(forward(volume.complex_slice(i), mask));
    ex.targets.push_back(volume.slices[i]);
  }
  ex.center = neighbors;
  return ex;
}

std::uint64_t eval_mask_seed(std::uint64_t seed, std::size_t volume, std::size_t slice) {
  return derive_seed(derive_seed(seed, volume), slice);
}

namespace {

struct SliceRef {
  std::size_t volume;
  std::size_t slice;
};

std::vector<SliceRef> enumerate(const std::vector<PhantomVolume>& set) {
  std::vector<SliceRef> refs;
  for (std::size_t v = 0; v < set.size(); ++v)
    for (std::size_t z = 0; z < set[v].num_slices(); ++z) refs.push_back({v, z});
  return refs;
}

// Stream tags separating the independent random streams of a run.
constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;
constexpr std::uint64_t kMaskTag = 0x4d41534bULL;
constexpr std::uint64_t kValTag = 0x56414cULL;

}  // namespace

TrainResult train(Model model, const std::vector<PhantomVolume>& train_set, const std::vector<PhantomVolume>& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch) {
  auto refs = enumerate(train_set);
  if (refs.empty()) throw ParameterError("train: empty training set");
  if (cfg.batch_size < 1) throw ParameterError("train: batch size must be positive");
  if (cfg.train_accelerations.empty() || cfg.fine_tune_accelerations.empty())
    throw ParameterError("train: acceleration sets must be non-empty");

  TrainResult result;
  OptimizerState opt;
  const auto params = model.named_parameters();
  const std::size_t neighbors = model.config.slice_neighbors;
  const std::size_t total_epochs = cfg.epochs + cfg.fine_tune_epochs;
  std::size_t batch_index = 0;

  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    const bool fine_tune = epoch >= cfg.epochs;
    const auto& accels = fine_tune ? cfg.fine_tune_accelerations : cfg.train_accelerations;
    const double lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));

    CounterRng shuffle(derive_seed(cfg.seed, kShuffleTag + epoch));
    std::vector<std::size_t> order(refs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ref = refs[order[i]];
        CounterRng draw(derive_seed(derive_seed(cfg.seed, kMaskTag + epoch), order[i]));
        const double accel = accels[draw.below(accels.size())];
        const auto ex = make_example(train_set[ref.volume], ref.slice, neighbors, accel, draw.next_u64());
        const Tensor out = model_forward(ex.kspace, model);
        const Tensor loss = stack_loss(ex.targets, out, ex.center, cfg.loss);
        if (!std::isfinite(loss.item()))
          throw NumericalError("train: non-finite loss in batch " + std::to_string(batch_index));
        ad::backward(ad::scale(loss, inv));
        loss_sum += loss.item();
      }
      radam_step(params, opt, lr);
      model.zero_grad();
      ++result.optimizer_steps;
    }

    EpochMetrics em;
    em.epoch = epoch + 1;
    em.phase = fine_tune ? "finetune" : "train";
    em.train_loss = loss_sum / static_cast<double>(refs.size());
    em.lr = lr;
    if (!val_set.empty()) {
      EvalOptions eo;
      eo.method = Method::Adaptive;
      eo.acceleration = cfg.val_acceleration;
      eo.seed = derive_seed(cfg.seed, kValTag);
      eo.model = &model;
      const auto s = summarize(evaluate(val_set, eo));
      em.val_ssim = s.mean_ssim;
      em.val_nmse = s.mean_nmse;
    } else {
      em.val_ssim = em.val_nmse = std::nan("");
    }
    result.log.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  result.model = std::move(model);
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::string out = "epoch,phase,train_loss,val_ssim,val_nmse,lr\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.phase.c_str(), e.train_loss,
                  e.val_ssim, e.val_nmse, e.lr);
    out += buf;
  }
  return out;
}

MetricSummary summarize(const std::vector<SliceMetrics>& m) {
  MetricSummary s;
  if (m.empty()) return s;
  const auto n = static_cast<double>(m.size());
  for (const auto& x : m) {
    s.mean_ssim += x.ssim;
    s.mean_nmse += x.nmse;
  }
  s.mean_ssim /= n;
  s.mean_nmse /= n;
  for (const auto& x : m) {
    s.std_ssim += (x.ssim - s.mean_ssim) * (x.ssim - s.mean_ssim);
    s.std_nmse += (x.nmse - s.mean_nmse) * (x.nmse - s.mean_nmse);
  }
  s.std_ssim = std::sqrt(s.std_ssim / n);
  s.std_nmse = std::sqrt(s.std_nmse / n);
  return s;
}

SliceMetrics score(const RealImage& target, const ComplexImage& recon, std::size_t volume, std::size_t slice) {
  const auto mag = magnitude(recon);
  return {volume, slice, ssim(target, mag), nmse(target, mag), psnr(target, mag)};
}

std::vector<SliceMetrics> evaluate(const std::vector<PhantomVolume>& volumes, const EvalOptions& opt,
                                   std::vector<ComplexImage>* recons, std::vector<std::vector<double>>* traces) {
  if (opt.method == Method::Adaptive) require(opt.model != nullptr, "evaluate: adaptive method requires a model");
  const double cf = opt.center_fraction > 0.0 ? opt.center_fraction : default_center_fraction(opt.acceleration);
  std::vector<SliceMetrics> out;
  for (std::size_t v = 0; v < volumes.size(); ++v) {
    const auto& vol = volumes[v];
    for (std::size_t z = 0; z < vol.num_slices(); ++z) {
      const std::uint64_t seed = eval_mask_seed(opt.seed, v, z);
      ComplexImage recon;
      if (opt.method == Method::Adaptive) {
        const auto mask = make_mask(vol.size, opt.acceleration, cf, seed);
        std::vector<KSpaceData> b;
        for (std::size_t i : stack_indices(vol.num_slices(), z, opt.model->config.slice_neighbors))
          b.push_back(forward(vol.complex_slice(i), mask));
        recon = std::move(reconstruct(b, *opt.model).slices[opt.model->config.slice_neighbors]);
      } else {
        const auto b = forward(vol.complex_slice(z), make_mask(vol.size, opt.acceleration, cf, seed));
        if (opt.method == Method::ZeroFilled) {
          recon = zero_filled(b);
        } else {
          SolverConfig sc = opt.solver;
          sc.accelerated = opt.method == Method::Fista;
          auto res = ista_solve(b, sc);
          recon = std::move(res.image);
          if (traces) traces->push_back(std::move(res.objective_trace));
        }
      }
      out.push_back(score(vol.slices[z], recon, v, z));
      if (recons) recons->push_back(std::move(recon));
    }
  }
  return out;
}

}  // namespace acs
