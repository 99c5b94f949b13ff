#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acs/classical_cs.hpp"
#include "acs/data.hpp"
#include "acs/metrics.hpp"
#include "acs/network.hpp"
#include "acs/tensor.hpp"

namespace acs {

struct LossConfig {
  double alpha = 0.84;
  SsimParams ssim;
};

// Differentiable counterparts of ssim()/ms_ssim(). `y` is [1,1,H,W]; the
// target is a constant. Dynamic range follows SsimParams.
ad::Tensor ssim_tensor(const RealImage& t, const ad::Tensor& y, const SsimParams& p = {});
ad::Tensor ms_ssim_tensor(const RealImage& t, const ad::Tensor& y, const SsimParams& p = {});

/// alpha * (1 - MS-SSIM(t, |x|)) + (1 - alpha) * mean|t - |x||, x = [1,2,H,W].
ad::Tensor reconstruction_loss(const RealImage& t, const ad::Tensor& x_center, const LossConfig& cfg);
/// Loss of a packed stack output supervised on the center slice only.
ad::Tensor stack_loss(const std::vector<RealImage>& targets, const ad::Tensor& output, std::size_t center,
                      const LossConfig& cfg);

/// RAdam moment buffers and hyperparameters.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Length of the approximated SMA at step t.
double radam_rho(std::uint64_t t, double beta2);

/// One RAdam update of every parameter from its accumulated gradient.
/// Throws NumericalError naming the parameter if any gradient is non-finite;
/// no parameter is modified in that case.
void radam_step(const std::vector<std::pair<std::string, ad::Tensor>>& params, OptimizerState& state, double lr);

struct TrainConfig {
  std::size_t epochs = 4;
  std::size_t fine_tune_epochs = 2;
  std::size_t batch_size = 6;
  double lr = 1e-4;
  double lr_decay = 0.95;  // multiplicative, per epoch
  std::uint64_t seed = 0;
  std::vector<double> train_accelerations = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> fine_tune_accelerations = {4, 8};
  double val_acceleration = 4.0;
  LossConfig loss;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based, counted across both phases
  std::string phase;      // "train" or "finetune"
  double train_loss = 0.0;
  double val_ssim = 0.0;
  double val_nmse = 0.0;
  double lr = 0.0;
};

/// One supervised 2.5D sample: an acquisition per stack slice sharing one
/// mask, with per-slice magnitude targets.
struct TrainExample {
  std::vector<KSpaceData> kspace;
  std::vector<RealImage> targets;
  std::size_t center = 0;
};

TrainExample make_example(const PhantomVolume& volume, std::size_t slice, std::size_t neighbors, double acceleration,
                          std::uint64_t mask_seed);

/// Mask seed shared by every method when evaluating slice z of volume v.
std::uint64_t eval_mask_seed(std::uint64_t seed, std::size_t volume, std::size_t slice);

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> log;
  std::size_t optimizer_steps = 0;
};

/// Two-phase schedule: `epochs` at accelerations drawn from
/// train_accelerations, then `fine_tune_epochs` restricted to
/// fine_tune_accelerations. Throws NumericalError naming the batch on a
/// non-finite loss.
TrainResult train(Model model, const std::vector<PhantomVolume>& train_set, const std::vector<PhantomVolume>& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {});

std::string metrics_csv(const std::vector<EpochMetrics>& log);

struct SliceMetrics {
  std::size_t volume = 0;
  std::size_t slice = 0;
  double ssim = 0.0;
  double nmse = 0.0;
  double psnr = 0.0;
};

struct MetricSummary {
  double mean_ssim = 0.0;
  double std_ssim = 0.0;
  double mean_nmse = 0.0;
  double std_nmse = 0.0;
};

MetricSummary summarize(const std::vector<SliceMetrics>& m);
SliceMetrics score(const RealImage& target, const ComplexImage& recon, std::size_t volume, std::size_t slice);

enum class Method { ZeroFilled, Ista, Fista, Adaptive };

struct EvalOptions {
  Method method = Method::ZeroFilled;
  double acceleration = 4.0;
  double center_fraction = 0.0;  // 0 selects default_center_fraction
  std::uint64_t seed = 0;
  SolverConfig solver;
  const Model* model = nullptr;  // required for Method::Adaptive
};

/// Reconstruct every slice and score it against the ground-truth magnitude.
/// `recons` receives the reconstructions in (volume, slice) order if non-null.
std::vector<SliceMetrics> evaluate(const std::vector<PhantomVolume>& volumes, const EvalOptions& opt,
                                   std::vector<ComplexImage>* recons = nullptr,
                                   std::vector<std::vector<double>>* traces = nullptr);

}  // namespace acs
