#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "acs/classical_cs.hpp"
#include "acs/data.hpp"
#include "acs/network.hpp"
#include "acs/png_writer.hpp"
#include "acs/training.hpp"

#ifndef ACS_VERSION
#define ACS_VERSION "unknown"
#endif

namespace acs::cli {
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kMethods = {"zero-filled", "ista", "fista", "adaptive"};

// Usage error raised from command bodies (maps to exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(const std::string& command, const CLI::App& sub) : start_(utc_now()) {
    j_["command"] = command;
    j_["version"] = ACS_VERSION;
    nlohmann::json flags = nlohmann::json::object();
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_name() == "--help") continue;
      const auto& res = opt->results();
      if (opt->get_expected_min() == 0) {
        flags[opt->get_name()] = opt->count() > 0;
      } else if (!res.empty()) {
        flags[opt->get_name()] = res.size() == 1 ? nlohmann::json(res[0]) : nlohmann::json(res);
      } else {
        flags[opt->get_name()] = opt->get_default_str();
      }
    }
    j_["flags"] = flags;
  }
  void seed(const std::string& name, std::uint64_t v) { j_["seeds"][name] = v; }
  void note(const std::string& key, nlohmann::json v) { j_[key] = std::move(v); }
  void write(const fs::path& path) {
    j_["start"] = start_;
    j_["end"] = utc_now();
    std::ofstream(path) << j_.dump(2) << "\n";
  }

 private:
  nlohmann::json j_;
  std::string start_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Method parse_method(const std::string& m) {
  if (m == "zero-filled") return Method::ZeroFilled;
  if (m == "ista") return Method::Ista;
  if (m == "fista") return Method::Fista;
  if (m == "adaptive") return Method::Adaptive;
  std::string valid;
  for (const auto& s : kMethods) valid += (valid.empty() ? "" : ", ") + s;
  throw UsageError("unknown method '" + m + "' (valid methods: " + valid + ")");
}

void check_compatible(const Model& model, const std::vector<PhantomVolume>& volumes) {
  const std::size_t step = std::size_t{1} << (model.config.scales - 1);
  for (const auto& v : volumes)
    if (v.size % step != 0)
      throw FormatError("checkpoint expects image sizes divisible by " + std::to_string(step) + ", dataset has " +
                            std::to_string(v.size),
                        0);
}

struct GenerateArgs {
  std::string out;
  std::size_t volumes = 1;
  std::size_t slices = 8;
  std::size_t size = 64;
  std::uint64_t seed = 0;
};

struct ReconArgs {
  std::string in;
  std::string method = "zero-filled";
  double accel = 4.0;
  double center_frac = 0.0;
  double lambda = 1e-3;
  std::size_t iters = 200;
  std::size_t wavelet_levels = 3;
  std::string checkpoint;
  std::string out_dir;
  std::uint64_t seed = 0;
  double bg_theta = 0.0;
};

struct TrainArgs {
  std::string data;
  std::size_t epochs = 4;
  std::size_t fine_tune_epochs = 2;
  std::size_t blocks = 5;
  std::size_t base_channels = 16;
  std::size_t scales = 2;
  std::size_t neighbors = 1;
  std::size_t batch = 6;
  double lr = 1e-4;
  double lr_decay = 0.95;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t val_volumes = 0;
  double bg_theta = kDefaultBackgroundTheta;
  std::string init_checkpoint;
};

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::vector<double> accels = {4.0, 8.0};
  std::uint64_t seed = 0;
  bool ista = false;
  std::size_t iters = 200;
  std::uint64_t tune_seed = 1;
};

struct ExportArgs {
  std::string in;
  std::string out;
};

struct ParamsArgs {
  std::size_t blocks = 25;
  std::size_t base_channels = 16;
  std::size_t scales = 2;
  std::size_t neighbors = 1;
};

int cmd_generate(const GenerateArgs& a, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("generate", sub);
  manifest.seed("dataset", a.seed);
  auto volumes = generate_dataset(a.seed, a.volumes, a.size, a.slices);
  save_dataset(a.out, volumes);
  manifest.write(a.out + ".manifest.json");
  out << "wrote " << volumes.size() << " volumes x " << a.slices << " slices (" << a.size << "x" << a.size
      << ") to " << a.out << "\n";
  return kOk;
}

int cmd_recon(const ReconArgs& a, const CLI::App& sub, std::ostream& out) {
  const Method method = parse_method(a.method);
  if (method == Method::Adaptive && a.checkpoint.empty()) throw UsageError("--method adaptive requires --checkpoint");
  Manifest manifest("recon", sub);
  manifest.seed("mask", a.seed);
  const auto volumes = load_dataset(a.in);

  Model model;
  EvalOptions opt;
  opt.method = method;
  opt.acceleration = a.accel;
  opt.center_fraction = a.center_frac;
  opt.seed = a.seed;
  opt.solver.lambda = a.lambda;
  opt.solver.max_iters = a.iters;
  opt.solver.wavelet_levels = a.wavelet_levels;
  if (method == Method::Adaptive) {
    model = load_checkpoint(a.checkpoint);
    if (a.bg_theta > 0.0) model.config.bg_theta = a.bg_theta;
    check_compatible(model, volumes);
    opt.model = &model;
  }

  std::vector<ComplexImage> recons;
  std::vector<std::vector<double>> traces;
  const auto metrics = evaluate(volumes, opt, &recons, &traces);

  fs::create_directories(a.out_dir);
  std::vector<PhantomVolume> out_vols;
  std::size_t k = 0;
  for (const auto& v : volumes) {
    PhantomVolume r;
    r.seed = v.seed;
    r.size = v.size;
    for (std::size_t z = 0; z < v.num_slices(); ++z, ++k) {
      r.slices.push_back(magnitude(recons[k]));
      RealImage ph(v.size, v.size);
      for (std::size_t i = 0; i < ph.size(); ++i) ph[i] = std::arg(recons[k][i]);
      r.phase_maps.push_back(std::move(ph));
    }
    out_vols.push_back(std::move(r));
  }
  save_dataset((fs::path(a.out_dir) / "recon.acsnd").string(), out_vols);

  std::ostringstream csv;
  csv << "slice,ssim,nmse,psnr\n";
  char buf[160];
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, metrics[i].ssim, metrics[i].nmse, metrics[i].psnr);
    csv << buf;
  }
  write_text(fs::path(a.out_dir) / "metrics.csv", csv.str());

  if (!traces.empty()) {
    const auto dir = fs::path(a.out_dir) / "traces";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      std::ostringstream t;
      t << "iteration,objective\n";
      for (std::size_t it = 0; it < traces[i].size(); ++it) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", it, traces[i][it]);
        t << buf;
      }
      std::snprintf(buf, sizeof buf, "slice_%04zu.csv", i);
      write_text(dir / buf, t.str());
    }
  }
  manifest.write(fs::path(a.out_dir) / "manifest.json");

  const auto s = summarize(metrics);
  out << a.method << " accel=" << a.accel << " slices=" << metrics.size() << " ssim=" << fmt("%.4f", s.mean_ssim)
      << " nmse=" << fmt("%.4g", s.mean_nmse) << "\n";
  return kOk;
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  Manifest manifest("train", sub);
  manifest.seed("train", a.seed);
  auto volumes = load_dataset(a.data);
  if (a.val_volumes >= volumes.size()) throw UsageError("--val-volumes must leave at least one training volume");
  std::vector<PhantomVolume> val(volumes.end() - static_cast<long>(a.val_volumes), volumes.end());
  volumes.resize(volumes.size() - a.val_volumes);

  Model model;
  if (!a.init_checkpoint.empty()) {
    model = load_checkpoint(a.init_checkpoint);
  } else {
    ModelConfig mc;
    mc.num_blocks = a.blocks;
    mc.base_channels = a.base_channels;
    mc.scales = a.scales;
    mc.slice_neighbors = a.neighbors;
    mc.bg_theta = a.bg_theta;
    mc.seed = a.seed;
    model = Model::init(mc);
  }
  check_compatible(model, volumes);

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.fine_tune_epochs = a.fine_tune_epochs;
  tc.batch_size = a.batch;
  tc.lr = a.lr;
  tc.lr_decay = a.lr_decay;
  tc.seed = a.seed;
  fs::create_directories(a.out);
  out << "training " << model.parameter_count() << " parameters on " << volumes.size() << " volumes\n";
  auto result = train(std::move(model), volumes, val, tc, [&](const EpochMetrics& e) {
    out << "epoch " << e.epoch << " (" << e.phase << ") loss=" << fmt("%.6f", e.train_loss)
        << " val_ssim=" << fmt("%.4f", e.val_ssim) << " val_nmse=" << fmt("%.4g", e.val_nmse)
        << " lr=" << fmt("%.3g", e.lr) << "\n";
  });
  save_checkpoint((fs::path(a.out) / "checkpoint.acsnw").string(), result.model);
  write_text(fs::path(a.out) / "metrics.csv", metrics_csv(result.log));
  manifest.note("optimizer_steps", result.optimizer_steps);
  manifest.write(fs::path(a.out) / "manifest.json");
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto volumes = load_dataset(a.data);
  const Model model = load_checkpoint(a.checkpoint);
  check_compatible(model, volumes);
  out << "parameters: " << model.parameter_count() << "\n";
  auto line = [&](const std::string& name, double accel, const MetricSummary& s) {
    out << "accel=" << accel << " " << name << " ssim=" << fmt("%.4f", s.mean_ssim) << "+-" << fmt("%.4f", s.std_ssim)
        << " nmse=" << fmt("%.4g", s.mean_nmse) << "+-" << fmt("%.4g", s.std_nmse) << "\n";
  };
  for (double accel : a.accels) {
    EvalOptions opt;
    opt.acceleration = accel;
    opt.seed = a.seed;
    line("zero-filled", accel, summarize(evaluate(volumes, opt)));
    if (a.ista) {
      // Lambda tuning phantoms.
      const auto tuning = generate_dataset(a.tune_seed, 2, volumes.front().size, 4);
      std::vector<TuningCase> cases;
      for (std::size_t v = 0; v < tuning.size(); ++v)
        for (std::size_t z = 0; z < tuning[v].num_slices(); ++z) {
          const auto mask = make_mask(tuning[v].size, accel, default_center_fraction(accel), eval_mask_seed(a.tune_seed, v, z));
          cases.push_back({tuning[v].slices[z], forward(tuning[v].complex_slice(z), mask)});
        }
      SolverConfig sc;
      sc.max_iters = a.iters;
      const auto choice = tune_lambda(cases, default_lambda_grid(), sc);
      opt.method = Method::Ista;
      opt.solver = sc;
      opt.solver.lambda = choice.lambda;
      line("ista(lambda=" + fmt("%g", choice.lambda) + ")", accel, summarize(evaluate(volumes, opt)));
    }
    opt.method = Method::Adaptive;
    opt.model = &model;
    line("adaptive", accel, summarize(evaluate(volumes, opt)));
  }
  return kOk;
}

int cmd_export_png(const ExportArgs& a, std::ostream& out) {
  const auto volumes = load_dataset(a.in);
  fs::create_directories(a.out);
  std::size_t n = 0;
  char name[64];
  for (std::size_t v = 0; v < volumes.size(); ++v)
    for (std::size_t z = 0; z < volumes[v].num_slices(); ++z, ++n) {
      std::snprintf(name, sizeof name, "vol%03zu_slice%03zu.png", v, z);
      write_png((fs::path(a.out) / name).string(), volumes[v].slices[z]);
    }
  out << "wrote " << n << " PNG files to " << a.out << "\n";
  return kOk;
}

int cmd_params(const ParamsArgs& a, std::ostream& out) {
  ModelConfig mc;
  mc.num_blocks = a.blocks;
  mc.base_channels = a.base_channels;
  mc.scales = a.scales;
  mc.slice_neighbors = a.neighbors;
  mc.validate();
  out << parameter_count(mc) << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive compressed-sensing MRI reconstruction toolkit", "acsnet"};
  app.set_version_flag("--version", std::string(ACS_VERSION));
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic phantom dataset");
  generate->add_option("--out", gen.out, "Output dataset file")->required();
  generate->add_option("--volumes", gen.volumes, "Number of volumes")->capture_default_str();
  generate->add_option("--slices", gen.slices, "Slices per volume")->capture_default_str()->check(CLI::PositiveNumber);
  generate->add_option("--size", gen.size, "Image size (64 or 128)")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();

  ReconArgs rec;
  auto* recon = app.add_subcommand("recon", "Reconstruct undersampled acquisitions of a dataset");
  recon->add_option("--in", rec.in, "Input dataset file")->required();
  recon->add_option("--method", rec.method, "zero-filled | ista | fista | adaptive")->capture_default_str();
  recon->add_option("--accel", rec.accel, "Acceleration factor")->capture_default_str();
  recon->add_option("--center-frac", rec.center_frac, "Center fraction (0 = 0.32/accel)")->capture_default_str();
  recon->add_option("--lambda", rec.lambda, "Wavelet L1 weight for ista/fista")->capture_default_str();
  recon->add_option("--iters", rec.iters, "Solver iterations for ista/fista")->capture_default_str();
  recon->add_option("--wavelet-levels", rec.wavelet_levels, "Haar levels for ista/fista")->capture_default_str();
  recon->add_option("--checkpoint", rec.checkpoint, "Weight checkpoint (adaptive)");
  recon->add_option("--out-dir", rec.out_dir, "Output directory")->required();
  recon->add_option("--seed", rec.seed, "Mask seed")->capture_default_str();
  recon->add_option("--bg-theta", rec.bg_theta, "Override the background prior threshold (adaptive)");

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train the unrolled network on a phantom dataset");
  trainc->add_option("--data", tr.data, "Training dataset file")->required();
  trainc->add_option("--epochs", tr.epochs, "Epochs at accelerations 2..10")->capture_default_str();
  trainc->add_option("--fine-tune-epochs", tr.fine_tune_epochs, "Epochs at accelerations 4 and 8")->capture_default_str();
  trainc->add_option("--blocks", tr.blocks, "Number of unrolled blocks")->capture_default_str();
  trainc->add_option("--base-channels", tr.base_channels, "UNet base width")->capture_default_str();
  trainc->add_option("--scales", tr.scales, "UNet scales")->capture_default_str();
  trainc->add_option("--neighbors", tr.neighbors, "Neighbor slices per side")->capture_default_str();
  trainc->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  trainc->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
  trainc->add_option("--lr-decay", tr.lr_decay, "Per-epoch learning rate factor")->capture_default_str();
  trainc->add_option("--seed", tr.seed, "Seed for initialization, shuffling and masks")->capture_default_str();
  trainc->add_option("--out", tr.out, "Output directory")->required();
  trainc->add_option("--val-volumes", tr.val_volumes, "Trailing volumes held out for validation")->capture_default_str();
  trainc->add_option("--bg-theta", tr.bg_theta, "Background prior threshold")->capture_default_str();
  trainc->add_option("--init-checkpoint", tr.init_checkpoint, "Start from these weights");

  EvalArgs ev;
  auto* evalc = app.add_subcommand("eval", "Compare a checkpoint against zero-filled (and ISTA) baselines");
  evalc->add_option("--data", ev.data, "Evaluation dataset file")->required();
  evalc->add_option("--checkpoint", ev.checkpoint, "Weight checkpoint")->required();
  evalc->add_option("--accel", ev.accels, "Acceleration factors")->capture_default_str();
  evalc->add_option("--seed", ev.seed, "Mask seed")->capture_default_str();
  evalc->add_flag("--ista", ev.ista, "Include the lambda-tuned ISTA baseline");
  evalc->add_option("--iters", ev.iters, "ISTA iterations")->capture_default_str();
  evalc->add_option("--tune-seed", ev.tune_seed, "Seed of the lambda tuning phantoms")->capture_default_str();

  ExportArgs ex;
  auto* exportc = app.add_subcommand("export-png", "Write every slice magnitude of a dataset as PNG");
  exportc->add_option("--in", ex.in, "Dataset file")->required();
  exportc->add_option("--out", ex.out, "Output directory")->required();

  ParamsArgs pa;
  auto* paramsc = app.add_subcommand("params", "Print the trainable parameter count of a configuration");
  paramsc->add_option("--blocks", pa.blocks)->capture_default_str();
  paramsc->add_option("--base-channels", pa.base_channels)->capture_default_str();
  paramsc->add_option("--scales", pa.scales)->capture_default_str();
  paramsc->add_option("--neighbors", pa.neighbors)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) return cmd_generate(gen, *generate, out);
    if (*recon) return cmd_recon(rec, *recon, out);
    if (*trainc) return cmd_train(tr, *trainc, out);
    if (*evalc) return cmd_eval(ev, out);
    if (*exportc) return cmd_export_png(ex, out);
    if (*paramsc) return cmd_params(pa, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace acs::cli
