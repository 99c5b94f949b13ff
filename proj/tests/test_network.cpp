#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "acs/data.hpp"
#include "acs/network.hpp"
#include "acs/ops.hpp"
#include "oracles.hpp"

using namespace acs;
using ad::Tensor;

namespace {

ModelConfig tiny_config(std::size_t blocks = 2, std::size_t neighbors = 1, std::uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.num_blocks = blocks;
  cfg.base_channels = 2;
  cfg.scales = 2;
  cfg.slice_neighbors = neighbors;
  cfg.seed = seed;
  return cfg;
}

std::vector<KSpaceData> phantom_stack(std::size_t size, std::size_t slices, std::uint64_t seed) {
  const auto vol = generate_phantom(seed, size < 64 ? 64 : size, slices);
  std::vector<KSpaceData> out;
  for (std::size_t s = 0; s < slices; ++s) {
    ComplexImage img = vol.complex_slice(s);
    if (size < 64) {
      // Box-average down to the requested size.
      const std::size_t f = 64 / size;
      ComplexImage small(size, size);
      for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
          cplx acc{};
          for (std::size_t i = 0; i < f; ++i)
            for (std::size_t j = 0; j < f; ++j) acc += img(r * f + i, c * f + j);
          small(r, c) = acc / static_cast<double>(f * f);
        }
      img = small;
    }
    out.push_back(forward(img, make_mask(size, 2.0, 0.25, seed + s)));
  }
  return out;
}

PriorTensors random_priors(std::size_t slices, std::size_t n, std::uint64_t seed) {
  return {Tensor::from({1, 2 * slices, n, n}, oracle::random_values(2 * slices * n * n, seed)),
          Tensor::from({1, 2 * slices, n, n}, oracle::random_values(2 * slices * n * n, seed + 1)),
          Tensor::from({1, slices, n, n}, oracle::random_values(slices * n * n, seed + 2, 0.0, 1.0))};
}

// Zero-initialized biases put pre-activations exactly on the leaky_relu kink.
void randomize_biases(Model& model, std::uint64_t seed) {
  for (auto& [name, t] : model.named_parameters())
    if (name.find("bias") != std::string::npos) {
      const auto r = oracle::random_values(t.data().size(), seed++, -0.1, 0.1);
      std::copy(r.begin(), r.end(), t.mutable_data().begin());
    }
}

// Random-weighted sum so every output entry contributes.
Tensor probe_loss(const Tensor& out, std::uint64_t seed) {
  return ad::sum(ad::mul(out, Tensor::from(out.shape(), oracle::random_values(out.data().size(), seed))));
}

}  // namespace

TEST_CASE("stack_slices examples") {
  std::vector<ComplexImage> vol;
  for (int i = 0; i < 4; ++i) vol.emplace_back(2, 2, cplx(i, 0));
  const auto one = stack_slices(vol, 2, 0);
  REQUIRE(one.slices.size() == 1);
  CHECK(one.slices[0] == vol[2]);
  CHECK(stack_indices(4, 0, 1) == std::vector<std::size_t>{0, 0, 1});
  CHECK(stack_indices(4, 3, 1) == std::vector<std::size_t>{2, 3, 3});
  CHECK(stack_indices(4, 2, 1) == std::vector<std::size_t>{1, 2, 3});
  CHECK(stack_indices(1, 0, 2) == std::vector<std::size_t>{0, 0, 0, 0, 0});
  const auto mid = stack_slices(vol, 1, 1);
  CHECK(mid.center == 1);
  CHECK(mid.slices[0] == vol[0]);
  CHECK(mid.slices[2] == vol[2]);
  CHECK_THROWS_AS(stack_slices({}, 0, 1), PreconditionError);
  CHECK_THROWS_AS(stack_slices(vol, 4, 1), PreconditionError);
}

TEST_CASE("zeroed output layers make blocks the identity") {
  auto model = Model::init(tiny_config(3));
  model.zero_output_layers();
  const auto x = Tensor::from({1, 6, 8, 8}, oracle::random_values(6 * 64, 1));
  const auto out = block_forward(x, random_priors(3, 8, 2), model.blocks[0], model.config);
  CHECK(std::equal(out.data().begin(), out.data().end(), x.data().begin(), x.data().end()));

  const auto b = phantom_stack(16, 3, 4);
  const auto rec = model_forward(b, model);
  std::vector<ComplexImage> zf;
  for (const auto& k : b) zf.push_back(zero_filled(k));
  const auto expect = pack_complex(zf);
  CHECK(std::equal(rec.data().begin(), rec.data().end(), expect.data().begin(), expect.data().end()));
}

TEST_CASE("huge thresholds cut the input out of the residual") {
  auto model = Model::init(tiny_config(1));
  auto& blk = model.blocks[0];
  for (auto& t : blk.raw_thresholds)
    for (double& v : t.mutable_data()) v = 1e6;
  // Nonzero biases so the residual is a nontrivial constant.
  std::uint64_t seed = 50;
  for (auto& [name, t] : blk.named_parameters(""))
    if (name.find("bias") != std::string::npos) {
      const auto r = oracle::random_values(t.data().size(), seed++);
      std::copy(r.begin(), r.end(), t.mutable_data().begin());
    }
  const auto x1 = Tensor::from({1, 6, 8, 8}, oracle::random_values(384, 1));
  const auto x2 = Tensor::from({1, 6, 8, 8}, oracle::random_values(384, 2));
  const auto r1 = ad::sub(block_forward(x1, random_priors(3, 8, 10), blk, model.config), x1);
  const auto r2 = ad::sub(block_forward(x2, random_priors(3, 8, 20), blk, model.config), x2);
  double diff = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < r1.data().size(); ++i) {
    diff = std::max(diff, std::abs(r1.data()[i] - r2.data()[i]));
    mag = std::max(mag, std::abs(r1.data()[i]));
  }
  CHECK(diff < 1e-12);
  CHECK(mag > 0.0);
}

TEST_CASE("block gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u}) {
    auto cfg = tiny_config(1, 1, seed);
    auto model = Model::init(cfg);
    randomize_biases(model, seed + 40);
    const auto x = Tensor::from({1, 6, 8, 8}, oracle::random_values(384, seed + 10), true);
    const auto pri = random_priors(3, 8, seed + 20);
    auto loss_of = [&] { return probe_loss(block_forward(x, pri, model.blocks[0], cfg), seed + 30); };
    model.zero_grad();
    ad::backward(loss_of());
    std::vector<std::pair<std::string, Tensor>> targets = model.named_parameters();
    targets.emplace_back("input", x);
    for (auto& [name, t] : targets) {
      const auto analytic = t.grad();
      Tensor tt = t;
      const auto numeric = oracle::finite_difference([&] { return loss_of().item(); }, tt.mutable_data());
      INFO(name);
      CHECK(oracle::relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("model gradients match finite differences through the data-consistency path") {
  auto cfg = tiny_config(2, 1, 9);
  auto model = Model::init(cfg);
  randomize_biases(model, 60);
  const auto b = phantom_stack(8, 3, 5);
  auto loss_of = [&] { return probe_loss(model_forward(b, model), 77); };
  model.zero_grad();
  ad::backward(loss_of());
  for (auto& [name, t] : model.named_parameters()) {
    const auto analytic = t.grad();
    Tensor tt = t;
    const auto numeric = oracle::finite_difference([&] { return loss_of().item(); }, tt.mutable_data(), 1e-5);
    INFO(name);
    CHECK(oracle::relative_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("parameter count formula matches the model") {
  for (std::size_t blocks : {1, 3})
    for (std::size_t base : {2, 5, 16})
      for (std::size_t scales : {1, 2, 3})
        for (std::size_t nb : {0, 1, 2}) {
          ModelConfig cfg;
          cfg.num_blocks = blocks;
          cfg.base_channels = base;
          cfg.scales = scales;
          cfg.slice_neighbors = nb;
          CHECK(Model::init(cfg).parameter_count() == parameter_count(cfg));
        }
}

TEST_CASE("25-block configuration at width 114 is about 33M parameters") {
  ModelConfig cfg;
  cfg.num_blocks = 25;
  std::size_t best_width = 0, best = 0;
  for (std::size_t w = 1; w <= 256; ++w) {
    cfg.base_channels = w;
    const std::size_t n = parameter_count(cfg);
    if (best_width == 0 || std::llabs(static_cast<long long>(n) - 33'000'000) <
                               std::llabs(static_cast<long long>(best) - 33'000'000)) {
      best_width = w;
      best = n;
    }
  }
  std::printf("25 blocks, base width %zu, 2 scales, 3-slice stack: %zu trainable parameters\n", best_width, best);
  CHECK(best_width == 114);
  CHECK(std::llabs(static_cast<long long>(best) - 33'000'000) < 500'000);
}

TEST_CASE("initialization and forward are deterministic") {
  const auto a = Model::init(tiny_config(2, 1, 42));
  const auto b = Model::init(tiny_config(2, 1, 42));
  CHECK(encode_checkpoint(a) == encode_checkpoint(b));
  const auto c = Model::init(tiny_config(2, 1, 43));
  CHECK(encode_checkpoint(a) != encode_checkpoint(c));

  const auto k = phantom_stack(16, 3, 1);
  const auto o1 = model_forward(k, a), o2 = model_forward(k, b);
  CHECK(std::equal(o1.data().begin(), o1.data().end(), o2.data().begin(), o2.data().end()));
  CHECK(o1.shape() == ad::Shape{1, 6, 16, 16});
}

TEST_CASE("initial thresholds and weight ranges") {
  const auto m = Model::init(tiny_config(1));
  for (const auto& t : m.blocks[0].raw_thresholds)
    for (double v : t.data()) CHECK(std::log1p(std::exp(v)) == doctest::Approx(0.01).epsilon(1e-12));
  for (const auto& [name, t] : m.named_parameters()) {
    if (name.find("weight") == std::string::npos) continue;
    const double s = std::sqrt(1.0 / static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3)));
    for (double v : t.data()) CHECK(std::abs(v) <= s);
  }
}

TEST_CASE("blocks do not depend on later weights") {
  auto model = Model::init(tiny_config(3));
  const auto b = phantom_stack(16, 3, 2);
  auto truncated = model;
  truncated.config.num_blocks = 2;
  truncated.blocks.pop_back();
  const auto before = model_forward(b, truncated);
  // Perturb the last block in the shared weights; the first two blocks must be unaffected.
  for (auto& [name, t] : model.blocks[2].named_parameters(""))
    for (double& v : t.mutable_data()) v += 0.5;
  const auto after = model_forward(b, truncated);
  CHECK(std::equal(before.data().begin(), before.data().end(), after.data().begin(), after.data().end()));
  const auto full_a = model_forward(b, model);
  for (double& v : model.blocks[2].head.bias.mutable_data()) v += 1.0;
  const auto full_b = model_forward(b, model);
  CHECK_FALSE(std::equal(full_a.data().begin(), full_a.data().end(), full_b.data().begin(), full_b.data().end()));
}

TEST_CASE("block shape errors") {
  auto model = Model::init(tiny_config(1));
  const auto x = Tensor::from({1, 6, 8, 8}, oracle::random_values(384, 1));
  CHECK_THROWS_AS(block_forward(x, random_priors(2, 8, 1), model.blocks[0], model.config), PreconditionError);
  const auto odd = Tensor::from({1, 6, 7, 7}, oracle::random_values(6 * 49, 1));
  CHECK_THROWS_AS(block_forward(odd, random_priors(3, 7, 1), model.blocks[0], model.config), PreconditionError);
  CHECK_THROWS_AS(model_forward(phantom_stack(16, 1, 1), model), PreconditionError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto model = Model::init(tiny_config(2, 1, 7));
  for (auto& [name, t] : model.named_parameters())
    for (double& v : t.mutable_data()) v = std::nextafter(v * 3.0 + 1e-300, 1.0);
  const auto bytes = encode_checkpoint(model);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.config == model.config);
  CHECK(encode_checkpoint(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "acs_test_ckpt.acsnw";
  save_checkpoint(path.string(), model);
  CHECK(encode_checkpoint(load_checkpoint(path.string())) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint format errors") {
  const auto model = Model::init(tiny_config(1));
  const auto bytes = encode_checkpoint(model);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);

  bad = bytes;
  bad[6] += 1;  // version
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);

  bad.assign(bytes.begin(), bytes.end() - 3);
  try {
    decode_checkpoint(bad);
    FAIL("truncated checkpoint accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() <= bytes.size());
  }

  // Tensors from one configuration behind the header of another.
  auto other_cfg = model.config;
  other_cfg.base_channels = 3;
  const auto other = encode_checkpoint(Model::init(other_cfg));
  const std::size_t head_a = 12 + to_json(model.config).size();
  const std::size_t head_b = 12 + to_json(other_cfg).size();
  std::vector<std::uint8_t> mixed(other.begin(), other.begin() + static_cast<std::ptrdiff_t>(head_b));
  mixed.insert(mixed.end(), bytes.begin() + static_cast<std::ptrdiff_t>(head_a), bytes.end());
  CHECK_THROWS_AS(decode_checkpoint(mixed), FormatError);

  // Header only: every tensor missing.
  std::vector<std::uint8_t> header(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(head_a));
  CHECK_THROWS_AS(decode_checkpoint(header), FormatError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/acs.acsnw"), std::runtime_error);
}

TEST_CASE("model config JSON round trip and validation") {
  auto cfg = tiny_config(4, 2, 123456789012345ULL);
  cfg.leaky_slope = 0.2;
  cfg.bg_theta = 0.3;
  CHECK(model_config_from_json(to_json(cfg)) == cfg);
  auto bad = cfg;
  bad.num_blocks = 0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.scales = 0;
  CHECK_THROWS(bad.validate());
}
