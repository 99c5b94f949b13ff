#include "acs/network.hpp"

#include <cmath>
#include <json.hpp>
#include <map>

#include "acs/binary_io.hpp"
#include "acs/ops.hpp"
#include "acs/rng.hpp"

namespace acs {

using ad::Tensor;

void ModelConfig::validate() const {
  if (num_blocks < 1) throw ParameterError("ModelConfig: num_blocks must be at least 1");
  if (scales < 1) throw ParameterError("ModelConfig: scales must be at least 1");
  if (base_channels < 1) throw ParameterError("ModelConfig: base_channels must be at least 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ParameterError("ModelConfig: leaky_slope must lie in (0,1)");
  if (!(bg_theta > 0.0 && bg_theta <= 1.0)) throw ParameterError("ModelConfig: bg_theta must lie in (0,1]");
}

std::string to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["num_blocks"] = cfg.num_blocks;
  j["base_channels"] = cfg.base_channels;
  j["scales"] = cfg.scales;
  j["slice_neighbors"] = cfg.slice_neighbors;
  j["leaky_slope"] = cfg.leaky_slope;
  j["bg_theta"] = cfg.bg_theta;
  j["seed"] = cfg.seed;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig cfg;
  cfg.num_blocks = j.at("num_blocks").get<std::size_t>();
  cfg.base_channels = j.at("base_channels").get<std::size_t>();
  cfg.scales = j.at("scales").get<std::size_t>();
  cfg.slice_neighbors = j.at("slice_neighbors").get<std::size_t>();
  cfg.leaky_slope = j.at("leaky_slope").get<double>();
  cfg.bg_theta = j.at("bg_theta").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

std::vector<std::pair<std::string, Tensor>> BlockWeights::named_parameters(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto conv = [&](const std::string& name, const ConvLayer& l) {
    out.emplace_back(name + ".weight", l.weight);
    out.emplace_back(name + ".bias", l.bias);
  };
  for (std::size_t s = 0; s < encoder.size(); ++s) {
    const std::string base = prefix + "enc" + std::to_string(s);
    conv(base + ".conv0", encoder[s][0]);
    conv(base + ".conv1", encoder[s][1]);
    out.emplace_back(base + ".threshold", raw_thresholds[s]);
  }
  for (std::size_t s = 0; s < decoder.size(); ++s) {
    const std::string base = prefix + "dec" + std::to_string(s);
    conv(base + ".conv0", decoder[s][0]);
    conv(base + ".conv1", decoder[s][1]);
  }
  conv(prefix + "head", head);
  return out;
}

namespace {

// Raw threshold whose softplus is 0.01.
const double kInitialRawThreshold = std::log(std::expm1(0.01));

ConvLayer make_conv(std::size_t cout, std::size_t cin, std::size_t k, std::uint64_t seed) {
  const std::size_t fan_in = cin * k * k;
  const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  CounterRng rng(seed);
  std::vector<double> w(cout * fan_in);
  for (double& v : w) v = rng.uniform(-s, s);
  return {Tensor::from({cout, cin, k, k}, std::move(w), true), Tensor::zeros({cout}, true)};
}

}  // namespace

Model Model::init(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.config = cfg;
  const std::size_t slices = cfg.stack_size();
  std::uint64_t tag = 0;
  auto next_seed = [&] { return derive_seed(cfg.seed, tag++); };
  for (std::size_t k = 0; k < cfg.num_blocks; ++k) {
    BlockWeights b;
    for (std::size_t s = 0; s < cfg.scales; ++s) {
      const std::size_t w = cfg.width_at(s);
      const std::size_t in = s == 0 ? kChannelsPerSlice * slices : cfg.width_at(s - 1);
      b.encoder.push_back({make_conv(w, in, 3, next_seed()), make_conv(w, w, 3, next_seed())});
      b.raw_thresholds.push_back(Tensor::full({w}, kInitialRawThreshold, true));
    }
    for (std::size_t s = 0; s + 1 < cfg.scales; ++s) {
      const std::size_t w = cfg.width_at(s);
      const std::size_t in = cfg.width_at(s + 1) + w;
      b.decoder.push_back({make_conv(w, in, 3, next_seed()), make_conv(w, w, 3, next_seed())});
    }
    b.head = make_conv(2 * slices, cfg.width_at(0), 1, next_seed());
    m.blocks.push_back(std::move(b));
  }
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto p = blocks[k].named_parameters("block" + std::to_string(k) + ".");
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.size();
  return n;
}

void Model::zero_grad() {
  for (auto t : parameters()) t.zero_grad();
}

void Model::zero_output_layers() {
  for (auto& b : blocks) {
    for (double& v : b.head.weight.mutable_data()) v = 0.0;
    for (double& v : b.head.bias.mutable_data()) v = 0.0;
  }
}

std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t n = cfg.stack_size();
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + cout; };
  std::size_t per_block = 0;
  for (std::size_t s = 0; s < cfg.scales; ++s) {
    const std::size_t w = cfg.width_at(s);
    const std::size_t in = s == 0 ? kChannelsPerSlice * n : cfg.width_at(s - 1);
    per_block += conv(in, w, 3) + conv(w, w, 3) + w;
  }
  for (std::size_t s = 0; s + 1 < cfg.scales; ++s) {
    const std::size_t w = cfg.width_at(s);
    per_block += conv(cfg.width_at(s + 1) + w, w, 3) + conv(w, w, 3);
  }
  per_block += conv(cfg.width_at(0), 2 * n, 1);
  return cfg.num_blocks * per_block;
}

std::vector<std::size_t> stack_indices(std::size_t volume_size, std::size_t center, std::size_t neighbors) {
  require(volume_size > 0, "stack_slices: empty volume");
  require(center < volume_size, "stack_slices: center index out of range");
  std::vector<std::size_t> idx;
  const auto c = static_cast<std::ptrdiff_t>(center);
  const auto n = static_cast<std::ptrdiff_t>(neighbors);
  const auto last = static_cast<std::ptrdiff_t>(volume_size) - 1;
  for (std::ptrdiff_t i = c - n; i <= c + n; ++i) idx.push_back(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, last)));
  return idx;
}

SliceStack stack_slices(const std::vector<ComplexImage>& volume, std::size_t center, std::size_t neighbors) {
  SliceStack st;
  for (std::size_t i : stack_indices(volume.size(), center, neighbors)) st.slices.push_back(volume[i]);
  st.center = neighbors;
  return st;
}

namespace {

Tensor pack_real(const std::vector<RealImage>& images) {
  const std::size_t h = images[0].height();
  const std::size_t w = images[0].width();
  std::vector<double> v;
  v.reserve(images.size() * h * w);
  for (const auto& m : images) {
    require(m.height() == h && m.width() == w, "pack_real: images differ in shape");
    v.insert(v.end(), m.values().begin(), m.values().end());
  }
  return Tensor::from({1, images.size(), h, w}, std::move(v));
}

}  // namespace

Tensor block_forward(const Tensor& x, const PriorTensors& priors, const BlockWeights& weights, const ModelConfig& cfg) {
  require(x.rank() == 4 && x.dim(1) % 2 == 0, "block_forward: x must be [1, 2S, H, W]");
  const std::size_t slices = x.dim(1) / 2;
  require(priors.e_b.shape() == x.shape() && priors.e_phi.shape() == x.shape(),
          "block_forward: prior channels do not match the stack shape " + ad::to_string(x.shape()));
  require(priors.e_bg.rank() == 4 && priors.e_bg.dim(1) == slices && priors.e_bg.dim(2) == x.dim(2) &&
              priors.e_bg.dim(3) == x.dim(3),
          "block_forward: background prior does not match the stack shape");
  require(weights.head.weight.dim(0) == 2 * slices, "block_forward: weights were built for a different stack size");
  const std::size_t step = std::size_t{1} << (weights.encoder.size() - 1);
  require(x.dim(2) % step == 0 && x.dim(3) % step == 0,
          "block_forward: image dimensions must be divisible by 2^(scales-1)");

  std::vector<Tensor> parts;
  for (std::size_t s = 0; s < slices; ++s) {
    parts.push_back(ad::slice_channels(x, 2 * s, 2));
    parts.push_back(ad::slice_channels(priors.e_b, 2 * s, 2));
    parts.push_back(ad::slice_channels(priors.e_phi, 2 * s, 2));
    parts.push_back(ad::slice_channels(priors.e_bg, s, 1));
  }
  Tensor h = ad::concat_channels(parts);

  const double slope = cfg.leaky_slope;
  auto conv_pair = [slope](const Tensor& in, const std::array<ConvLayer, 2>& layers) {
    Tensor t = ad::leaky_relu(ad::conv2d(in, layers[0].weight, layers[0].bias, 1, 1), slope);
    return ad::leaky_relu(ad::conv2d(t, layers[1].weight, layers[1].bias, 1, 1), slope);
  };

  std::vector<Tensor> skips;
  for (std::size_t s = 0; s < weights.encoder.size(); ++s) {
    if (s > 0) h = ad::downsample2(h);
    h = conv_pair(h, weights.encoder[s]);
    skips.push_back(ad::soft_threshold(h, ad::softplus(weights.raw_thresholds[s])));
  }
  Tensor d = skips.back();
  for (std::size_t s = weights.decoder.size(); s-- > 0;) {
    d = ad::concat_channels({ad::upsample2(d), skips[s]});
    d = conv_pair(d, weights.decoder[s]);
  }
  Tensor residual = ad::conv2d(d, weights.head.weight, weights.head.bias, 1, 0);
  return ad::add(x, residual);
}

SliceStack block_forward(const SliceStack& x, const std::vector<PriorChannels>& priors, const BlockWeights& weights,
                         const ModelConfig& cfg) {
  require(priors.size() == x.slices.size(), "block_forward: one PriorChannels entry per slice required");
  std::vector<ComplexImage> eb, ephi;
  std::vector<RealImage> ebg;
  for (const auto& p : priors) {
    eb.push_back(p.e_b);
    ephi.push_back(p.e_phi);
    ebg.push_back(p.e_bg);
  }
  PriorTensors pt{pack_complex(eb), pack_complex(ephi), pack_real(ebg)};
  auto out = block_forward(pack_complex(x.slices), pt, weights, cfg);
  return {unpack_complex(out), x.center};
}


Tensor model_forward(const std::vector<KSpaceData>& b, const Model& model) {
  const auto& cfg = model.config;
  require(b.size() == cfg.stack_size(), "model_forward: expected a stack of " + std::to_string(cfg.stack_size()) +
                                            " acquisitions, got " + std::to_string(b.size()));
  require(model.blocks.size() == cfg.num_blocks, "model_forward: weight count does not match num_blocks");
  std::vector<ComplexImage> x0, ephi;
  std::vector<RealImage> ebg;
  for (const auto& k : b) {
    x0.push_back(zero_filled(k));
    ephi.push_back(phase_prior(x0.back(), k));
    ebg.push_back(background_mask(k, cfg.bg_theta));
  }
  PriorTensors priors{Tensor{}, pack_complex(ephi), pack_real(ebg)};
  Tensor x = pack_complex(x0);
  for (const auto& block : model.blocks) {
    priors.e_b = data_consistency(x, b);
    x = block_forward(x, priors, block, cfg);
  }
  return x;
}

SliceStack reconstruct(const std::vector<KSpaceData>& b, const Model& model) {
  return {unpack_complex(model_forward(b, model)), model.config.slice_neighbors};
}

namespace {

constexpr std::string_view kCheckpointMagic{"ACSNW\0", 6};
constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  io::Writer w;
  w.put_bytes(kCheckpointMagic);
  w.put<std::uint16_t>(kCheckpointVersion);
  const std::string json = to_json(model.config);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  w.put_bytes(json);
  for (const auto& [name, t] : model.named_parameters()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    w.put_reals(std::vector<double>(t.data().begin(), t.data().end()));
  }
  return w.bytes();
}

void save_checkpoint(const std::string& path, const Model& model) { io::write_file(path, encode_checkpoint(model)); }

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes);
  if (r.get_bytes(kCheckpointMagic.size(), "magic") != kCheckpointMagic) throw FormatError("not a weight checkpoint (bad magic)", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  const auto json_len = r.get<std::uint32_t>("config length");
  const std::size_t json_at = r.offset();
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(r.get_bytes(json_len, "config"));
    cfg.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid model config: ") + e.what(), json_at);
  }

  std::map<std::string, std::pair<ad::Shape, std::vector<double>>> stored;
  while (!r.at_end()) {
    const std::size_t entry_at = r.offset();
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    std::string name = r.get_bytes(name_len, "tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 8) throw FormatError("implausible tensor rank for " + name, entry_at);
    ad::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.get<std::uint64_t>("tensor dims"));
    auto values = r.get_reals(ad::numel(shape), "tensor data");
    if (!stored.emplace(name, std::make_pair(shape, std::move(values))).second)
      throw FormatError("duplicate tensor " + name, entry_at);
  }

  Model m = Model::init(cfg);
  const std::size_t end = r.offset();
  auto expected = m.named_parameters();
  if (expected.size() != stored.size())
    throw FormatError("checkpoint holds " + std::to_string(stored.size()) + " tensors but the config implies " +
                          std::to_string(expected.size()),
                      end);
  for (auto& [name, t] : expected) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint is missing tensor " + name, end);
    if (it->second.first != t.shape())
      throw FormatError("tensor " + name + " has shape " + ad::to_string(it->second.first) + ", config implies " +
                            ad::to_string(t.shape()),
                        end);
    std::copy(it->second.second.begin(), it->second.second.end(), t.mutable_data().begin());
  }
  return m;
}

Model load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace acs
