#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "acs/image.hpp"
#include "acs/mri_model.hpp"
#include "acs/priors.hpp"
#include "acs/tensor.hpp"

namespace acs {

/// Input channels assembled per slice: Re/Im of x, e_b, e_phi, plus e_bg.
inline constexpr std::size_t kChannelsPerSlice = 7;

struct ModelConfig {
  std::size_t num_blocks = 5;
  std::size_t base_channels = 16;
  std::size_t scales = 2;
  std::size_t slice_neighbors = 1;
  double leaky_slope = 0.1;
  double bg_theta = kDefaultBackgroundTheta;
  std::uint64_t seed = 0;

  std::size_t stack_size() const { return 2 * slice_neighbors + 1; }
  std::size_t width_at(std::size_t scale) const { return base_channels << scale; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

struct ConvLayer {
  ad::Tensor weight;  // [Cout, Cin, k, k]
  ad::Tensor bias;    // [Cout]
};

/// Trainable parameters of one unrolled block. Encoder/decoder levels are
/// indexed by scale (0 = full resolution); the decoder has scales-1 levels.
struct BlockWeights {
  std::vector<std::array<ConvLayer, 2>> encoder;
  std::vector<ad::Tensor> raw_thresholds;  // per scale, one per channel; lambda = softplus(raw)
  std::vector<std::array<ConvLayer, 2>> decoder;
  ConvLayer head;  // 1x1 conv to 2 channels per slice

  std::vector<std::pair<std::string, ad::Tensor>> named_parameters(const std::string& prefix) const;
};

struct Model {
  ModelConfig config;
  std::vector<BlockWeights> blocks;

  /// Deterministic initialization: kernels ~ U(-s, s) with s = sqrt(1/fan_in),
  /// biases 0, raw thresholds = softplus^-1(0.01).
  static Model init(const ModelConfig& cfg);

  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
  std::vector<ad::Tensor> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
  /// Zero the 1x1 output layer of every block, turning each into the identity.
  void zero_output_layers();
};

/// Closed-form trainable parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& cfg);

struct SliceStack {
  std::vector<ComplexImage> slices;
  std::size_t center = 0;
};

/// Volume indices of the stack around `center` with edge replication.
std::vector<std::size_t> stack_indices(std::size_t volume_size, std::size_t center, std::size_t neighbors);
SliceStack stack_slices(const std::vector<ComplexImage>& volume, std::size_t center, std::size_t neighbors);

/// Prior channels of a packed stack: e_b, e_phi as [1, 2S, H, W], e_bg as [1, S, H, W].
struct PriorTensors {
  ad::Tensor e_b;
  ad::Tensor e_phi;
  ad::Tensor e_bg;
};

/// x + decoder(threshold(encoder(x, priors))) on a packed stack x[1, 2S, H, W].
ad::Tensor block_forward(const ad::Tensor& x, const PriorTensors& priors, const BlockWeights& weights,
                         const ModelConfig& cfg);

/// Non-differentiable convenience wrapper on images.
SliceStack block_forward(const SliceStack& x, const std::vector<PriorChannels>& priors, const BlockWeights& weights,
                         const ModelConfig& cfg);

/// Full unrolled reconstruction from one k-space acquisition per stack slice.
/// Starts at the zero-filled images; e_b is recomputed from every iterate,
/// e_phi and e_bg are computed once from the measurements.
ad::Tensor model_forward(const std::vector<KSpaceData>& b, const Model& model);
SliceStack reconstruct(const std::vector<KSpaceData>& b, const Model& model);

void save_checkpoint(const std::string& path, const Model& model);
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
/// Throws FormatError on malformed files and on tensors inconsistent with
/// the stored configuration.
Model load_checkpoint(const std::string& path);
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace acs
