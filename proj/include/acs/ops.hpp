#pragma once

#include <vector>

#include "acs/tensor.hpp"

// Differentiable primitives. Binary elementwise ops accept operands of equal
// shape, or one operand holding a single value (broadcast).
namespace acs::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// |v| with subgradient 0 at v == 0.
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
/// v^p for v >= 0; gradient taken as 0 at v == 0.
Tensor pow_scalar(const Tensor& a, double p);
/// max(v, slope*v); derivative `slope` at v <= 0.
Tensor leaky_relu(const Tensor& a, double slope);
/// log(1 + exp(v)), evaluated stably.
Tensor softplus(const Tensor& a);

/// sign(v) * max(|v| - lambda, 0). `threshold` holds either a single value or
/// one value per channel (dimension 1 of `input`). Subgradient 0 on the dead
/// zone |v| <= lambda, including the kink.
Tensor soft_threshold(const Tensor& input, const Tensor& threshold);

/// Cross-correlation of input[N,Cin,H,W] with kernel[Cout,Cin,kH,kW] plus
/// bias[Cout], zero padding. Odd kernel sizes only.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

/// 2x2 mean pooling; spatial dimensions must be even.
Tensor downsample2(const Tensor& input);
/// Nearest-neighbour 2x replication.
Tensor upsample2(const Tensor& input);

/// Concatenate rank-4 tensors along the channel axis.
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Channels [begin, begin+count) of a rank-4 tensor.
Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count);

/// Channel pair (re, im) of x[N,2,H,W] -> |re + i im| as [N,1,H,W];
/// gradient taken as 0 where the magnitude vanishes.
Tensor complex_magnitude(const Tensor& x);

}  // namespace acs::ad
