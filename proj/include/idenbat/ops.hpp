#pragma once

#include "idenbat/tensor.hpp"

namespace idenbat {

// Differentiable free functions over Var. Feature maps are (N, C, spatial...) with one
// or more spatial axes; the 2-D and 3-D cases share every kernel here.

template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> scale(const Var<S>& a, S factor);
template <typename S> Var<S> abs(const Var<S>& a);
template <typename S> Var<S> square(const Var<S>& a);
template <typename S> Var<S> sum(const Var<S>& a);
template <typename S> Var<S> mean(const Var<S>& a);
template <typename S> Var<S> reshape(const Var<S>& a, Shape shape);

// Sum of scalar Vars, each multiplied by its weight.
template <typename S> Var<S> weighted_sum(const std::vector<Var<S>>& terms, const std::vector<S>& weights);

// Multiplies every element of sample n by weights[n] (constants).
template <typename S> Var<S> scale_samples(const Var<S>& a, const std::vector<S>& weights);

// Clamp to [0, 1]; gradient passes where lo <= x <= hi (inclusive bounds).
template <typename S> Var<S> clip01(const Var<S>& a);

template <typename S> Var<S> leaky_relu(const Var<S>& a, S negative_slope);
// Per-channel learnable slope, slope shape (C).
template <typename S> Var<S> prelu(const Var<S>& x, const Var<S>& slope);

struct ConvGeometry {
  Index stride = 1;
  Index padding = 0;
};

// x (N, Cin, spatial...), weight (Cout, Cin, k...), bias (Cout).
template <typename S>
Var<S> conv(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, ConvGeometry geom);

struct BatchNormStats {
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(Index channels = 0)
      : running_mean(Eigen::VectorXd::Zero(channels)),
        running_var(Eigen::VectorXd::Ones(channels)) {}
};

// Normalizes each channel over batch and spatial axes. Training mode uses batch statistics
// and updates the running estimates (unbiased variance); eval mode uses the running values.
template <typename S>
Var<S> batch_norm(const Var<S>& x, BatchNormStats& stats, bool training);

// y = scale * x + shift per channel; scale/shift are (C) or per-sample (N, C).
template <typename S>
Var<S> channel_affine(const Var<S>& x, const Var<S>& scale, const Var<S>& shift);

// 2x max pooling along every spatial axis (floor).
template <typename S> Var<S> max_pool2(const Var<S>& x);
// Nearest-neighbour upsampling to the requested spatial extent (each at most 2x the input).
template <typename S> Var<S> upsample_to(const Var<S>& x, const Shape& spatial);
template <typename S> Var<S> concat_channels(const Var<S>& a, const Var<S>& b);
// (N, C, spatial...) -> (N, C)
template <typename S> Var<S> global_avg_pool(const Var<S>& x);

// x (N, in), weight (out, in), bias (out) -> (N, out)
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& weight, const Var<S>& bias);

// Mean over the batch of KL(target || softmax(logits)); logits and target are (N, K).
// Predicted probabilities are floored at 1e-12 before the log.
template <typename S>
Var<S> kl_from_logits(const Var<S>& logits, const Tensor<S>& target);

// Cosine similarity between matching rows of (N, D) inputs -> (N). The norm product is
// floored at eps.
template <typename S>
Var<S> row_cosine(const Var<S>& a, const Var<S>& b, S eps = S(1e-8));

// Row-wise softmax of an (N, K) tensor (no gradient).
template <typename S> Tensor<S> softmax_rows(const Tensor<S>& logits);

}  // namespace idenbat
