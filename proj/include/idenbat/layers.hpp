#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "idenbat/ops.hpp"
#include "idenbat/random.hpp"

namespace idenbat {

// Named views of a module's trainable parameters and normalization buffers. Pointers stay
// valid while the owning module is alive and not moved.
template <typename S>
struct Registry {
  std::vector<std::pair<std::string, Var<S>*>> params;
  std::vector<std::pair<std::string, BatchNormStats*>> norms;

  void param(const std::string& name, Var<S>& v) { params.emplace_back(name, &v); }
  void norm(const std::string& name, BatchNormStats& s) { norms.emplace_back(name, &s); }
};

template <typename S>
Var<S> make_param(Shape shape, Rng& rng, S bound) {
  Tensor<S> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                              static_cast<double>(bound));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(dist(rng));
  return Var<S>(std::move(t), true);
}

template <typename S>
Var<S> constant_param(Shape shape, S value) {
  return Var<S>(Tensor<S>(std::move(shape), value), true);
}

// Copy of a module whose parameters are detached leaves: forward passes through it still
// propagate gradient to their inputs, never to the parameters.
template <typename Module>
Module frozen_copy(const Module& m) {
  Module copy = m;
  using S = typename Module::Scalar;
  Registry<S> reg;
  copy.collect(reg, "");
  for (auto& [name, var] : reg.params) *var = var->detach();
  return copy;
}

template <typename S>
class Conv {
 public:
  using Scalar = S;
  Conv() = default;
  // Weight (out, in, k^dims); PyTorch-style uniform(+-1/sqrt(fan_in)) init unless zero_init.
  Conv(Index in, Index out, Index kernel, int dims, ConvGeometry geom, Rng& rng,
       bool zero_init = false)
      : geom_(geom) {
    Shape ws{out, in};
    for (int i = 0; i < dims; ++i) ws.push_back(kernel);
    const Index fan_in = shape_size(ws) / out;
    const S bound = S(1) / std::sqrt(static_cast<S>(fan_in));
    if (zero_init) {
      weight_ = constant_param<S>(ws, S(0));
      bias_ = constant_param<S>({out}, S(0));
    } else {
      weight_ = make_param<S>(ws, rng, bound);
      bias_ = make_param<S>({out}, rng, bound);
    }
  }
  Var<S> operator()(const Var<S>& x) const { return conv(x, weight_, bias_, geom_); }
  void collect(Registry<S>& reg, const std::string& p) {
    reg.param(p + "weight", weight_);
    reg.param(p + "bias", bias_);
  }
  const Var<S>& weight() const { return weight_; }
  Var<S>& weight() { return weight_; }
  Var<S>& bias() { return bias_; }

 private:
  Var<S> weight_, bias_;
  ConvGeometry geom_;
};

template <typename S>
class BatchNorm {
 public:
  using Scalar = S;
  BatchNorm() = default;
  BatchNorm(Index channels, bool affine) : stats_(channels), affine_(affine) {
    if (affine) {
      gamma_ = constant_param<S>({channels}, S(1));
      beta_ = constant_param<S>({channels}, S(0));
    }
  }
  Var<S> operator()(const Var<S>& x, bool training) {
    Var<S> h = batch_norm(x, stats_, training);
    return affine_ ? channel_affine(h, gamma_, beta_) : h;
  }
  void collect(Registry<S>& reg, const std::string& p) {
    reg.norm(p + "bn", stats_);
    if (affine_) {
      reg.param(p + "gamma", gamma_);
      reg.param(p + "beta", beta_);
    }
  }

 private:
  BatchNormStats stats_;
  bool affine_ = false;
  Var<S> gamma_, beta_;
};

template <typename S>
class PReLU {
 public:
  using Scalar = S;
  PReLU() = default;
  explicit PReLU(Index channels, S init = S(0.25)) : slope_(constant_param<S>({channels}, init)) {}
  Var<S> operator()(const Var<S>& x) const { return prelu(x, slope_); }
  void collect(Registry<S>& reg, const std::string& p) { reg.param(p + "slope", slope_); }

 private:
  Var<S> slope_;
};

template <typename S>
class Linear {
 public:
  using Scalar = S;
  Linear() = default;
  Linear(Index in, Index out, Rng& rng) {
    const S bound = S(1) / std::sqrt(static_cast<S>(in));
    weight_ = make_param<S>({out, in}, rng, bound);
    bias_ = make_param<S>({out}, rng, bound);
  }
  // Weights scaled to keep activation variance through a LeakyReLU with `slope`.
  static Linear he_uniform(Index in, Index out, S slope, Rng& rng) {
    const S gain = std::sqrt(S(2) / (S(1) + slope * slope));
    Linear l;
    l.weight_ = make_param<S>({out, in}, rng, gain * std::sqrt(S(3) / static_cast<S>(in)));
    l.bias_ = make_param<S>({out}, rng, S(1) / std::sqrt(static_cast<S>(in)));
    return l;
  }
  // Zero weight with constant bias: the layer outputs `bias_value` for every input.
  static Linear constant_output(Index in, Index out, S bias_value) {
    Linear l;
    l.weight_ = constant_param<S>({out, in}, S(0));
    l.bias_ = constant_param<S>({out}, bias_value);
    return l;
  }
  Var<S> operator()(const Var<S>& x) const { return linear(x, weight_, bias_); }
  void collect(Registry<S>& reg, const std::string& p) {
    reg.param(p + "weight", weight_);
    reg.param(p + "bias", bias_);
  }
  const Var<S>& weight() const { return weight_; }
  Var<S>& weight() { return weight_; }
  Var<S>& bias() { return bias_; }

 private:
  Var<S> weight_, bias_;
};

// Stack of fully-connected layers with LeakyReLU after each, embedding a normalized age
// scalar (N, 1) into (N, embed_dim).
template <typename S>
class MappingNetwork {
 public:
  using Scalar = S;
  MappingNetwork() = default;
  MappingNetwork(Index embed_dim, int depth, S negative_slope, Rng& rng)
      : slope_(negative_slope) {
    layers_.push_back(Linear<S>::he_uniform(1, embed_dim, negative_slope, rng));
    for (int i = 1; i < depth; ++i) layers_.push_back(Linear<S>::he_uniform(embed_dim, embed_dim, negative_slope, rng));
  }
  Var<S> operator()(const Var<S>& ages01) const {
    Var<S> h = ages01;
    for (const auto& l : layers_) h = leaky_relu(l(h), slope_);
    return h;
  }
  void collect(Registry<S>& reg, const std::string& p) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].collect(reg, p + "fc" + std::to_string(i) + ".");
  }
  Index embed_dim() const { return layers_.empty() ? 0 : layers_.back().weight().shape()[0]; }
  std::size_t depth() const { return layers_.size(); }

 private:
  std::vector<Linear<S>> layers_;
  S slope_ = S(0.2);
};

// Denormalization: per-channel scale and shift predicted from a conditioning embedding.
// Starts as the identity map (scale 1, shift 0).
template <typename S>
class Denorm {
 public:
  using Scalar = S;
  Denorm() = default;
  Denorm(Index embed_dim, Index channels)
      : gamma_(Linear<S>::constant_output(embed_dim, channels, S(1))),
        beta_(Linear<S>::constant_output(embed_dim, channels, S(0))) {}
  Var<S> operator()(const Var<S>& h, const Var<S>& embedding) const {
    return channel_affine(h, gamma_(embedding), beta_(embedding));
  }
  void collect(Registry<S>& reg, const std::string& p) {
    gamma_.collect(reg, p + "gamma.");
    beta_.collect(reg, p + "beta.");
  }
  Linear<S>& gamma_map() { return gamma_; }
  Linear<S>& beta_map() { return beta_; }

 private:
  Linear<S> gamma_, beta_;
};

}  // namespace idenbat
