#pragma once

#include <array>
#include <vector>

#include "idenbat/agecode.hpp"
#include "idenbat/layers.hpp"

namespace idenbat {

struct NetworkConfig {
  int dims = 2;
  int levels = 4;
  std::vector<Index> channels{16, 32, 64, 128};
  Index age_embed_dim = 64;
  int mapping_depth = 8;
  double negative_slope = 0.2;
  AgeCodeConfig ages;

  void validate() const;
  // Throws unless `spatial` has `dims` axes, each divisible by 2^(levels-1).
  void check_input(const Shape& spatial) const;
};

template <typename S>
using FeatureStack = std::vector<Var<S>>;

template <typename S>
struct EncoderFeatures {
  FeatureStack<S> levels;  // F_age^1..F_age^L; the last level is the bottleneck
  Var<S> age_logits;       // (N, bins)
};

// Conv3 -> BN -> PReLU.
template <typename S>
class ConvBlock {
 public:
  using Scalar = S;
  ConvBlock() = default;
  ConvBlock(Index in, Index out, int dims, Rng& rng)
      : conv_(in, out, 3, dims, {1, 1}, rng), bn_(out, true), act_(out) {}
  Var<S> operator()(const Var<S>& x, bool training) { return act_(bn_(conv_(x), training)); }
  void collect(Registry<S>& reg, const std::string& p) {
    conv_.collect(reg, p + "conv.");
    bn_.collect(reg, p + "bn.");
    act_.collect(reg, p + "act.");
  }

 private:
  Conv<S> conv_;
  BatchNorm<S> bn_;
  PReLU<S> act_;
};

// Conv3 -> BN (no affine) -> Denorm(a_e) -> PReLU.
template <typename S>
class CondBlock {
 public:
  using Scalar = S;
  CondBlock() = default;
  CondBlock(Index in, Index out, int dims, Index embed_dim, Rng& rng)
      : conv_(in, out, 3, dims, {1, 1}, rng), bn_(out, false), dn_(embed_dim, out), act_(out) {}
  Var<S> operator()(const Var<S>& x, const Var<S>& a_e, bool training) {
    return act_(dn_(bn_(conv_(x), training), a_e));
  }
  void collect(Registry<S>& reg, const std::string& p) {
    conv_.collect(reg, p + "conv.");
    bn_.collect(reg, p + "bn.");
    dn_.collect(reg, p + "dn.");
    act_.collect(reg, p + "act.");
  }
  Denorm<S>& denorm() { return dn_; }

 private:
  Conv<S> conv_;
  BatchNorm<S> bn_;
  Denorm<S> dn_;
  PReLU<S> act_;
};

template <typename S>
class Encoder {
 public:
  using Scalar = S;
  Encoder() = default;
  Encoder(const NetworkConfig& cfg, Rng& rng);
  // x is (N, 1, spatial...).
  EncoderFeatures<S> operator()(const Var<S>& x, bool training);
  void collect(Registry<S>& reg, const std::string& p);
  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  std::vector<std::array<ConvBlock<S>, 2>> blocks_;
  Linear<S> head_;
};

template <typename S>
class IdentityExtractor {
 public:
  using Scalar = S;
  IdentityExtractor() = default;
  IdentityExtractor(const NetworkConfig& cfg, Rng& rng);
  FeatureStack<S> operator()(const FeatureStack<S>& f_age, bool training);
  void collect(Registry<S>& reg, const std::string& p);

 private:
  std::vector<std::array<ConvBlock<S>, 2>> blocks_;
};

template <typename S>
class AgeInjector {
 public:
  using Scalar = S;
  AgeInjector() = default;
  AgeInjector(const NetworkConfig& cfg, Rng& rng);
  FeatureStack<S> operator()(const FeatureStack<S>& f_iden, const Var<S>& a_e, bool training);
  void collect(Registry<S>& reg, const std::string& p);
  CondBlock<S>& block(int level, int i) { return blocks_.at(static_cast<std::size_t>(level))[i]; }

 private:
  std::vector<std::array<CondBlock<S>, 2>> blocks_;
};

// U-Net up-path with a zero-initialized 1x1 output convolution and a residual to the input.
template <typename S>
class Generator {
 public:
  using Scalar = S;
  Generator() = default;
  Generator(const NetworkConfig& cfg, Rng& rng);
  // Returns clip01(x + G(f_out)).
  Var<S> operator()(const FeatureStack<S>& f_out, const Var<S>& x, bool training);
  void collect(Registry<S>& reg, const std::string& p);

 private:
  std::vector<std::array<ConvBlock<S>, 2>> blocks_;  // one pair per skip level
  Conv<S> out_;
};

template <typename S>
struct TransformTrace {
  EncoderFeatures<S> encoded;
  FeatureStack<S> identity;
  Var<S> embedding;
  FeatureStack<S> conditioned;
  Var<S> output;
};

template <typename S>
class AgeTransformer {
 public:
  using Scalar = S;
  AgeTransformer() = default;
  AgeTransformer(const NetworkConfig& cfg, Rng& rng);

  const NetworkConfig& config() const { return cfg_; }

  EncoderFeatures<S> encode(const Var<S>& x, bool training) { return encoder_(x, training); }
  FeatureStack<S> extract_identity(const FeatureStack<S>& f_age, bool training) {
    return iem_(f_age, training);
  }
  // (N, 1) column of normalized ages; throws for out-of-range ages.
  Tensor<S> age_inputs(const std::vector<double>& ages) const;
  Var<S> embed_age(const std::vector<double>& ages) const;
  FeatureStack<S> inject_age(const FeatureStack<S>& f_iden, const Var<S>& a_e, bool training) {
    return aim_(f_iden, a_e, training);
  }
  Var<S> generate(const FeatureStack<S>& f_out, const Var<S>& x, bool training) {
    return generator_(f_out, x, training);
  }

  // X_hat = T(X, a_t), keeping every intermediate.
  TransformTrace<S> trace(const Var<S>& x, const std::vector<double>& target_ages, bool training);
  Var<S> transform(const Var<S>& x, const std::vector<double>& target_ages, bool training) {
    return trace(x, target_ages, training).output;
  }
  // Second half of T when identity features are already available.
  Var<S> transform_from_identity(const FeatureStack<S>& f_iden, const Var<S>& x,
                                 const std::vector<double>& target_ages, bool training);

  // Parameter groups: encoder., iem., mapping., aim., generator.
  void collect(Registry<S>& reg, const std::string& p = "");

  Encoder<S>& encoder() { return encoder_; }
  IdentityExtractor<S>& iem() { return iem_; }
  MappingNetwork<S>& mapping() { return mapping_; }
  AgeInjector<S>& aim() { return aim_; }
  Generator<S>& generator() { return generator_; }

 private:
  NetworkConfig cfg_;
  Encoder<S> encoder_;
  IdentityExtractor<S> iem_;
  MappingNetwork<S> mapping_;
  AgeInjector<S> aim_;
  Generator<S> generator_;
};

}  // namespace idenbat
