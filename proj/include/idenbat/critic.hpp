#pragma once

#include <vector>

#include "idenbat/agecode.hpp"
#include "idenbat/layers.hpp"

namespace idenbat {

struct CriticConfig {
  int dims = 2;
  std::vector<Index> channels{32, 64, 128, 256};  // one stride-2 block each
  Index kernel = 4;
  double negative_slope = 0.2;
  Index age_embed_dim = 64;
  int mapping_depth = 8;
  bool conditional = true;  // false: affine BN in the first block and no age input
  AgeCodeConfig ages;

  void validate() const;
  // Score-grid extent for a given input extent.
  Shape output_spatial(const Shape& input_spatial) const;
};

// Patch critic. First block: conv -> BN -> denorm(M_D(a_t)) -> LeakyReLU; then plain strided
// convs with LeakyReLU and a final 1-channel 3x3 score conv (raw scores, no sigmoid).
template <typename S>
class Critic {
 public:
  using Scalar = S;
  Critic() = default;
  Critic(const CriticConfig& cfg, Rng& rng);

  // x (N, 1, spatial...) -> (N, 1, grid...)
  Var<S> operator()(const Var<S>& x, const std::vector<double>& ages, bool training);

  // Parameter groups: disc., disc_mapping.
  void collect(Registry<S>& reg, const std::string& p = "");
  const CriticConfig& config() const { return cfg_; }
  Denorm<S>& denorm() { return dn_; }

 private:
  CriticConfig cfg_;
  MappingNetwork<S> mapping_;
  Conv<S> first_;
  BatchNorm<S> bn_;
  Denorm<S> dn_;
  std::vector<Conv<S>> rest_;
  Conv<S> score_;
};

}  // namespace idenbat
