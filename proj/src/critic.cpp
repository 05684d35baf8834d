#include "idenbat/critic.hpp"

#include <stdexcept>

namespace idenbat {

void CriticConfig::validate() const {
  if (dims != 2 && dims != 3) throw std::invalid_argument("critic: dims must be 2 or 3");
  if (channels.empty()) throw std::invalid_argument("critic: need at least one block");
  for (Index c : channels)
    if (c < 1) throw std::invalid_argument("critic: channel widths must be positive");
  if (kernel < 2 || kernel % 2) throw std::invalid_argument("critic: kernel must be even and >= 2");
  if (age_embed_dim < 1 || mapping_depth < 1)
    throw std::invalid_argument("critic: bad mapping network size");
  ages.validate();
}

Shape CriticConfig::output_spatial(const Shape& in) const {
  if (static_cast<int>(in.size()) != dims)
    throw ShapeError("critic configured for " + std::to_string(dims) + "-D input, got " +
                     shape_string(in));
  const Index pad = kernel / 2 - 1;
  Shape s = in;
  for (std::size_t b = 0; b < channels.size(); ++b)
    for (auto& e : s) {
      e = (e + 2 * pad - kernel) / 2 + 1;
      if (e < 1) throw ShapeError("critic: input " + shape_string(in) + " too small");
    }
  return s;
}

template <typename S>
Critic<S>::Critic(const CriticConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const ConvGeometry down{2, cfg.kernel / 2 - 1};
  if (cfg.conditional)
    mapping_ = MappingNetwork<S>(cfg.age_embed_dim, cfg.mapping_depth,
                                 static_cast<S>(cfg.negative_slope), rng);
  first_ = Conv<S>(1, cfg.channels[0], cfg.kernel, cfg.dims, down, rng);
  bn_ = BatchNorm<S>(cfg.channels[0], !cfg.conditional);
  if (cfg.conditional) dn_ = Denorm<S>(cfg.age_embed_dim, cfg.channels[0]);
  for (std::size_t b = 1; b < cfg.channels.size(); ++b)
    rest_.emplace_back(cfg.channels[b - 1], cfg.channels[b], cfg.kernel, cfg.dims, down, rng);
  score_ = Conv<S>(cfg.channels.back(), 1, 3, cfg.dims, {1, 1}, rng);
}

template <typename S>
Var<S> Critic<S>::operator()(const Var<S>& x, const std::vector<double>& ages, bool training) {
  const Shape& xs = x.shape();
  if (xs.size() < 3 || xs[1] != 1)
    throw ShapeError("critic: expected (N, 1, spatial...) input, got " + shape_string(xs));
  cfg_.output_spatial(Shape(xs.begin() + 2, xs.end()));
  const S slope = static_cast<S>(cfg_.negative_slope);
  Var<S> h = bn_(first_(x), training);
  if (cfg_.conditional) {
    if (static_cast<Index>(ages.size()) != xs[0])
      throw ShapeError("critic: one age per sample required");
    Tensor<S> a(Shape{xs[0], 1});
    for (std::size_t n = 0; n < ages.size(); ++n)
      a[static_cast<Index>(n)] = static_cast<S>(normalize_age(ages[n], cfg_.ages));
    h = dn_(h, mapping_(Var<S>(a)));
  }
  h = leaky_relu(h, slope);
  for (const auto& c : rest_) h = leaky_relu(c(h), slope);
  return score_(h);
}

template <typename S>
void Critic<S>::collect(Registry<S>& reg, const std::string& p) {
  first_.collect(reg, p + "disc.b0.conv.");
  bn_.collect(reg, p + "disc.b0.bn.");
  if (cfg_.conditional) dn_.collect(reg, p + "disc.b0.dn.");
  for (std::size_t b = 0; b < rest_.size(); ++b)
    rest_[b].collect(reg, p + "disc.b" + std::to_string(b + 1) + ".conv.");
  score_.collect(reg, p + "disc.score.");
  if (cfg_.conditional) mapping_.collect(reg, p + "disc_mapping.");
}

template class Critic<float>;
template class Critic<double>;

}  // namespace idenbat
