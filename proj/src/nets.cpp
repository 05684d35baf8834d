#include "idenbat/nets.hpp"

#include <stdexcept>

namespace idenbat {

void NetworkConfig::validate() const {
  if (dims != 2 && dims != 3) throw std::invalid_argument("network: dims must be 2 or 3");
  if (levels < 2) throw std::invalid_argument("network: need at least 2 levels");
  if (static_cast<int>(channels.size()) != levels)
    throw std::invalid_argument("network: channels must list one width per level");
  for (Index c : channels)
    if (c < 1) throw std::invalid_argument("network: channel widths must be positive");
  if (age_embed_dim < 1) throw std::invalid_argument("network: age_embed_dim must be positive");
  if (mapping_depth < 1) throw std::invalid_argument("network: mapping_depth must be >= 1");
  ages.validate();
}

void NetworkConfig::check_input(const Shape& spatial) const {
  if (static_cast<int>(spatial.size()) != dims)
    throw ShapeError("network configured for " + std::to_string(dims) + "-D input, got " +
                     std::to_string(spatial.size()) + "-D " + shape_string(spatial));
  const Index div = Index{1} << (levels - 1);
  for (Index e : spatial)
    if (e % div != 0 || e < div)
      throw ShapeError("network: every axis must be a multiple of " + std::to_string(div) +
                       ", got " + shape_string(spatial));
}

namespace {

Shape spatial_of(const Shape& s) { return Shape(s.begin() + 2, s.end()); }

}  // namespace

template <typename S>
Encoder<S>::Encoder(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  Index in = 1;
  for (int l = 0; l < cfg.levels; ++l) {
    const Index c = cfg.channels[l];
    blocks_.push_back({ConvBlock<S>(in, c, cfg.dims, rng), ConvBlock<S>(c, c, cfg.dims, rng)});
    in = c;
  }
  head_ = Linear<S>(in, cfg.ages.bins(), rng);
}

template <typename S>
EncoderFeatures<S> Encoder<S>::operator()(const Var<S>& x, bool training) {
  if (x.shape().size() < 3 || x.shape()[1] != 1)
    throw ShapeError("encoder: expected (N, 1, spatial...) input, got " + shape_string(x.shape()));
  cfg_.check_input(spatial_of(x.shape()));
  EncoderFeatures<S> f;
  Var<S> h = x;
  for (int l = 0; l < cfg_.levels; ++l) {
    if (l > 0) h = max_pool2(h);
    auto& b = blocks_[static_cast<std::size_t>(l)];
    h = b[1](b[0](h, training), training);
    f.levels.push_back(h);
  }
  f.age_logits = head_(global_avg_pool(h));
  return f;
}

template <typename S>
void Encoder<S>::collect(Registry<S>& reg, const std::string& p) {
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l][0].collect(reg, p + "l" + std::to_string(l) + ".b0.");
    blocks_[l][1].collect(reg, p + "l" + std::to_string(l) + ".b1.");
  }
  head_.collect(reg, p + "head.");
}

template <typename S>
IdentityExtractor<S>::IdentityExtractor(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int l = 0; l < cfg.levels; ++l) {
    const Index c = cfg.channels[l];
    blocks_.push_back({ConvBlock<S>(c, c, cfg.dims, rng), ConvBlock<S>(c, c, cfg.dims, rng)});
  }
}

template <typename S>
FeatureStack<S> IdentityExtractor<S>::operator()(const FeatureStack<S>& f_age, bool training) {
  if (f_age.size() != blocks_.size()) throw ShapeError("IEM: level count mismatch");
  FeatureStack<S> out;
  for (std::size_t l = 0; l < blocks_.size(); ++l)
    out.push_back(blocks_[l][1](blocks_[l][0](f_age[l], training), training));
  return out;
}

template <typename S>
void IdentityExtractor<S>::collect(Registry<S>& reg, const std::string& p) {
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l][0].collect(reg, p + "l" + std::to_string(l) + ".b0.");
    blocks_[l][1].collect(reg, p + "l" + std::to_string(l) + ".b1.");
  }
}

template <typename S>
AgeInjector<S>::AgeInjector(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int l = 0; l < cfg.levels; ++l) {
    const Index c = cfg.channels[l];
    blocks_.push_back({CondBlock<S>(c, c, cfg.dims, cfg.age_embed_dim, rng),
                       CondBlock<S>(c, c, cfg.dims, cfg.age_embed_dim, rng)});
  }
}

template <typename S>
FeatureStack<S> AgeInjector<S>::operator()(const FeatureStack<S>& f_iden, const Var<S>& a_e,
                                           bool training) {
  if (f_iden.size() != blocks_.size()) throw ShapeError("AIM: level count mismatch");
  FeatureStack<S> out;
  for (std::size_t l = 0; l < blocks_.size(); ++l)
    out.push_back(blocks_[l][1](blocks_[l][0](f_iden[l], a_e, training), a_e, training));
  return out;
}

template <typename S>
void AgeInjector<S>::collect(Registry<S>& reg, const std::string& p) {
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l][0].collect(reg, p + "l" + std::to_string(l) + ".b0.");
    blocks_[l][1].collect(reg, p + "l" + std::to_string(l) + ".b1.");
  }
}

template <typename S>
Generator<S>::Generator(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int l = 0; l + 1 < cfg.levels; ++l) {
    const Index c = cfg.channels[l], below = cfg.channels[l + 1];
    blocks_.push_back({ConvBlock<S>(below + c, c, cfg.dims, rng), ConvBlock<S>(c, c, cfg.dims, rng)});
  }
  out_ = Conv<S>(cfg.channels[0], 1, 1, cfg.dims, {1, 0}, rng, true);
}

template <typename S>
Var<S> Generator<S>::operator()(const FeatureStack<S>& f_out, const Var<S>& x, bool training) {
  if (f_out.size() != blocks_.size() + 1) throw ShapeError("generator: level count mismatch");
  Var<S> h = f_out.back();
  for (int l = static_cast<int>(blocks_.size()) - 1; l >= 0; --l) {
    const Var<S>& skip = f_out[static_cast<std::size_t>(l)];
    h = concat_channels(upsample_to(h, spatial_of(skip.shape())), skip);
    auto& b = blocks_[static_cast<std::size_t>(l)];
    h = b[1](b[0](h, training), training);
  }
  Var<S> residual = out_(h);
  require_same_shape(residual.shape(), x.shape(), "generator residual");
  return clip01(add(x, residual));
}

template <typename S>
void Generator<S>::collect(Registry<S>& reg, const std::string& p) {
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l][0].collect(reg, p + "l" + std::to_string(l) + ".b0.");
    blocks_[l][1].collect(reg, p + "l" + std::to_string(l) + ".b1.");
  }
  out_.collect(reg, p + "out.");
}

template <typename S>
AgeTransformer<S>::AgeTransformer(const NetworkConfig& cfg, Rng& rng)
    : cfg_(cfg),
      encoder_(cfg, rng),
      iem_(cfg, rng),
      mapping_(cfg.age_embed_dim, cfg.mapping_depth, static_cast<S>(cfg.negative_slope), rng),
      aim_(cfg, rng),
      generator_(cfg, rng) {}

template <typename S>
Tensor<S> AgeTransformer<S>::age_inputs(const std::vector<double>& ages) const {
  Tensor<S> t(Shape{static_cast<Index>(ages.size()), 1});
  for (std::size_t n = 0; n < ages.size(); ++n)
    t[static_cast<Index>(n)] = static_cast<S>(normalize_age(ages[n], cfg_.ages));
  return t;
}

template <typename S>
Var<S> AgeTransformer<S>::embed_age(const std::vector<double>& ages) const {
  return mapping_(Var<S>(age_inputs(ages)));
}

template <typename S>
TransformTrace<S> AgeTransformer<S>::trace(const Var<S>& x, const std::vector<double>& target_ages,
                                           bool training) {
  if (static_cast<Index>(target_ages.size()) != x.shape()[0])
    throw ShapeError("transform: one target age per sample required");
  TransformTrace<S> t;
  t.encoded = encoder_(x, training);
  t.identity = iem_(t.encoded.levels, training);
  t.embedding = embed_age(target_ages);
  t.conditioned = aim_(t.identity, t.embedding, training);
  t.output = generator_(t.conditioned, x, training);
  return t;
}

template <typename S>
Var<S> AgeTransformer<S>::transform_from_identity(const FeatureStack<S>& f_iden, const Var<S>& x,
                                                  const std::vector<double>& target_ages,
                                                  bool training) {
  if (static_cast<Index>(target_ages.size()) != x.shape()[0])
    throw ShapeError("transform: one target age per sample required");
  return generator_(aim_(f_iden, embed_age(target_ages), training), x, training);
}

template <typename S>
void AgeTransformer<S>::collect(Registry<S>& reg, const std::string& p) {
  encoder_.collect(reg, p + "encoder.");
  iem_.collect(reg, p + "iem.");
  mapping_.collect(reg, p + "mapping.");
  aim_.collect(reg, p + "aim.");
  generator_.collect(reg, p + "generator.");
}

template class Encoder<float>;
template class Encoder<double>;
template class IdentityExtractor<float>;
template class IdentityExtractor<double>;
template class AgeInjector<float>;
template class AgeInjector<double>;
template class Generator<float>;
template class Generator<double>;
template class AgeTransformer<float>;
template class AgeTransformer<double>;

}  // namespace idenbat
