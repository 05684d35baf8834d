#include "idenbat/losses.hpp"

#include <cmath>
#include <numbers>

namespace idenbat {

void LossWeights::validate() const {
  for (double l : {lambda_adv, lambda_age, lambda_iden, lambda_cyc, lambda_rec})
    if (!(l >= 0)) throw std::invalid_argument("loss weights must be non-negative");
  if (!(beta >= 0 && beta <= 0.5)) throw std::invalid_argument("beta must lie in [0, 0.5]");
  if (!(r > 0)) throw std::invalid_argument("r must be positive");
}

NonFiniteLoss::NonFiniteLoss(const std::string& term, double value)
    : std::runtime_error("non-finite loss term " + term + " = " + std::to_string(value)),
      term_(term) {}

namespace {

template <typename S>
Var<S> flat_rows(const Var<S>& f) {
  return reshape(f, Shape{f.shape()[0], f.value().sample_size()});
}

template <typename S>
Var<S> constant_like(const Var<S>& v, S value) {
  return Var<S>(Tensor<S>(v.shape(), value));
}

}  // namespace

template <typename S>
Var<S> feature_cosine(const FeatureStack<S>& a, const FeatureStack<S>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("feature_cosine: level count mismatch");
  std::vector<Var<S>> per_level;
  for (std::size_t l = 0; l < a.size(); ++l) {
    require_same_shape(a[l].shape(), b[l].shape(), "feature_cosine");
    per_level.push_back(mean(row_cosine(flat_rows(a[l]), flat_rows(b[l]))));
  }
  return weighted_sum(per_level, std::vector<S>(per_level.size(), S(1) / S(per_level.size())));
}

template <typename S>
Var<S> identity_loss(const FeatureStack<S>& f_iden, const FeatureStack<S>& f_iden_hat,
                     const FeatureStack<S>& f_age, IdentityTerms terms) {
  std::vector<Var<S>> parts;
  std::vector<S> signs;
  if (terms.similarity) {
    FeatureStack<S> target;
    for (const auto& f : f_iden) target.push_back(f.detach());
    parts.push_back(feature_cosine(target, f_iden_hat));
    signs.push_back(S(-1));
  }
  if (terms.orthogonality) {
    parts.push_back(abs(feature_cosine(f_iden, f_age)));
    signs.push_back(S(1));
  }
  if (parts.empty()) return Var<S>(Tensor<S>(Shape{1}, S(0)));
  return weighted_sum(parts, signs);
}

template <typename S>
Var<S> cycle_loss(const Var<S>& x, const Var<S>& x_cycled) {
  require_same_shape(x.shape(), x_cycled.shape(), "cycle_loss");
  return mean(abs(sub(x, x_cycled)));
}

double rec_weight(double a_i, double a_t, double beta, double r) {
  if (!(r > 0)) throw std::invalid_argument("rec_weight: r must be positive");
  const double delta = std::abs(a_i - a_t) / r;
  return beta * std::cos(std::numbers::pi * delta) + (1 - beta);
}

template <typename S>
Var<S> rec_loss(const Var<S>& x, const Var<S>& x_hat, const std::vector<double>& a_i,
                const std::vector<double>& a_t, const LossWeights& w) {
  require_same_shape(x.shape(), x_hat.shape(), "rec_loss");
  const Index N = x.shape()[0];
  if (static_cast<Index>(a_i.size()) != N || static_cast<Index>(a_t.size()) != N)
    throw ShapeError("rec_loss: one age pair per sample required");
  std::vector<S> weights(static_cast<std::size_t>(N));
  for (std::size_t n = 0; n < weights.size(); ++n)
    weights[n] = static_cast<S>(rec_weight(a_i[n], a_t[n], w.beta, w.r));
  return mean(scale_samples(square(sub(x, x_hat)), weights));
}

template <typename S>
Var<S> adv_d_loss(const Var<S>& scores_real, const Var<S>& scores_fake) {
  Var<S> real = mean(square(sub(scores_real, constant_like(scores_real, S(1)))));
  Var<S> fake = mean(square(scores_fake));
  return weighted_sum<S>({real, fake}, {S(0.5), S(0.5)});
}

template <typename S>
Var<S> adv_g_loss(const Var<S>& scores_fake) {
  return mean(square(sub(scores_fake, constant_like(scores_fake, S(1)))));
}

template <typename S>
Var<S> total_generator_loss(const GeneratorTerms<S>& t, const LossWeights& w) {
  auto check = [](const char* name, const Var<S>& v) {
    const double x = static_cast<double>(v.item());
    if (!std::isfinite(x)) throw NonFiniteLoss(name, x);
  };
  check("L_advG", t.adv);
  check("L_age1", t.age1);
  check("L_age2", t.age2);
  if (t.iden) check("L_iden", *t.iden);
  check("L_cyc", t.cyc);
  check("L_rec", t.rec);
  std::vector<Var<S>> terms{t.adv, t.age1, t.age2, t.cyc, t.rec};
  std::vector<S> weights{static_cast<S>(w.lambda_adv), static_cast<S>(w.lambda_age),
                         static_cast<S>(w.lambda_age), static_cast<S>(w.lambda_cyc),
                         static_cast<S>(w.lambda_rec)};
  if (t.iden) {
    terms.push_back(*t.iden);
    weights.push_back(static_cast<S>(w.lambda_iden));
  }
  return weighted_sum(terms, weights);
}

#define IDENBAT_INSTANTIATE_LOSSES(S)                                                          \
  template Var<S> feature_cosine(const FeatureStack<S>&, const FeatureStack<S>&);              \
  template Var<S> identity_loss(const FeatureStack<S>&, const FeatureStack<S>&,                \
                                const FeatureStack<S>&, IdentityTerms);                        \
  template Var<S> cycle_loss(const Var<S>&, const Var<S>&);                                    \
  template Var<S> rec_loss(const Var<S>&, const Var<S>&, const std::vector<double>&,           \
                           const std::vector<double>&, const LossWeights&);                    \
  template Var<S> adv_d_loss(const Var<S>&, const Var<S>&);                                    \
  template Var<S> adv_g_loss(const Var<S>&);                                                   \
  template Var<S> total_generator_loss(const GeneratorTerms<S>&, const LossWeights&);

IDENBAT_INSTANTIATE_LOSSES(float)
IDENBAT_INSTANTIATE_LOSSES(double)

}  // namespace idenbat
