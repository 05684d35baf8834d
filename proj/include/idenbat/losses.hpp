#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "idenbat/nets.hpp"

namespace idenbat {

struct LossWeights {
  double lambda_adv = 1.0;
  double lambda_age = 0.05;
  double lambda_iden = 1.0;
  double lambda_cyc = 0.1;
  double lambda_rec = 0.1;
  double beta = 0.5;
  double r = 33.0;

  void validate() const;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, double value);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

// Per level: flatten every sample, cosine with a 1e-8 floor; mean over samples and levels.
template <typename S>
Var<S> feature_cosine(const FeatureStack<S>& a, const FeatureStack<S>& b);

struct IdentityTerms {
  bool similarity = true;
  bool orthogonality = true;
};

// -cos(sg(F_iden), F_iden_hat) + |cos(F_iden, F_age)|
template <typename S>
Var<S> identity_loss(const FeatureStack<S>& f_iden, const FeatureStack<S>& f_iden_hat,
                     const FeatureStack<S>& f_age, IdentityTerms terms = {});

// Mean absolute difference.
template <typename S>
Var<S> cycle_loss(const Var<S>& x, const Var<S>& x_cycled);

// beta * cos(pi * |a_i - a_t| / r) + (1 - beta)
double rec_weight(double a_i, double a_t, double beta, double r);

// Per-sample rec_weight times the sample's mean squared difference, averaged over the batch.
template <typename S>
Var<S> rec_loss(const Var<S>& x, const Var<S>& x_hat, const std::vector<double>& a_i,
                const std::vector<double>& a_t, const LossWeights& w);

// 0.5 * mean((real - 1)^2) + 0.5 * mean(fake^2)
template <typename S>
Var<S> adv_d_loss(const Var<S>& scores_real, const Var<S>& scores_fake);

// mean((fake - 1)^2)
template <typename S>
Var<S> adv_g_loss(const Var<S>& scores_fake);

template <typename S>
struct GeneratorTerms {
  Var<S> adv;
  Var<S> age1;
  Var<S> age2;
  std::optional<Var<S>> iden;  // absent when the identity loss is disabled
  Var<S> cyc;
  Var<S> rec;
};

// lambda_adv L_adv + lambda_age (L_age1 + L_age2) + lambda_iden L_iden + lambda_cyc L_cyc
// + lambda_rec L_rec. Throws NonFiniteLoss naming the first non-finite term.
template <typename S>
Var<S> total_generator_loss(const GeneratorTerms<S>& t, const LossWeights& w);

}  // namespace idenbat
