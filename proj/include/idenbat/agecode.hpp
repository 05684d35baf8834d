#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <vector>

#include "idenbat/tensor.hpp"

namespace idenbat {

class AgeRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct AgeCodeConfig {
  int age_min = 48;
  int age_max = 80;
  double bin_width = 1.0;
  double sigma = 1.0;

  void validate() const;
  int bins() const;
  double bin_center(int k) const { return age_min + k * bin_width; }
  void require_in_range(double age) const;
};

// Probability vector over the configured age bins.
struct AgeDistribution {
  Eigen::VectorXd probs;

  bool valid(double tol = 1e-6) const;
};

// Gaussian soft label centred at `age`, truncated to the bin range and renormalized.
AgeDistribution soft_label(double age, const AgeCodeConfig& cfg);

// KL(target || pred) with pred floored at 1e-12 before the log.
double kl_age_loss(const AgeDistribution& pred, const AgeDistribution& target);

// Soft-argmax: sum_k p_k * centre_k.
double expected_age(const AgeDistribution& dist, const AgeCodeConfig& cfg);

// (age - age_min) / (age_max - age_min)
double normalize_age(double age, const AgeCodeConfig& cfg);

// Softmax of one row of logits.
AgeDistribution distribution_from_logits(const Eigen::VectorXd& logits);

// Stacked soft labels, (N, bins).
template <typename S>
Tensor<S> soft_label_batch(const std::vector<double>& ages, const AgeCodeConfig& cfg) {
  const int K = cfg.bins();
  Tensor<S> out(Shape{static_cast<Index>(ages.size()), K});
  for (std::size_t n = 0; n < ages.size(); ++n) {
    const AgeDistribution d = soft_label(ages[n], cfg);
    for (int k = 0; k < K; ++k) out[static_cast<Index>(n) * K + k] = static_cast<S>(d.probs[k]);
  }
  return out;
}

// Expected ages of each row of (N, bins) logits.
template <typename S>
std::vector<double> expected_ages(const Tensor<S>& logits, const AgeCodeConfig& cfg) {
  const Index N = logits.dim(0), K = logits.dim(1);
  std::vector<double> out(static_cast<std::size_t>(N));
  for (Index n = 0; n < N; ++n) {
    Eigen::VectorXd row = logits.data().segment(n * K, K).template cast<double>().matrix();
    out[static_cast<std::size_t>(n)] = expected_age(distribution_from_logits(row), cfg);
  }
  return out;
}

}  // namespace idenbat
