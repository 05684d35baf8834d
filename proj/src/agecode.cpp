#include "idenbat/agecode.hpp"

#include <cmath>
#include <string>

namespace idenbat {

void AgeCodeConfig::validate() const {
  if (age_min >= age_max) throw std::invalid_argument("AgeCodeConfig: age_min must be < age_max");
  if (!(sigma > 0)) throw std::invalid_argument("AgeCodeConfig: sigma must be positive");
  if (!(bin_width > 0)) throw std::invalid_argument("AgeCodeConfig: bin_width must be positive");
}

int AgeCodeConfig::bins() const {
  return static_cast<int>(std::lround((age_max - age_min) / bin_width)) + 1;
}

void AgeCodeConfig::require_in_range(double age) const {
  if (!std::isfinite(age) || age < age_min || age > age_max)
    throw AgeRangeError("age " + std::to_string(age) + " outside [" + std::to_string(age_min) +
                        ", " + std::to_string(age_max) + "]");
}

bool AgeDistribution::valid(double tol) const {
  return probs.size() > 0 && probs.allFinite() && (probs.array() >= 0).all() &&
         std::abs(probs.sum() - 1.0) <= tol;
}

AgeDistribution soft_label(double age, const AgeCodeConfig& cfg) {
  cfg.validate();
  cfg.require_in_range(age);
  const int K = cfg.bins();
  AgeDistribution d{Eigen::VectorXd(K)};
  for (int k = 0; k < K; ++k) {
    const double z = (cfg.bin_center(k) - age) / cfg.sigma;
    d.probs[k] = std::exp(-0.5 * z * z);
  }
  d.probs /= d.probs.sum();
  return d;
}

double kl_age_loss(const AgeDistribution& pred, const AgeDistribution& target) {
  if (pred.probs.size() != target.probs.size())
    throw std::invalid_argument("kl_age_loss: length mismatch");
  double total = 0;
  for (Eigen::Index k = 0; k < pred.probs.size(); ++k) {
    const double t = target.probs[k];
    if (t > 0) total += t * (std::log(t) - std::log(std::max(pred.probs[k], 1e-12)));
  }
  return total;
}

double expected_age(const AgeDistribution& dist, const AgeCodeConfig& cfg) {
  if (dist.probs.size() != cfg.bins()) throw std::invalid_argument("expected_age: bin count");
  double e = 0;
  for (int k = 0; k < cfg.bins(); ++k) e += dist.probs[k] * cfg.bin_center(k);
  return e;
}

double normalize_age(double age, const AgeCodeConfig& cfg) {
  cfg.require_in_range(age);
  return (age - cfg.age_min) / static_cast<double>(cfg.age_max - cfg.age_min);
}

AgeDistribution distribution_from_logits(const Eigen::VectorXd& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return AgeDistribution{e / e.sum()};
}

}  // namespace idenbat
