#pragma once

#include <map>
#include <string>
#include <vector>

#include "idenbat/layers.hpp"

namespace idenbat {

// lr * gamma^floor(epoch / step_size), epoch counted from 0.
struct StepLR {
  int step_size = 30;
  double gamma = 0.3;

  double factor(int epoch) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct ParamGroup {
  std::string name;
  double lr = 1e-3;
  std::vector<std::pair<std::string, Var<S>*>> params;
};

template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamGroup<S>> groups, AdamConfig cfg = {});

  // Applies one update with every group's lr scaled by `lr_factor`; parameters without a
  // gradient are left alone. Gradients are cleared afterwards.
  void step(double lr_factor = 1.0);
  void zero_grad();

  std::vector<ParamGroup<S>>& groups() { return groups_; }
  const std::vector<ParamGroup<S>>& groups() const { return groups_; }
  long steps() const { return t_; }

  // Moment buffers keyed "<param>.m" / "<param>.v" plus the step counter.
  std::map<std::string, Tensor<double>> state() const;
  void load_state(const std::map<std::string, Tensor<double>>& s, const std::string& prefix);

 private:
  std::vector<ParamGroup<S>> groups_;
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::pair<Tensor<S>, Tensor<S>>> moments_;
};

// Group a registry's parameters by the first component of their names.
template <typename S>
std::vector<ParamGroup<S>> group_by_prefix(const Registry<S>& reg,
                                           const std::map<std::string, double>& lr_by_group);

}  // namespace idenbat
