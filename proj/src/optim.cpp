#include "idenbat/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace idenbat {

double StepLR::factor(int epoch) const {
  if (step_size < 1) throw std::invalid_argument("StepLR: step_size must be >= 1");
  return std::pow(gamma, epoch / step_size);
}

template <typename S>
Adam<S>::Adam(std::vector<ParamGroup<S>> groups, AdamConfig cfg)
    : groups_(std::move(groups)), cfg_(cfg) {
  for (const auto& g : groups_)
    if (!(g.lr > 0)) throw std::invalid_argument("Adam: group " + g.name + " needs lr > 0");
}

template <typename S>
void Adam<S>::step(double lr_factor) {
  ++t_;
  const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
  for (auto& g : groups_) {
    const S step = static_cast<S>(g.lr * lr_factor / bc1);
    const S sqrt_bc2 = static_cast<S>(std::sqrt(bc2));
    const S eps = static_cast<S>(cfg_.eps);
    for (auto& [name, var] : g.params) {
      if (!var->has_grad()) continue;
      auto it = moments_.find(name);
      if (it == moments_.end())
        it = moments_.emplace(name, std::make_pair(Tensor<S>(var->shape()), Tensor<S>(var->shape()))).first;
      auto& m = it->second.first.data();
      auto& v = it->second.second.data();
      const auto& grad = var->grad().data();
      m = b1 * m + (S(1) - b1) * grad;
      v = b2 * v + (S(1) - b2) * grad.square();
      var->value().data() -= step * m / (v.sqrt() / sqrt_bc2 + eps);
    }
  }
  zero_grad();
}

template <typename S>
void Adam<S>::zero_grad() {
  for (auto& g : groups_)
    for (auto& [name, var] : g.params) var->zero_grad();
}

template <typename S>
std::map<std::string, Tensor<double>> Adam<S>::state() const {
  std::map<std::string, Tensor<double>> s;
  for (const auto& [name, mv] : moments_) {
    s[name + ".m"] = mv.first.template cast<double>();
    s[name + ".v"] = mv.second.template cast<double>();
  }
  s["step"] = Tensor<double>(Shape{1}, static_cast<double>(t_));
  return s;
}

template <typename S>
void Adam<S>::load_state(const std::map<std::string, Tensor<double>>& s, const std::string& prefix) {
  moments_.clear();
  auto step = s.find(prefix + "step");
  if (step == s.end()) throw std::runtime_error("optimizer state missing " + prefix + "step");
  t_ = static_cast<long>(step->second[0]);
  for (const auto& g : groups_)
    for (const auto& [name, var] : g.params) {
      auto m = s.find(prefix + name + ".m");
      auto v = s.find(prefix + name + ".v");
      if (m == s.end() || v == s.end()) continue;
      require_same_shape(m->second.shape(), var->shape(), "optimizer state");
      moments_.emplace(name, std::make_pair(m->second.template cast<S>(), v->second.template cast<S>()));
    }
}

template <typename S>
std::vector<ParamGroup<S>> group_by_prefix(const Registry<S>& reg,
                                           const std::map<std::string, double>& lr_by_group) {
  std::vector<ParamGroup<S>> groups;
  for (const auto& [group, lr] : lr_by_group) {
    ParamGroup<S> g;
    g.name = group;
    g.lr = lr;
    for (const auto& [name, var] : reg.params)
      if (name.compare(0, group.size() + 1, group + ".") == 0) g.params.emplace_back(name, var);
    groups.push_back(std::move(g));
  }
  for (const auto& [name, var] : reg.params) {
    const std::string head = name.substr(0, name.find('.'));
    if (!lr_by_group.count(head)) throw std::invalid_argument("no learning rate for group " + head);
  }
  return groups;
}

template class Adam<float>;
template class Adam<double>;
template std::vector<ParamGroup<float>> group_by_prefix(const Registry<float>&,
                                                        const std::map<std::string, double>&);
template std::vector<ParamGroup<double>> group_by_prefix(const Registry<double>&,
                                                         const std::map<std::string, double>&);

}  // namespace idenbat
