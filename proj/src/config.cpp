#include "idenbat/config.hpp"

#include <fstream>
#include <set>

namespace idenbat {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& p : v) s += (s.empty() ? "" : "; ") + p;
  return s;
}

class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& problems)
      : j_(j), path_(std::move(path)), problems_(problems) {
    if (!j_.is_object()) problems_.push_back((path_.empty() ? "config" : path_) + ": expected an object");
  }

  template <typename T>
  void field(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      problems_.push_back(path_ + key + ": " + e.what());
    }
  }

  template <typename T, typename Parse>
  void nested(const char* key, T& dst, Parse parse) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    dst = parse(j_.at(key), dst, path_ + key + ".", problems_);
  }

  ~Reader() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) problems_.push_back("unknown key " + path_ + k);
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

template <typename T>
void check(const T& c, const std::string& path, std::vector<std::string>& problems) {
  try {
    c.validate();
  } catch (const std::exception& e) {
    problems.push_back((path.empty() ? "" : path) + e.what());
  }
}

AgeCodeConfig parse_ages(const json& j, AgeCodeConfig c, const std::string& p,
                         std::vector<std::string>& pr) {
  {
    Reader r(j, p, pr);
    r.field("age_min", c.age_min);
    r.field("age_max", c.age_max);
    r.field("bin_width", c.bin_width);
    r.field("sigma", c.sigma);
  }
  check(c, p, pr);
  return c;
}

NetworkConfig parse_net(const json& j, NetworkConfig c, const std::string& p,
                        std::vector<std::string>& pr) {
  {
    Reader r(j, p, pr);
    r.field("dims", c.dims);
    r.field("levels", c.levels);
    r.field("channels", c.channels);
    r.field("age_embed_dim", c.age_embed_dim);
    r.field("mapping_depth", c.mapping_depth);
    r.field("negative_slope", c.negative_slope);
    r.nested("ages", c.ages, parse_ages);
  }
  check(c, p, pr);
  return c;
}

CriticConfig parse_critic(const json& j, CriticConfig c, const std::string& p,
                          std::vector<std::string>& pr) {
  {
    Reader r(j, p, pr);
    r.field("dims", c.dims);
    r.field("channels", c.channels);
    r.field("kernel", c.kernel);
    r.field("negative_slope", c.negative_slope);
    r.field("age_embed_dim", c.age_embed_dim);
    r.field("mapping_depth", c.mapping_depth);
    r.field("conditional", c.conditional);
    r.nested("ages", c.ages, parse_ages);
  }
  check(c, p, pr);
  return c;
}

LossWeights parse_weights(const json& j, LossWeights c, const std::string& p,
                          std::vector<std::string>& pr) {
  {
    Reader r(j, p, pr);
    r.field("lambda_adv", c.lambda_adv);
    r.field("lambda_age", c.lambda_age);
    r.field("lambda_iden", c.lambda_iden);
    r.field("lambda_cyc", c.lambda_cyc);
    r.field("lambda_rec", c.lambda_rec);
    r.field("beta", c.beta);
    r.field("r", c.r);
  }
  check(c, p, pr);
  return c;
}

Ablation parse_ablation(const json& j, Ablation c, const std::string& p, std::vector<std::string>& pr) {
  if (j.is_string()) {
    try {
      return parse_ablation_name(j.get<std::string>());
    } catch (const std::exception& e) {
      pr.push_back(p + e.what());
      return c;
    }
  }
  Reader r(j, p, pr);
  r.field("disable_iden_loss", c.disable_iden_loss);
  r.field("disable_cos_term", c.disable_cos_term);
  r.field("disable_ortho_term", c.disable_ortho_term);
  r.field("unconditional_disc", c.unconditional_disc);
  return c;
}

StepLR parse_sched(const json& j, StepLR c, const std::string& p, std::vector<std::string>& pr) {
  Reader r(j, p, pr);
  r.field("step_size", c.step_size);
  r.field("gamma", c.gamma);
  return c;
}

AdamConfig parse_adam(const json& j, AdamConfig c, const std::string& p, std::vector<std::string>& pr) {
  Reader r(j, p, pr);
  r.field("beta1", c.beta1);
  r.field("beta2", c.beta2);
  r.field("eps", c.eps);
  return c;
}

TrainConfig parse_train(const json& j, TrainConfig c, const std::string& p, std::vector<std::string>& pr) {
  {
    Reader r(j, p, pr);
    r.field("lr_encoder", c.lr_encoder);
    r.field("lr_generator_aim_disc", c.lr_generator_aim_disc);
    r.field("lr_mapping_iem", c.lr_mapping_iem);
    r.nested("scheduler", c.scheduler, parse_sched);
    r.nested("adam", c.adam, parse_adam);
    r.field("epochs", c.epochs);
    r.field("batch", c.batch);
    r.nested("weights", c.weights, parse_weights);
    r.nested("ablation", c.ablation, parse_ablation);
    r.field("seed", c.seed);
    r.field("flip", c.flip);
    r.field("blur_max_sigma", c.blur_max_sigma);
    r.field("max_steps", c.max_steps);
    r.nested("net", c.net, parse_net);
    r.nested("critic", c.critic, parse_critic);
  }
  if (pr.empty()) check(c, p, pr);
  return c;
}

RegressorConfig parse_regressor(const json& j, RegressorConfig c, const std::string& p,
                                std::vector<std::string>& pr) {
  Reader r(j, p, pr);
  r.nested("net", c.net, parse_net);
  r.field("epochs", c.epochs);
  r.field("batch", c.batch);
  r.field("lr", c.lr);
  r.field("seed", c.seed);
  r.field("flip", c.flip);
  r.field("blur_max_sigma", c.blur_max_sigma);
  return c;
}

template <typename T, typename Parse>
T parse_top(const json& j, T base, Parse parse) {
  std::vector<std::string> problems;
  T out = parse(j, std::move(base), "", problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument("invalid config: " + join(problems)), problems_(std::move(problems)) {}

json to_json(const AgeCodeConfig& c) {
  return {{"age_min", c.age_min}, {"age_max", c.age_max}, {"bin_width", c.bin_width}, {"sigma", c.sigma}};
}

json to_json(const NetworkConfig& c) {
  return {{"dims", c.dims},
          {"levels", c.levels},
          {"channels", c.channels},
          {"age_embed_dim", c.age_embed_dim},
          {"mapping_depth", c.mapping_depth},
          {"negative_slope", c.negative_slope},
          {"ages", to_json(c.ages)}};
}

json to_json(const CriticConfig& c) {
  return {{"dims", c.dims},
          {"channels", c.channels},
          {"kernel", c.kernel},
          {"negative_slope", c.negative_slope},
          {"age_embed_dim", c.age_embed_dim},
          {"mapping_depth", c.mapping_depth},
          {"conditional", c.conditional},
          {"ages", to_json(c.ages)}};
}

json to_json(const LossWeights& c) {
  return {{"lambda_adv", c.lambda_adv}, {"lambda_age", c.lambda_age}, {"lambda_iden", c.lambda_iden},
          {"lambda_cyc", c.lambda_cyc}, {"lambda_rec", c.lambda_rec}, {"beta", c.beta},
          {"r", c.r}};
}

json to_json(const Ablation& c) {
  return {{"disable_iden_loss", c.disable_iden_loss},
          {"disable_cos_term", c.disable_cos_term},
          {"disable_ortho_term", c.disable_ortho_term},
          {"unconditional_disc", c.unconditional_disc}};
}

json to_json(const TrainConfig& c) {
  return {{"lr_encoder", c.lr_encoder},
          {"lr_generator_aim_disc", c.lr_generator_aim_disc},
          {"lr_mapping_iem", c.lr_mapping_iem},
          {"scheduler", {{"step_size", c.scheduler.step_size}, {"gamma", c.scheduler.gamma}}},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"weights", to_json(c.weights)},
          {"ablation", to_json(c.ablation)},
          {"seed", c.seed},
          {"flip", c.flip},
          {"blur_max_sigma", c.blur_max_sigma},
          {"max_steps", c.max_steps},
          {"net", to_json(c.net)},
          {"critic", to_json(c.critic)}};
}

json to_json(const RegressorConfig& c) {
  return {{"net", to_json(c.net)}, {"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr},
          {"seed", c.seed}, {"flip", c.flip}, {"blur_max_sigma", c.blur_max_sigma}};
}

AgeCodeConfig age_config_from_json(const json& j, AgeCodeConfig base) {
  return parse_top(j, base, parse_ages);
}
NetworkConfig network_config_from_json(const json& j, NetworkConfig base) {
  return parse_top(j, base, parse_net);
}
CriticConfig critic_config_from_json(const json& j, CriticConfig base) {
  return parse_top(j, base, parse_critic);
}
LossWeights loss_weights_from_json(const json& j, LossWeights base) {
  return parse_top(j, base, parse_weights);
}
Ablation ablation_from_json(const json& j, Ablation base) { return parse_top(j, base, parse_ablation); }
TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  return parse_top(j, base, parse_train);
}
RegressorConfig regressor_config_from_json(const json& j, RegressorConfig base) {
  return parse_top(j, base, parse_regressor);
}

Ablation parse_ablation_name(const std::string& name) {
  if (name == "full" || name == "none" || name == "case0") return {};
  if (name.size() == 5 && name.compare(0, 4, "case") == 0 && name[4] >= '1' && name[4] <= '4')
    return Ablation::from_case(name[4] - '0');
  throw std::invalid_argument("unknown ablation '" + name + "' (expected case1..case4 or full)");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError({path + ": " + e.what()});
  }
}

}  // namespace idenbat
