#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "idenbat/train.hpp"

namespace idenbat {

// Lists every offending key, not just the first.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

nlohmann::json to_json(const AgeCodeConfig& c);
nlohmann::json to_json(const NetworkConfig& c);
nlohmann::json to_json(const CriticConfig& c);
nlohmann::json to_json(const LossWeights& c);
nlohmann::json to_json(const Ablation& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RegressorConfig& c);

// Each parser starts from `base` and overrides the keys present in `j`. Unknown keys and
// type errors are collected and thrown together as a ConfigError.
AgeCodeConfig age_config_from_json(const nlohmann::json& j, AgeCodeConfig base = {});
NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig base = {});
CriticConfig critic_config_from_json(const nlohmann::json& j, CriticConfig base = {});
LossWeights loss_weights_from_json(const nlohmann::json& j, LossWeights base = {});
Ablation ablation_from_json(const nlohmann::json& j, Ablation base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = TrainConfig::desk());
RegressorConfig regressor_config_from_json(const nlohmann::json& j, RegressorConfig base = {});

// "case1".."case4", "full" or "none".
Ablation parse_ablation_name(const std::string& name);

nlohmann::json read_json_file(const std::string& path);

}  // namespace idenbat
