#pragma once

#include <filesystem>
#include <string>

#include "hvac/domain.hpp"
#include "json.hpp"

namespace hvac {

/// Everything needed to instantiate one simulated home.
struct SimConfig {
  ThermalParams thermal;
  ComfortModel comfort;
  RewardParams reward;
  ScenarioSpec scenario;
  int episode_steps = 96;
  double gamma = 0.99;

  void validate() const;
};

/// Parses the documented JSON schema (docs/config.md). Unknown keys at any
/// level throw ConfigError naming the offending path.
SimConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SimConfig& cfg);
SimConfig load_config(const std::filesystem::path& path);

/// Applies HVACSIM_SEED from the environment when set.
void apply_seed_override(SimConfig& cfg);

/// Stable 64-bit hash of a JSON value (keys sorted by nlohmann's ordered dump).
std::uint64_t json_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

}  // namespace hvac
