#include "hvac/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "hvac/rng.hpp"

namespace hvac {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + " must be an object");
  std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!keys.contains(key)) {
      throw ConfigError("unknown config key '" + path + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + path + "." + key + "': " + e.what());
  }
}

}  // namespace

void SimConfig::validate() const {
  thermal.validate();
  comfort.validate();
  reward.validate();
  scenario.validate();
  if (episode_steps < 1) throw ConfigError("episode_steps must be >= 1");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0,1]");
  if (comfort.p_max != scenario.p_max || reward.beta != scenario.beta) {
    throw ConfigError("scenario p_max/beta disagree with comfort/reward");
  }
}

SimConfig config_from_json(const json& j) {
  SimConfig cfg;
  reject_unknown(j, "", {"thermal", "comfort", "reward", "scenario",
                         "episode_steps", "gamma"});
  if (j.contains("thermal")) {
    const json& t = j.at("thermal");
    reject_unknown(t, "thermal", {"rc_hours", "power_effect_degc", "hvac_kw",
                                  "mode", "dt_hours"});
    read(t, "rc_hours", cfg.thermal.rc_hours, "thermal");
    read(t, "power_effect_degc", cfg.thermal.power_effect_degc, "thermal");
    read(t, "hvac_kw", cfg.thermal.hvac_kw, "thermal");
    read(t, "dt_hours", cfg.thermal.dt_hours, "thermal");
    if (t.contains("mode")) {
      const std::string mode = t.at("mode").get<std::string>();
      if (mode == "heating") {
        cfg.thermal.mode = HvacMode::kHeating;
      } else if (mode == "cooling") {
        cfg.thermal.mode = HvacMode::kCooling;
      } else {
        throw ConfigError("thermal.mode must be 'heating' or 'cooling'");
      }
    }
  }
  if (j.contains("comfort")) {
    const json& c = j.at("comfort");
    reject_unknown(c, "comfort", {"t_set_degc", "theta_range_degc"});
    read(c, "t_set_degc", cfg.comfort.t_set_degc, "comfort");
    read(c, "theta_range_degc", cfg.comfort.theta_range_degc, "comfort");
  }
  if (j.contains("reward")) {
    const json& r = j.at("reward");
    reject_unknown(r, "reward", {"epsilon_bonus", "feedback_horizon",
                                 "include_current_feedback"});
    read(r, "epsilon_bonus", cfg.reward.epsilon_bonus, "reward");
    read(r, "feedback_horizon", cfg.reward.feedback_horizon, "reward");
    read(r, "include_current_feedback", cfg.reward.include_current_feedback,
         "reward");
  }
  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    reject_unknown(s, "scenario", {"id", "horizon_temp", "horizon_occupancy",
                                   "horizon_price", "p_max", "beta", "seed"});
    if (s.contains("id")) {
      cfg.scenario = ScenarioSpec::make(parse_scenario(s.at("id").get<std::string>()));
    }
    read(s, "horizon_temp", cfg.scenario.horizon_temp, "scenario");
    read(s, "horizon_occupancy", cfg.scenario.horizon_occupancy, "scenario");
    read(s, "horizon_price", cfg.scenario.horizon_price, "scenario");
    read(s, "p_max", cfg.scenario.p_max, "scenario");
    read(s, "beta", cfg.scenario.beta, "scenario");
    read(s, "seed", cfg.scenario.seed, "scenario");
  }
  read(j, "episode_steps", cfg.episode_steps, "");
  read(j, "gamma", cfg.gamma, "");
  cfg.comfort.p_max = cfg.scenario.p_max;
  cfg.reward.beta = cfg.scenario.beta;
  cfg.validate();
  return cfg;
}

json config_to_json(const SimConfig& cfg) {
  json j;
  j["thermal"] = {
      {"rc_hours", cfg.thermal.rc_hours},
      {"power_effect_degc", cfg.thermal.power_effect_degc},
      {"hvac_kw", cfg.thermal.hvac_kw},
      {"mode", cfg.thermal.mode == HvacMode::kHeating ? "heating" : "cooling"},
      {"dt_hours", cfg.thermal.dt_hours}};
  j["comfort"] = {{"t_set_degc", cfg.comfort.t_set_degc},
                  {"theta_range_degc", cfg.comfort.theta_range_degc}};
  j["reward"] = {{"epsilon_bonus", cfg.reward.epsilon_bonus},
                 {"feedback_horizon", cfg.reward.feedback_horizon},
                 {"include_current_feedback",
                  cfg.reward.include_current_feedback}};
  j["scenario"] = {{"id", to_string(cfg.scenario.id)},
                   {"horizon_temp", cfg.scenario.horizon_temp},
                   {"horizon_occupancy", cfg.scenario.horizon_occupancy},
                   {"horizon_price", cfg.scenario.horizon_price},
                   {"p_max", cfg.scenario.p_max},
                   {"beta", cfg.scenario.beta},
                   {"seed", cfg.scenario.seed}};
  j["episode_steps"] = cfg.episode_steps;
  j["gamma"] = cfg.gamma;
  return j;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_seed_override(SimConfig& cfg) {
  if (const char* env = std::getenv("HVACSIM_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      throw ConfigError(std::string("HVACSIM_SEED is not an integer: ") + env);
    }
    cfg.scenario.seed = v;
  }
}

std::uint64_t json_hash(const json& j) { return fnv1a64(j.dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace hvac
