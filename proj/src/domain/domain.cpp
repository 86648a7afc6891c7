#include "hvac/domain.hpp"

#include <cmath>
#include <numbers>

namespace hvac {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ThermalParams::validate() const {
  require(rc_hours > 0.0, "thermal.rc_hours must be > 0");
  require(hvac_kw > 0.0, "thermal.hvac_kw must be > 0");
  require(power_effect_degc > 0.0, "thermal.power_effect_degc must be > 0");
  require(dt_hours > 0.0, "thermal.dt_hours must be > 0");
  require(mode == HvacMode::kHeating || mode == HvacMode::kCooling,
          "thermal.mode must be heating or cooling");
}

void ComfortModel::validate() const {
  require(theta_range_degc > 0.0, "comfort.theta_range_degc must be > 0");
  require(p_max > 0.0 && p_max <= 1.0, "comfort.p_max must lie in (0, 1]");
}

void RewardParams::validate() const {
  require(beta >= 0.0 && beta <= 1.0, "reward.beta must lie in [0, 1]");
  require(epsilon_bonus > 0.0, "reward.epsilon_bonus must be > 0");
  require(feedback_horizon >= 1, "reward.feedback_horizon must be >= 1");
}

FeedbackBuffer::FeedbackBuffer(int horizon) {
  if (horizon < 1) throw ConfigError("feedback buffer horizon must be >= 1");
  entries_.assign(static_cast<std::size_t>(horizon), 0);
}

void FeedbackBuffer::push(int feedback) {
  if (feedback < -1 || feedback > 1) {
    throw DomainError("feedback must be -1, 0 or +1, got " +
                      std::to_string(feedback));
  }
  for (std::size_t i = entries_.size() - 1; i > 0; --i) {
    entries_[i] = entries_[i - 1];
  }
  entries_[0] = feedback;
}

void ExogenousTraces::validate() const {
  const std::size_t n = t_out_degc.size();
  if (rho_per_kwh.size() != n || occupancy.size() != n) {
    throw ConfigError("exogenous traces must have equal lengths (t_out=" +
                      std::to_string(n) + ", rho=" +
                      std::to_string(rho_per_kwh.size()) + ", occupancy=" +
                      std::to_string(occupancy.size()) + ")");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (occupancy[i] > 1) {
      throw ConfigError("occupancy must be 0/1 at step " + std::to_string(i));
    }
    if (!std::isfinite(t_out_degc[i]) || !std::isfinite(rho_per_kwh[i])) {
      throw ConfigError("non-finite exogenous value at step " +
                        std::to_string(i));
    }
  }
  require(dt_hours > 0.0, "traces.dt_hours must be > 0");
  require(cycle_steps >= 1, "traces.cycle_steps must be >= 1");
}

ExogenousTraces ExogenousTraces::slice(std::size_t begin,
                                       std::size_t end) const {
  if (begin > end || end > size()) {
    throw std::out_of_range("trace slice [" + std::to_string(begin) + ", " +
                            std::to_string(end) + ") outside length " +
                            std::to_string(size()));
  }
  ExogenousTraces out;
  out.t_out_degc.assign(t_out_degc.begin() + begin, t_out_degc.begin() + end);
  out.rho_per_kwh.assign(rho_per_kwh.begin() + begin,
                         rho_per_kwh.begin() + end);
  out.occupancy.assign(occupancy.begin() + begin, occupancy.begin() + end);
  out.dt_hours = dt_hours;
  out.cycle_steps = cycle_steps;
  out.start_epoch_s =
      start_epoch_s + static_cast<std::int64_t>(std::llround(
                          static_cast<double>(begin) * dt_hours * 3600.0));
  return out;
}

std::string to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::kS1: return "S1";
    case ScenarioId::kS2: return "S2";
    case ScenarioId::kS3: return "S3";
    case ScenarioId::kS4: return "S4";
  }
  return "?";
}

ScenarioId parse_scenario(std::string_view text) {
  if (text == "S1") return ScenarioId::kS1;
  if (text == "S2") return ScenarioId::kS2;
  if (text == "S3") return ScenarioId::kS3;
  if (text == "S4") return ScenarioId::kS4;
  throw ConfigError("unknown scenario '" + std::string(text) +
                    "' (expected S1..S4)");
}

std::string to_string(OccupancyForecastSource src) {
  switch (src) {
    case OccupancyForecastSource::kPerfect: return "perfect";
    case OccupancyForecastSource::kNone: return "none";
    case OccupancyForecastSource::kPredictor: return "predictor";
  }
  return "?";
}

ScenarioSpec ScenarioSpec::make(ScenarioId id) {
  ScenarioSpec s;
  s.id = id;
  switch (id) {
    case ScenarioId::kS1:
      s.include_occupancy_now = true;
      s.occupancy_forecast_source = OccupancyForecastSource::kPerfect;
      break;
    case ScenarioId::kS2:
      s.include_occupancy_now = false;
      s.occupancy_forecast_source = OccupancyForecastSource::kNone;
      break;
    case ScenarioId::kS3:
      s.include_occupancy_now = true;
      s.occupancy_forecast_source = OccupancyForecastSource::kNone;
      break;
    case ScenarioId::kS4:
      s.include_occupancy_now = true;
      s.occupancy_forecast_source = OccupancyForecastSource::kPredictor;
      break;
  }
  return s;
}

void ScenarioSpec::validate() const {
  const ScenarioSpec canon = make(id);
  require(include_occupancy_now == canon.include_occupancy_now &&
              occupancy_forecast_source == canon.occupancy_forecast_source,
          "scenario " + to_string(id) +
              " has inconsistent occupancy masking (expected occupancy_now=" +
              (canon.include_occupancy_now ? "true" : "false") +
              ", forecast=" + to_string(canon.occupancy_forecast_source) +
              ")");
  require(horizon_temp >= 0 && horizon_occupancy >= 0 && horizon_price >= 0,
          "scenario horizons must be >= 0");
  require(p_max > 0.0 && p_max <= 1.0, "scenario.p_max must lie in (0, 1]");
  require(beta >= 0.0 && beta <= 1.0, "scenario.beta must lie in [0, 1]");
}

CostBreakdown CostBreakdown::combine(double discomfort, double energy,
                                     double beta) {
  CostBreakdown c;
  c.discomfort = discomfort;
  c.energy = energy;
  c.total = beta * discomfort + (1.0 - beta) * energy;
  c.reward = -c.total;
  return c;
}

std::vector<double> Observation::flatten() const {
  std::vector<double> out;
  out.reserve(6 + t_out_forecast.size() + occupancy_forecast.size() +
              feedback.size() + rho_forecast.size());
  out.push_back(t_in);
  out.push_back(t_out);
  out.push_back(tau_sin);
  out.push_back(tau_cos);
  out.insert(out.end(), t_out_forecast.begin(), t_out_forecast.end());
  out.push_back(occupancy_now_present ? occupancy_now : 0.0);
  for (double v : occupancy_forecast) {
    out.push_back(occupancy_forecast_present ? v : 0.0);
  }
  out.insert(out.end(), feedback.begin(), feedback.end());
  out.push_back(rho_now);
  out.insert(out.end(), rho_forecast.begin(), rho_forecast.end());
  return out;
}

std::vector<bool> Observation::mask() const {
  std::vector<bool> out;
  out.insert(out.end(), 4 + t_out_forecast.size(), true);
  out.push_back(occupancy_now_present);
  out.insert(out.end(), occupancy_forecast.size(), occupancy_forecast_present);
  out.insert(out.end(), feedback.size() + 1 + rho_forecast.size(), true);
  return out;
}

std::size_t Observation::flat_size(const ScenarioSpec& s,
                                   int feedback_horizon) {
  return static_cast<std::size_t>(6 + s.horizon_temp + s.horizon_occupancy +
                                  feedback_horizon + s.horizon_price);
}

std::pair<double, double> cyclic_encode(std::int64_t step_index,
                                        std::int64_t cycle_steps) {
  if (cycle_steps < 1) throw ConfigError("cycle_steps must be >= 1");
  if (step_index < 0) throw ConfigError("step_index must be >= 0");
  // Reduce first so the encoding is exactly periodic.
  const std::int64_t phase = step_index % cycle_steps;
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(phase) /
                       static_cast<double>(cycle_steps);
  // Quarter points come back exact instead of 6e-17 residues.
  if (4 * phase == cycle_steps) return {1.0, 0.0};
  if (2 * phase == cycle_steps) return {0.0, -1.0};
  if (4 * phase == 3 * cycle_steps) return {-1.0, 0.0};
  return {std::sin(angle), std::cos(angle)};
}

double rc_from_cooldown(double t_lower, double t_upper,
                        double t_cool_seconds) {
  if (!(t_lower > 0.0) || !(t_upper > 0.0)) {
    throw DomainError("cool-down temperatures must be > 0");
  }
  if (t_lower >= t_upper) {
    throw DomainError("rc_from_cooldown requires t_lower < t_upper");
  }
  if (!(t_cool_seconds > 0.0)) {
    throw DomainError("cool-down duration must be > 0");
  }
  // ln((lo/hi)^(1/t)) evaluated as ln(lo/hi)/t to avoid pow round-off.
  const double log_rate = std::log(t_lower / t_upper) / t_cool_seconds;
  return -1.0 / (3600.0 * log_rate);
}

}  // namespace hvac
