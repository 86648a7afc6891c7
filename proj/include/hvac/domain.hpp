#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hvac {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class HvacMode : int { kHeating = 1, kCooling = -1 };

/// First-order equivalent-thermal-parameter model of a single zone.
struct ThermalParams {
  double rc_hours = 16.5;          // thermal time constant R*C
  double power_effect_degc = 20.0; // temperature offset of running HVAC
  double hvac_kw = 3.5;            // electrical draw while on
  HvacMode mode = HvacMode::kHeating;
  double dt_hours = 0.25;

  void validate() const;
  int sign() const { return static_cast<int>(mode); }
};

struct ComfortModel {
  double t_set_degc = 22.0;
  double theta_range_degc = 3.0;
  double p_max = 1.0;

  void validate() const;
  double lower() const { return t_set_degc - theta_range_degc; }
  double upper() const { return t_set_degc + theta_range_degc; }
};

struct RewardParams {
  double beta = 0.5;
  double epsilon_bonus = 0.01;
  int feedback_horizon = 16;
  // When true the discomfort sum includes the override pushed this step
  // (it takes weight w_1). When false only the pre-existing entries count.
  bool include_current_feedback = true;

  void validate() const;
};

/// Fixed-length override history, most recent first. Entries are -1, 0, +1.
class FeedbackBuffer {
 public:
  explicit FeedbackBuffer(int horizon = 16);

  void push(int feedback);
  int operator[](std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  std::span<const int> entries() const { return entries_; }
  bool operator==(const FeedbackBuffer&) const = default;

 private:
  std::vector<int> entries_;
};

/// Aligned 15-minute (by default) exogenous series.
struct ExogenousTraces {
  std::vector<double> t_out_degc;
  std::vector<double> rho_per_kwh;
  std::vector<std::uint8_t> occupancy;
  double dt_hours = 0.25;
  int cycle_steps = 96;
  std::int64_t start_epoch_s = 0;

  std::size_t size() const { return t_out_degc.size(); }
  void validate() const;
  ExogenousTraces slice(std::size_t begin, std::size_t end) const;
  bool operator==(const ExogenousTraces&) const = default;
};

enum class ScenarioId { kS1, kS2, kS3, kS4 };
enum class OccupancyForecastSource { kPerfect, kNone, kPredictor };

std::string to_string(ScenarioId id);
ScenarioId parse_scenario(std::string_view text);
std::string to_string(OccupancyForecastSource src);

struct ScenarioSpec {
  ScenarioId id = ScenarioId::kS1;
  bool include_occupancy_now = true;
  OccupancyForecastSource occupancy_forecast_source =
      OccupancyForecastSource::kPerfect;
  int horizon_temp = 8;
  int horizon_occupancy = 8;
  int horizon_price = 8;
  double p_max = 1.0;
  double beta = 0.5;
  std::uint64_t seed = 0;

  /// Canonical masking for the given scenario with default horizons.
  static ScenarioSpec make(ScenarioId id);
  void validate() const;
};

struct CostBreakdown {
  double discomfort = 0.0;
  double energy = 0.0;
  double total = 0.0;
  double reward = 0.0;

  static CostBreakdown combine(double discomfort, double energy, double beta);
};

/// State vector s_t. Masked scenario fields are zero-filled, never dropped,
/// so every scenario shares one flattened layout.
struct Observation {
  double t_in = 0.0;
  double t_out = 0.0;
  double tau_sin = 0.0;
  double tau_cos = 1.0;
  std::vector<double> t_out_forecast;
  double occupancy_now = 0.0;
  bool occupancy_now_present = true;
  std::vector<double> occupancy_forecast;
  bool occupancy_forecast_present = true;
  std::vector<double> feedback;
  double rho_now = 0.0;
  std::vector<double> rho_forecast;

  std::vector<double> flatten() const;
  /// One flag per flattened entry; false where the scenario masks the field.
  std::vector<bool> mask() const;
  static std::size_t flat_size(const ScenarioSpec& s, int feedback_horizon);
};

std::pair<double, double> cyclic_encode(std::int64_t step_index,
                                        std::int64_t cycle_steps);

/// RC time constant in hours from an observed free cool-down between two
/// temperatures (outdoor at 0 degC).
double rc_from_cooldown(double t_lower, double t_upper, double t_cool_seconds);

}  // namespace hvac
