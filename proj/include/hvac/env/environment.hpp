#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvac/config.hpp"
#include "hvac/domain.hpp"
#include "hvac/rng.hpp"

namespace hvac::env {

enum class FeedbackOrigin { kNone, kSimulated, kHuman };
std::string to_string(FeedbackOrigin origin);

/// What a feedback source sees at the step boundary. `simulated` already
/// holds the Bernoulli-sampled override so every source consumes exactly one
/// draw per step and streams stay aligned across sources.
struct FeedbackContext {
  std::size_t step_index = 0;
  double t_in = 0.0;
  double t_out = 0.0;
  bool occupied = false;
  int action = 0;
  int expected = 0;
  double probability = 0.0;
  int simulated = 0;
};

struct FeedbackDecision {
  int value = 0;
  FeedbackOrigin origin = FeedbackOrigin::kNone;
  bool rejected = false;  // an override arrived while the trace is unoccupied
};

class FeedbackSource {
 public:
  virtual ~FeedbackSource() = default;
  virtual FeedbackDecision resolve(const FeedbackContext& ctx) = 0;
};

class SimulatedFeedback final : public FeedbackSource {
 public:
  FeedbackDecision resolve(const FeedbackContext& ctx) override;
};

class NoFeedback final : public FeedbackSource {
 public:
  FeedbackDecision resolve(const FeedbackContext& ctx) override;
};

/// Overrides supplied by a person. A pending value is consumed at the next
/// step boundary; later submissions within the same step replace earlier ones.
class HumanFeedback final : public FeedbackSource {
 public:
  enum class Fallback { kNone, kSimulated };
  explicit HumanFeedback(Fallback fallback = Fallback::kNone)
      : fallback_(fallback) {}

  void submit(int value);
  bool has_pending() const { return pending_.has_value(); }
  FeedbackDecision resolve(const FeedbackContext& ctx) override;

 private:
  Fallback fallback_;
  std::optional<int> pending_;
};

/// Per-step occupancy probabilities from a forecaster: row t holds
/// P(O_{t+1}) .. P(O_{t+h}).
struct OccupancyForecasts {
  std::size_t horizon = 0;
  std::vector<double> probabilities;  // [trace length x horizon]

  double at(std::size_t t, std::size_t j) const {
    return probabilities[t * horizon + j];
  }
};

struct EnvState {
  double t_in = 22.0;
  std::size_t step_index = 0;
  FeedbackBuffer buffer;
};

struct StepOutcome {
  std::size_t step_index = 0;
  double t_in = 0.0;
  double t_out = 0.0;
  double rho = 0.0;
  int occupied = 0;
  int action = 0;
  int feedback = 0;
  FeedbackOrigin origin = FeedbackOrigin::kNone;
  bool feedback_rejected = false;
  int controlled_action = 0;
  double feedback_probability = 0.0;
  CostBreakdown costs;
  double next_t_in = 0.0;
  bool done = false;
  Observation observation;  // s_{t+1}
};

class EpisodeFinished : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Single-zone HITL environment over a fixed exogenous trace.
class HvacEnv {
 public:
  HvacEnv(std::shared_ptr<const ExogenousTraces> traces, SimConfig config,
          std::shared_ptr<const OccupancyForecasts> forecasts = nullptr);

  /// Starts an episode at `start_step`; indoor temperature defaults to the
  /// setpoint and the feedback buffer to zeros.
  Observation reset(std::size_t start_step,
                    std::optional<double> t_in0 = std::nullopt);
  StepOutcome step(int action, FeedbackSource& source, Rng& feedback_rng);

  Observation observe() const;
  bool done() const { return state_.step_index >= episode_end_; }
  const EnvState& state() const { return state_; }
  std::size_t episode_start() const { return episode_start_; }
  std::size_t episode_end() const { return episode_end_; }
  const SimConfig& config() const { return config_; }
  SimConfig& mutable_config() { return config_; }
  const ExogenousTraces& traces() const { return *traces_; }
  bool occupied_now() const;
  double alpha() const { return alpha_; }

 private:
  std::shared_ptr<const ExogenousTraces> traces_;
  std::shared_ptr<const OccupancyForecasts> forecasts_;
  SimConfig config_;
  double alpha_;
  EnvState state_;
  std::size_t episode_start_ = 0;
  std::size_t episode_end_ = 0;
};

}  // namespace hvac::env
