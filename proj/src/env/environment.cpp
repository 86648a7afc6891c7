#include "hvac/env/environment.hpp"

#include <algorithm>

#include "hvac/env/dynamics.hpp"

namespace hvac::env {

std::string to_string(FeedbackOrigin origin) {
  switch (origin) {
    case FeedbackOrigin::kNone: return "none";
    case FeedbackOrigin::kSimulated: return "simulated";
    case FeedbackOrigin::kHuman: return "human";
  }
  return "?";
}

FeedbackDecision SimulatedFeedback::resolve(const FeedbackContext& ctx) {
  return {ctx.simulated,
          ctx.simulated != 0 ? FeedbackOrigin::kSimulated
                             : FeedbackOrigin::kNone,
          false};
}

FeedbackDecision NoFeedback::resolve(const FeedbackContext&) { return {}; }

void HumanFeedback::submit(int value) {
  if (value < -1 || value > 1) {
    throw DomainError("feedback must be -1, 0 or +1, got " +
                      std::to_string(value));
  }
  pending_ = value;
}

FeedbackDecision HumanFeedback::resolve(const FeedbackContext& ctx) {
  if (pending_) {
    const int value = *pending_;
    pending_.reset();
    if (value != 0 && !ctx.occupied) {
      return {0, FeedbackOrigin::kNone, true};
    }
    return {value, value != 0 ? FeedbackOrigin::kHuman : FeedbackOrigin::kNone,
            false};
  }
  if (fallback_ == Fallback::kSimulated) {
    return SimulatedFeedback().resolve(ctx);
  }
  return {};
}

HvacEnv::HvacEnv(std::shared_ptr<const ExogenousTraces> traces,
                 SimConfig config,
                 std::shared_ptr<const OccupancyForecasts> forecasts)
    : traces_(std::move(traces)),
      forecasts_(std::move(forecasts)),
      config_(std::move(config)),
      alpha_(env::alpha(config_.thermal)),
      state_{config_.comfort.t_set_degc, 0,
             FeedbackBuffer(config_.reward.feedback_horizon)} {
  if (!traces_ || traces_->size() == 0) {
    throw ConfigError("environment needs a non-empty trace");
  }
  config_.validate();
  traces_->validate();
  if (config_.scenario.occupancy_forecast_source ==
      OccupancyForecastSource::kPredictor) {
    if (!forecasts_ ||
        forecasts_->horizon !=
            static_cast<std::size_t>(config_.scenario.horizon_occupancy) ||
        forecasts_->probabilities.size() !=
            traces_->size() * forecasts_->horizon) {
      throw ConfigError(
          "scenario " + to_string(config_.scenario.id) +
          " needs predictor forecasts matching the trace and horizon");
    }
  }
  reset(0);
}

Observation HvacEnv::reset(std::size_t start_step,
                           std::optional<double> t_in0) {
  if (start_step >= traces_->size()) {
    throw std::out_of_range("episode start " + std::to_string(start_step) +
                            " beyond trace length " +
                            std::to_string(traces_->size()));
  }
  alpha_ = env::alpha(config_.thermal);
  episode_start_ = start_step;
  episode_end_ = std::min(traces_->size(),
                          start_step + static_cast<std::size_t>(
                                           config_.episode_steps));
  state_.t_in = t_in0.value_or(config_.comfort.t_set_degc);
  state_.step_index = start_step;
  state_.buffer = FeedbackBuffer(config_.reward.feedback_horizon);
  return observe();
}

bool HvacEnv::occupied_now() const {
  return traces_->occupancy[std::min(state_.step_index, traces_->size() - 1)] != 0;
}

Observation HvacEnv::observe() const {
  const ExogenousTraces& tr = *traces_;
  const ScenarioSpec& sc = config_.scenario;
  const std::size_t last = tr.size() - 1;
  const std::size_t t = std::min(state_.step_index, last);
  auto ahead = [&](std::size_t j) { return std::min(t + j, last); };

  Observation o;
  o.t_in = state_.t_in;
  o.t_out = tr.t_out_degc[t];
  const auto [s, c] = cyclic_encode(static_cast<std::int64_t>(state_.step_index),
                                    tr.cycle_steps);
  o.tau_sin = s;
  o.tau_cos = c;
  o.t_out_forecast.resize(sc.horizon_temp);
  for (int j = 0; j < sc.horizon_temp; ++j) {
    o.t_out_forecast[j] = tr.t_out_degc[ahead(j + 1)];
  }
  o.occupancy_now_present = sc.include_occupancy_now;
  o.occupancy_now = sc.include_occupancy_now ? tr.occupancy[t] : 0.0;
  o.occupancy_forecast.assign(sc.horizon_occupancy, 0.0);
  switch (sc.occupancy_forecast_source) {
    case OccupancyForecastSource::kPerfect:
      o.occupancy_forecast_present = true;
      for (int j = 0; j < sc.horizon_occupancy; ++j) {
        o.occupancy_forecast[j] = tr.occupancy[ahead(j + 1)];
      }
      break;
    case OccupancyForecastSource::kPredictor:
      o.occupancy_forecast_present = true;
      for (int j = 0; j < sc.horizon_occupancy; ++j) {
        o.occupancy_forecast[j] = forecasts_->at(t, j);
      }
      break;
    case OccupancyForecastSource::kNone:
      o.occupancy_forecast_present = false;
      break;
  }
  const auto entries = state_.buffer.entries();
  o.feedback.assign(entries.begin(), entries.end());
  o.rho_now = tr.rho_per_kwh[t];
  o.rho_forecast.resize(sc.horizon_price);
  for (int j = 0; j < sc.horizon_price; ++j) {
    o.rho_forecast[j] = tr.rho_per_kwh[ahead(j + 1)];
  }
  return o;
}

StepOutcome HvacEnv::step(int action, FeedbackSource& source,
                          Rng& feedback_rng) {
  if (done()) {
    throw EpisodeFinished("step " + std::to_string(state_.step_index) +
                          " is past the episode end " +
                          std::to_string(episode_end_));
  }
  if (action != 0 && action != 1) {
    throw DomainError("action must be 0 or 1, got " + std::to_string(action));
  }
  const ExogenousTraces& tr = *traces_;
  const std::size_t t = state_.step_index;

  StepOutcome out;
  out.step_index = t;
  out.t_in = state_.t_in;
  out.t_out = tr.t_out_degc[t];
  out.rho = tr.rho_per_kwh[t];
  out.occupied = tr.occupancy[t];
  out.action = action;

  FeedbackContext ctx;
  ctx.step_index = t;
  ctx.t_in = out.t_in;
  ctx.t_out = out.t_out;
  ctx.occupied = out.occupied != 0;
  ctx.action = action;
  ctx.expected = expected_action(out.t_in, out.t_out, config_.comfort);
  ctx.probability = feedback_probability(out.t_in, config_.comfort);
  // X^f is drawn every step, occupied or not.
  const bool fired = feedback_rng.bernoulli(ctx.probability);
  ctx.simulated = feedback_from_draw(ctx.expected, action, ctx.occupied, fired);

  FeedbackDecision decision = source.resolve(ctx);
  if (decision.value != 0 && !ctx.occupied) {
    decision = {0, FeedbackOrigin::kNone, true};
  }
  out.feedback = decision.value;
  out.origin = decision.origin;
  out.feedback_rejected = decision.rejected;
  out.feedback_probability = ctx.probability;
  out.controlled_action = controlled_action(action, out.feedback);

  const FeedbackBuffer before = state_.buffer;
  state_.buffer.push(out.feedback);
  const double discomfort =
      config_.reward.include_current_feedback
          ? discomfort_cost(state_.buffer, out.feedback, ctx.occupied,
                            config_.reward)
          : discomfort_cost_excluding_current(before, out.feedback,
                                              ctx.occupied, config_.reward);
  const double energy =
      energy_cost(out.controlled_action, out.rho, config_.thermal);
  out.costs = CostBreakdown::combine(discomfort, energy, config_.reward.beta);

  out.next_t_in = thermal_step(out.t_in, out.t_out, out.controlled_action,
                               alpha_, config_.thermal);
  state_.t_in = out.next_t_in;
  state_.step_index = t + 1;
  out.done = done();
  out.observation = observe();
  return out;
}

}  // namespace hvac::env
