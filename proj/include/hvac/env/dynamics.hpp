#pragma once

#include "hvac/domain.hpp"
#include "hvac/rng.hpp"

namespace hvac::env {

/// Per-step decay factor exp(-dt / RC).
double alpha(const ThermalParams& params);

/// Next indoor temperature under the controlled action a^c.
double thermal_step(double t_in, double t_out, int controlled_action,
                    const ThermalParams& params);
double thermal_step(double t_in, double t_out, int controlled_action,
                    double alpha, const ThermalParams& params);

/// Probability that a present, uncomfortable occupant overrides.
double feedback_probability(double t_in, const ComfortModel& comfort);

/// 1 when running the HVAC moves the zone toward the setpoint.
int expected_action(double t_in, double t_out, const ComfortModel& comfort);

/// Override given the Bernoulli outcome X^f already drawn.
int feedback_from_draw(int expected, int action, bool occupied, bool fired);

/// Draws X^f ~ Bernoulli(p_f) and returns the override in {-1, 0, +1}.
int simulate_feedback(double t_in, double t_out, int action, bool occupied,
                      const ComfortModel& comfort, Rng& rng);

/// HVAC on iff (a=1, no override) or (a=0, override-on).
int controlled_action(int action, int feedback);

/// w_i = e - e^{i/h}, i = 1..h.
double discomfort_weight(int i, int horizon);

/// Discomfort cost with the buffer already updated with `f_now` at the front.
double discomfort_cost(const FeedbackBuffer& buffer_after_push, int f_now,
                       bool occupied, const RewardParams& params);

/// Variant that sums only the overrides recorded before this step.
double discomfort_cost_excluding_current(const FeedbackBuffer& before_push,
                                         int f_now, bool occupied,
                                         const RewardParams& params);

double energy_cost(int controlled_action, double rho_per_kwh,
                   const ThermalParams& params);

}  // namespace hvac::env
