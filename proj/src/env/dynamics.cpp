#include "hvac/env/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace hvac::env {

namespace {

void check_binary(int a, const char* what) {
  if (a != 0 && a != 1) {
    throw DomainError(std::string(what) + " must be 0 or 1, got " +
                      std::to_string(a));
  }
}

}  // namespace

double alpha(const ThermalParams& params) {
  return std::exp(-params.dt_hours / params.rc_hours);
}

double thermal_step(double t_in, double t_out, int controlled_action,
                    double a, const ThermalParams& params) {
  check_binary(controlled_action, "controlled action");
  const double drive =
      t_out + params.sign() * controlled_action * params.power_effect_degc;
  return a * t_in + (1.0 - a) * drive;
}

double thermal_step(double t_in, double t_out, int controlled_action,
                    const ThermalParams& params) {
  return thermal_step(t_in, t_out, controlled_action, alpha(params), params);
}

double feedback_probability(double t_in, const ComfortModel& comfort) {
  const double z = (t_in - comfort.t_set_degc) / comfort.theta_range_degc;
  return std::min(z * z, comfort.p_max);
}

int expected_action(double t_in, double t_out, const ComfortModel& comfort) {
  const double set = comfort.t_set_degc;
  return ((t_in > set && t_out > set) || (t_in < set && t_out < set)) ? 1 : 0;
}

int feedback_from_draw(int expected, int action, bool occupied, bool fired) {
  if (!occupied || expected == action || !fired) return 0;
  return expected == 1 ? 1 : -1;
}

int simulate_feedback(double t_in, double t_out, int action, bool occupied,
                      const ComfortModel& comfort, Rng& rng) {
  check_binary(action, "action");
  const bool fired = rng.bernoulli(feedback_probability(t_in, comfort));
  return feedback_from_draw(expected_action(t_in, t_out, comfort), action,
                            occupied, fired);
}

int controlled_action(int action, int feedback) {
  check_binary(action, "action");
  if (feedback < -1 || feedback > 1) {
    throw DomainError("feedback must be -1, 0 or +1, got " +
                      std::to_string(feedback));
  }
  return ((action == 1 && feedback == 0) || (action == 0 && feedback == 1)) ? 1
                                                                            : 0;
}

double discomfort_weight(int i, int horizon) {
  return std::numbers::e -
         std::exp(static_cast<double>(i) / static_cast<double>(horizon));
}

double discomfort_cost(const FeedbackBuffer& buffer, int f_now, bool occupied,
                       const RewardParams& params) {
  if (f_now != 0) {
    // buffer[0] is f_now and takes w_1.
    const int h = static_cast<int>(buffer.size());
    double sum = 0.0;
    for (int i = 1; i <= h; ++i) {
      sum += discomfort_weight(i, h) * std::abs(buffer[i - 1]);
    }
    return sum;
  }
  return occupied ? -params.epsilon_bonus : 0.0;
}

double discomfort_cost_excluding_current(const FeedbackBuffer& before_push,
                                         int f_now, bool occupied,
                                         const RewardParams& params) {
  if (f_now != 0) {
    // before_push[i-1] holds f_{t-i}.
    const int h = static_cast<int>(before_push.size());
    double sum = 0.0;
    for (int i = 1; i <= h; ++i) {
      sum += discomfort_weight(i, h) * std::abs(before_push[i - 1]);
    }
    return sum;
  }
  return occupied ? -params.epsilon_bonus : 0.0;
}

double energy_cost(int controlled_action, double rho_per_kwh,
                   const ThermalParams& params) {
  check_binary(controlled_action, "controlled action");
  return controlled_action * params.hvac_kw * params.dt_hours * rho_per_kwh;
}

}  // namespace hvac::env
