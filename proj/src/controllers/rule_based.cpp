#include "hvac/controllers/rule_based.hpp"

namespace hvac::controllers {

int rule_based_act(bool occupied, double t_in, const ComfortModel& comfort,
                   HvacMode mode, int previous_action, double deadband_degc) {
  if (!occupied) return 0;
  const double low = comfort.t_set_degc - deadband_degc;
  const double high = comfort.t_set_degc + deadband_degc;
  if (mode == HvacMode::kHeating) {
    if (t_in < low) return 1;
    if (t_in > high) return 0;
  } else {
    if (t_in > high) return 1;
    if (t_in < low) return 0;
  }
  return previous_action;
}

int RuleBasedController::act(const Observation& obs, const env::HvacEnv& env,
                             Rng&) {
  previous_ = rule_based_act(env.occupied_now(), obs.t_in, env.config().comfort,
                             env.config().thermal.mode, previous_, deadband_);
  return previous_;
}

}  // namespace hvac::controllers
