#pragma once

#include "hvac/env/episode.hpp"

namespace hvac::controllers {

constexpr double kDefaultDeadbandDegc = 0.5;

/// Occupancy-driven thermostat: off while the home is empty, bang-bang with
/// hysteresis around the setpoint while occupied. Inside the deadband the
/// previous action is held.
int rule_based_act(bool occupied, double t_in, const ComfortModel& comfort,
                   HvacMode mode, int previous_action,
                   double deadband_degc = kDefaultDeadbandDegc);

class RuleBasedController final : public env::Policy {
 public:
  explicit RuleBasedController(double deadband_degc = kDefaultDeadbandDegc)
      : deadband_(deadband_degc) {}

  std::string name() const override { return "rule"; }
  void reset(const env::HvacEnv& env) override { previous_ = 0; }
  int act(const Observation& obs, const env::HvacEnv& env, Rng& rng) override;

 private:
  double deadband_;
  int previous_ = 0;
};

}  // namespace hvac::controllers
