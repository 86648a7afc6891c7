#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hvac/env/episode.hpp"

namespace hvac::controllers {

struct MpcConfig {
  int horizon_steps = 96;
  double grid_resolution_degc = 0.05;
  double violation_penalty_per_degc = 1e6;
  // Tightens the comfort band inside the planner only.
  double band_margin_degc = 0.0;
  // End the planning window at the episode end instead of sliding past it.
  bool clip_to_episode = false;
  bool parallel = true;

  void validate() const;
};

/// Perfect forecasts over the planning window. Entry k describes step k of
/// the window; `occupied_next[k]` is the occupancy of step k+1, the step
/// whose indoor temperature action k decides.
struct PlanWindow {
  std::vector<double> t_out;
  std::vector<double> rho;
  std::vector<std::uint8_t> occupied_next;

  std::size_t horizon() const { return t_out.size(); }
  void validate() const;
};

struct Plan {
  std::vector<int> actions;
  std::vector<double> temperatures;  // t_in_0 .. t_in_H under exact dynamics
  double cost = 0.0;                 // energy + comfort penalties, exact
};

/// Exact cost of an action sequence (the objective the planner minimizes).
double plan_cost(const PlanWindow& window, double t_in,
                 const std::vector<int>& actions, const ThermalParams& thermal,
                 const ComfortModel& comfort, const MpcConfig& config,
                 std::vector<double>* temperatures = nullptr);

/// Forward dynamic program over a temperature grid. Every grid cell keeps
/// the cheapest path reaching it together with that path's exact
/// temperature, so costs and comfort checks are evaluated on true
/// trajectories and only the merging of nearby paths is rounded. Ties keep
/// the first path in (parent cell, action) order.
Plan dp_plan_serial(const PlanWindow& window, double t_in,
                    const ThermalParams& thermal, const ComfortModel& comfort,
                    const MpcConfig& config);
/// Same result bit for bit; child expansion of each layer runs in parallel.
Plan dp_plan_parallel(const PlanWindow& window, double t_in,
                      const ThermalParams& thermal, const ComfortModel& comfort,
                      const MpcConfig& config);

/// Minimum-energy binary schedule keeping occupied steps inside the band.
Plan mpc_plan(const PlanWindow& window, double t_in,
              const ThermalParams& thermal, const ComfortModel& comfort,
              const MpcConfig& config);

/// Window of perfect forecasts starting at trace step `start`. Indices past
/// the trace end repeat the final sample.
PlanWindow window_from_traces(const ExogenousTraces& traces, std::size_t start,
                              std::size_t horizon);

/// Rolling-horizon controller with privileged access to the true traces.
class MpcController final : public env::Policy {
 public:
  explicit MpcController(MpcConfig config = {});

  std::string name() const override { return "mpc"; }
  void reset(const env::HvacEnv& env) override;
  int act(const Observation& obs, const env::HvacEnv& env, Rng& rng) override;

  const MpcConfig& config() const { return config_; }
  std::size_t plans_computed() const { return plans_; }

 private:
  MpcConfig config_;
  // Keyed on the step so repeated queries within a step do not replan.
  std::optional<std::size_t> cached_step_;
  int cached_action_ = 0;
  std::optional<Plan> incumbent_;
  std::size_t incumbent_step_ = 0;
  std::size_t plans_ = 0;
};

}  // namespace hvac::controllers
