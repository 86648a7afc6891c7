#include "hvac/controllers/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hvac/env/dynamics.hpp"

namespace hvac::controllers {

namespace {

struct Band {
  double lo;
  double hi;
};

Band planning_band(const ComfortModel& comfort, const MpcConfig& config) {
  return {comfort.lower() + config.band_margin_degc,
          comfort.upper() - config.band_margin_degc};
}

double violation(double t, const Band& band) {
  return std::max({0.0, band.lo - t, t - band.hi});
}

double stage_cost(const PlanWindow& w, std::size_t k, int a, double next,
                  const Band& band, const ThermalParams& thermal,
                  const MpcConfig& config) {
  double c = env::energy_cost(a, w.rho[k], thermal);
  if (w.occupied_next[k]) {
    c += config.violation_penalty_per_degc * violation(next, band);
  }
  return c;
}

struct Node {
  double cost;
  double t;
  std::int32_t parent;
  std::uint8_t action;
};

// Every reachable temperature is a convex combination of the start and the
// per-step targets, so this grid contains the whole trajectory.
struct Grid {
  double t_lo = 0.0;
  double resolution = 0.05;
  std::size_t cells = 0;

  std::size_t key(double t) const {
    const double pos = std::round((t - t_lo) / resolution);
    if (pos <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(pos), cells - 1);
  }
};

Grid make_grid(const PlanWindow& w, double t_in, const ThermalParams& thermal,
               const MpcConfig& config) {
  double lo = t_in;
  double hi = t_in;
  const double boost = thermal.sign() * thermal.power_effect_degc;
  for (double t_out : w.t_out) {
    lo = std::min({lo, t_out, t_out + boost});
    hi = std::max({hi, t_out, t_out + boost});
  }
  Grid g;
  g.resolution = config.grid_resolution_degc;
  g.t_lo = lo - g.resolution;
  g.cells = static_cast<std::size_t>(std::ceil((hi - lo) / g.resolution)) + 3;
  return g;
}

template <bool kParallel>
Plan dp_plan(const PlanWindow& w, double t_in, const ThermalParams& thermal,
             const ComfortModel& comfort, const MpcConfig& config) {
  w.validate();
  config.validate();
  const Grid grid = make_grid(w, t_in, thermal, config);
  const Band band = planning_band(comfort, config);
  const double a = env::alpha(thermal);
  const std::size_t h = w.horizon();

  std::vector<std::vector<Node>> layers(h + 1);
  layers[0].push_back({0.0, t_in, -1, 0});
  std::vector<Node> children;
  std::vector<std::size_t> keys;
  std::vector<std::int64_t> slot(grid.cells, -1);
  std::vector<std::size_t> touched;

  for (std::size_t k = 0; k < h; ++k) {
    const std::vector<Node>& cur = layers[k];
    const long m = static_cast<long>(cur.size());
    children.resize(2 * cur.size());
    keys.resize(2 * cur.size());
    auto expand = [&](long i) {
      for (int action = 0; action <= 1; ++action) {
        const double next = env::thermal_step(cur[i].t, w.t_out[k], action, a, thermal);
        const std::size_t j = 2 * static_cast<std::size_t>(i) + action;
        children[j] = {cur[i].cost + stage_cost(w, k, action, next, band, thermal, config),
                       next, static_cast<std::int32_t>(i),
                       static_cast<std::uint8_t>(action)};
        keys[j] = grid.key(next);
      }
    };
    if constexpr (kParallel) {
#pragma omp parallel for schedule(static)
      for (long i = 0; i < m; ++i) expand(i);
    } else {
      for (long i = 0; i < m; ++i) expand(i);
    }
    // Merge in child order; a strict comparison keeps the first of equals.
    touched.clear();
    for (std::size_t j = 0; j < children.size(); ++j) {
      std::int64_t& s = slot[keys[j]];
      if (s < 0) {
        s = static_cast<std::int64_t>(j);
        touched.push_back(keys[j]);
      } else if (children[j].cost < children[static_cast<std::size_t>(s)].cost) {
        s = static_cast<std::int64_t>(j);
      }
    }
    std::sort(touched.begin(), touched.end());
    std::vector<Node>& next_layer = layers[k + 1];
    next_layer.reserve(touched.size());
    for (std::size_t key : touched) {
      next_layer.push_back(children[static_cast<std::size_t>(slot[key])]);
      slot[key] = -1;
    }
  }

  const std::vector<Node>& last = layers[h];
  std::size_t best = 0;
  for (std::size_t i = 1; i < last.size(); ++i) {
    if (last[i].cost < last[best].cost) best = i;
  }
  Plan plan;
  plan.cost = last[best].cost;
  plan.actions.resize(h);
  plan.temperatures.resize(h + 1);
  std::size_t idx = best;
  for (std::size_t k = h; k > 0; --k) {
    const Node& n = layers[k][idx];
    plan.actions[k - 1] = n.action;
    plan.temperatures[k] = n.t;
    idx = static_cast<std::size_t>(n.parent);
  }
  plan.temperatures[0] = t_in;
  return plan;
}

}  // namespace

void MpcConfig::validate() const {
  if (horizon_steps < 1) throw ConfigError("mpc horizon must be >= 1");
  if (!(grid_resolution_degc > 0.0)) {
    throw ConfigError("mpc grid resolution must be positive");
  }
  if (!(violation_penalty_per_degc > 0.0)) {
    throw ConfigError("mpc violation penalty must be positive");
  }
  if (band_margin_degc < 0.0) throw ConfigError("mpc band margin must be >= 0");
}

void PlanWindow::validate() const {
  if (rho.size() != t_out.size() || occupied_next.size() != t_out.size()) {
    throw ConfigError("plan window: t_out/rho/occupied_next length mismatch");
  }
  if (t_out.empty()) throw ConfigError("plan window is empty");
}

double plan_cost(const PlanWindow& window, double t_in,
                 const std::vector<int>& actions, const ThermalParams& thermal,
                 const ComfortModel& comfort, const MpcConfig& config,
                 std::vector<double>* temperatures) {
  window.validate();
  if (actions.size() != window.horizon()) {
    throw ConfigError("plan_cost: action count does not match the window");
  }
  const Band band = planning_band(comfort, config);
  const double a = env::alpha(thermal);
  if (temperatures) temperatures->assign(1, t_in);
  double t = t_in;
  double total = 0.0;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    const double next = env::thermal_step(t, window.t_out[k], actions[k], a, thermal);
    total += stage_cost(window, k, actions[k], next, band, thermal, config);
    t = next;
    if (temperatures) temperatures->push_back(t);
  }
  return total;
}

Plan dp_plan_serial(const PlanWindow& window, double t_in,
                    const ThermalParams& thermal, const ComfortModel& comfort,
                    const MpcConfig& config) {
  return dp_plan<false>(window, t_in, thermal, comfort, config);
}

Plan dp_plan_parallel(const PlanWindow& window, double t_in,
                      const ThermalParams& thermal, const ComfortModel& comfort,
                      const MpcConfig& config) {
  return dp_plan<true>(window, t_in, thermal, comfort, config);
}

Plan mpc_plan(const PlanWindow& window, double t_in,
              const ThermalParams& thermal, const ComfortModel& comfort,
              const MpcConfig& config) {
  return config.parallel ? dp_plan_parallel(window, t_in, thermal, comfort, config)
                         : dp_plan_serial(window, t_in, thermal, comfort, config);
}

PlanWindow window_from_traces(const ExogenousTraces& traces, std::size_t start,
                              std::size_t horizon) {
  if (traces.size() == 0) throw ConfigError("plan window over an empty trace");
  const std::size_t last = traces.size() - 1;
  PlanWindow w;
  w.t_out.reserve(horizon);
  w.rho.reserve(horizon);
  w.occupied_next.reserve(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    const std::size_t i = std::min(start + k, last);
    w.t_out.push_back(traces.t_out_degc[i]);
    w.rho.push_back(traces.rho_per_kwh[i]);
    w.occupied_next.push_back(traces.occupancy[std::min(start + k + 1, last)]);
  }
  return w;
}

MpcController::MpcController(MpcConfig config) : config_(config) {
  config_.validate();
}

void MpcController::reset(const env::HvacEnv&) {
  cached_step_.reset();
  incumbent_.reset();
}

int MpcController::act(const Observation& obs, const env::HvacEnv& env, Rng&) {
  const std::size_t step = env.state().step_index;
  if (cached_step_ == step) return cached_action_;
  const std::size_t horizon =
      config_.clip_to_episode ? env.episode_end() - step
                              : static_cast<std::size_t>(config_.horizon_steps);
  const PlanWindow window = window_from_traces(env.traces(), step, horizon);
  Plan plan = mpc_plan(window, obs.t_in, env.config().thermal,
                       env.config().comfort, config_);
  ++plans_;
  // The unexecuted tail of the previous plan is still a candidate; grid
  // merging can lose it, so rolling never does worse than planning once.
  if (incumbent_ && incumbent_step_ + 1 == step && incumbent_->actions.size() > 1) {
    std::vector<int> tail(incumbent_->actions.begin() + 1, incumbent_->actions.end());
    tail.resize(horizon, 0);
    std::vector<double> temps;
    const double cost = plan_cost(window, obs.t_in, tail, env.config().thermal,
                                  env.config().comfort, config_, &temps);
    if (cost < plan.cost) plan = {std::move(tail), std::move(temps), cost};
  }
  incumbent_ = plan;
  incumbent_step_ = step;
  cached_step_ = step;
  cached_action_ = plan.actions.front();
  return cached_action_;
}

}  // namespace hvac::controllers
