#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvac/config.hpp"
#include "hvac/env/environment.hpp"
#include "hvac/env/episode.hpp"
#include "hvac/nn/checkpoint.hpp"
#include "hvac/nn/layers.hpp"
#include "hvac/nn/optim.hpp"
#include "hvac/rng.hpp"
#include "json.hpp"

namespace hvac::ppo {

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  int epochs = 4;
  int minibatch = 256;
  int rollout_steps = 2048;  // total over all envs
  int num_envs = 8;
  double lr = 3e-4;
  double c1 = 0.5;
  double c2 = 0.01;
  double max_grad_norm = 0.5;
  int total_updates = 150;
  std::vector<int> hidden = {64, 64};
  bool normalize_obs = true;
  /// Greedy validation every this many updates; 0 disables selection.
  int validate_every = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const PpoConfig& c);
PpoConfig ppo_config_from_json(const nlohmann::json& j);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward GAE recursion over one env's trajectory. `values` holds n + 1
/// entries: V(s_0..s_{n-1}) and the bootstrap V(s_n). dones[t] marks s_{t+1}
/// as terminal, which zeroes its value and stops the recursion.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double gamma, double lambda);

/// Shifts to zero mean and scales to unit (population) std.
void normalize_advantages(std::span<double> adv);

/// Running mean and variance (Chan et al. parallel update). Entries outside
/// `mask` are never updated and normalize to zero.
class RunningNorm {
 public:
  RunningNorm() = default;
  RunningNorm(std::size_t size, std::vector<bool> mask);

  void update(std::span<const double> rows, std::size_t count);
  void normalize(std::span<const double> x, std::span<double> out) const;
  std::size_t size() const { return mean_.size(); }
  double count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& var() const { return var_; }
  const std::vector<bool>& mask() const { return mask_; }

  void save(nn::Checkpoint& ck) const;
  static RunningNorm load(const nn::Checkpoint& ck);

 private:
  std::vector<double> mean_, var_;
  std::vector<bool> mask_;
  double count_ = 0.0;
};

/// Separate policy (2 logits) and value trunks on normalized observations.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(std::size_t obs_size, const std::vector<int>& hidden, std::vector<bool> mask,
            Rng& rng);

  nn::Mlp& pi() { return pi_; }
  nn::Mlp& v() { return v_; }
  RunningNorm& norm() { return norm_; }
  const RunningNorm& norm() const { return norm_; }
  std::size_t obs_size() const { return norm_.size(); }
  nn::ParamList params();

  /// Normalized observation rows [n x obs].
  nn::Tensor normalize(std::span<const double> raw, std::size_t rows) const;
  /// Log-probabilities [n x 2] and values [n x 1] on normalized inputs.
  nn::Tensor log_probs(const nn::Tensor& x) const;
  nn::Tensor values(const nn::Tensor& x) const;
  int greedy(std::span<const double> raw_obs) const;

  nn::Checkpoint to_checkpoint(const nlohmann::json& meta) const;
  static PolicyNet from_checkpoint(const nn::Checkpoint& ck);

 private:
  nn::Mlp pi_, v_;
  RunningNorm norm_;
  std::vector<int> hidden_;
};

/// Minimal environment interface the trainer drives.
class RlEnv {
 public:
  virtual ~RlEnv() = default;
  virtual std::size_t obs_size() const = 0;
  virtual std::vector<bool> obs_mask() const = 0;
  virtual std::vector<double> reset(Rng& rng) = 0;
  struct Step {
    std::vector<double> obs;  // next observation (after reset when done)
    double reward = 0.0;
    double cost = 0.0;
    bool done = false;
  };
  virtual Step step(int action, Rng& rng) = 0;
};

/// Trains on whole days of a trace with simulated feedback. Episodes start at
/// a uniformly drawn day in [first_day, first_day + days).
class HvacRlEnv final : public RlEnv {
 public:
  HvacRlEnv(std::shared_ptr<const ExogenousTraces> traces, SimConfig config,
            std::shared_ptr<const env::OccupancyForecasts> forecasts, int first_day,
            int days);

  std::size_t obs_size() const override;
  std::vector<bool> obs_mask() const override;
  std::vector<double> reset(Rng& rng) override;
  Step step(int action, Rng& rng) override;

 private:
  env::HvacEnv env_;
  env::SimulatedFeedback feedback_;
  int first_day_, days_;
  double episode_cost_ = 0.0;
};

struct Minibatch {
  nn::Tensor obs;  // normalized
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;  // already normalized
  std::vector<double> returns;
};

struct LossTerms {
  nn::Var policy;   // clipped surrogate objective (maximized)
  nn::Var value;    // mean squared error (minimized)
  nn::Var entropy;  // mean entropy (maximized)
  nn::Var total;    // -policy + c1 value - c2 entropy
};

LossTerms ppo_losses(nn::Tape& tape, const Minibatch& batch, PolicyNet& net,
                     const PpoConfig& config);

struct RolloutBuffer {
  std::size_t num_envs = 0;
  std::size_t steps = 0;  // per env
  std::size_t obs_size = 0;
  std::vector<double> raw_obs;   // [env][step][obs]
  std::vector<double> obs;       // normalized with the stats used for acting
  std::vector<int> actions;      // [env][step]
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;    // [env][step + 1], last entry is the bootstrap
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> finished_costs;  // total cost of episodes ending here

  std::size_t size() const { return num_envs * steps; }
};

/// Owns the vectorized envs between rollouts so episodes continue across them.
class RolloutCollector {
 public:
  RolloutCollector(std::vector<std::unique_ptr<RlEnv>> envs, std::uint64_t seed);

  RolloutBuffer collect(const PolicyNet& net, std::size_t steps_per_env);
  std::size_t num_envs() const { return envs_.size(); }

 private:
  std::vector<std::unique_ptr<RlEnv>> envs_;
  std::vector<Rng> env_rngs_, action_rngs_;
  std::vector<std::vector<double>> current_obs_;
  std::vector<double> running_cost_;
};

/// Fills advantages and returns per env.
void compute_advantages(RolloutBuffer& buf, double gamma, double lambda);

struct UpdateStats {
  double policy = 0.0, value = 0.0, entropy = 0.0, grad_norm = 0.0;
};

/// Epochs of shuffled minibatch Adam steps over one buffer.
UpdateStats update_policy(PolicyNet& net, nn::Adam& opt, const RolloutBuffer& buf,
                          const PpoConfig& config, Rng& rng);

struct TrainCurvePoint {
  int update = 0;
  double mean_episode_cost = 0.0;  // over episodes finished in the rollout
  double validation_cost = 0.0;    // NaN when not validated this update
  UpdateStats stats;
};

struct TrainResult {
  PolicyNet best;
  double best_validation_cost = 0.0;
  int best_update = 0;
  std::vector<TrainCurvePoint> curve;
  bool aborted = false;
  std::string abort_reason;
};

/// Validation score for checkpoint selection; lower is better.
using Validator = std::function<double(const PolicyNet&)>;

/// Generic PPO loop. Without a validator the final policy is returned.
TrainResult train(const PpoConfig& config,
                  std::function<std::unique_ptr<RlEnv>(std::size_t env_index)> make_env,
                  const Validator& validator = {});

/// Greedy policy adapter for episode runners and the harness.
class GreedyPolicy final : public env::Policy {
 public:
  explicit GreedyPolicy(std::shared_ptr<const PolicyNet> net) : net_(std::move(net)) {}
  std::string name() const override { return "rl"; }
  int act(const Observation& obs, const env::HvacEnv& env, Rng& rng) override;

 private:
  std::shared_ptr<const PolicyNet> net_;
};

/// Greedy mean total cost over whole days [first_day, first_day + days).
double evaluate_days(const PolicyNet& net, std::shared_ptr<const ExogenousTraces> traces,
                     const SimConfig& config,
                     std::shared_ptr<const env::OccupancyForecasts> forecasts, int first_day,
                     int days, std::uint64_t seed);

class PpoDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hvac::ppo
