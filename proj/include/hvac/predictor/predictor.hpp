#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvac/domain.hpp"
#include "hvac/env/environment.hpp"
#include "hvac/nn/checkpoint.hpp"
#include "hvac/nn/layers.hpp"
#include "json.hpp"

namespace hvac::predictor {

struct PredictorConfig {
  int past_horizon = 96;   // h^p; the window holds h^p + 1 steps
  int future_horizon = 8;  // h^O
  int hidden = 32;         // per direction
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;
  int cycle_steps = 96;

  void validate() const;
};

nlohmann::json to_json(const PredictorConfig& c);
PredictorConfig predictor_config_from_json(const nlohmann::json& j);

/// Sliding windows over one occupancy series. Sample i is anchored at
/// t = past_horizon + i: past rows hold [O, sin, cos] for t - h^p .. t, the
/// future rows hold tau for t+1 .. t+h^O, and targets hold O_{t+1..t+h^O}.
struct WindowSet {
  std::size_t past_len = 0;
  std::size_t future_len = 0;
  std::vector<double> past;        // [n x past_len x 3]
  std::vector<double> future_tau;  // [n x future_len x 2]
  std::vector<double> targets;     // [n x future_len]

  std::size_t size() const { return future_len ? targets.size() / future_len : 0; }
};

/// Windows from one contiguous series. `index_offset` is the cycle index of
/// element 0; windows never reach outside the given series.
WindowSet build_training_windows(std::span<const std::uint8_t> occupancy, int cycle_steps,
                                 const PredictorConfig& config,
                                 std::int64_t index_offset = 0);

class PredictorDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-layer bidirectional LSTM forecaster with a sigmoid head.
class OccupancyPredictor {
 public:
  OccupancyPredictor() = default;
  explicit OccupancyPredictor(const PredictorConfig& config);

  /// Logits [batch x h^O] for the given samples of `windows`.
  nn::Var logits(nn::Tape& tape, const WindowSet& windows,
                 std::span<const std::size_t> samples);
  /// Probabilities for one sample: past is (h^p + 1) x 3 row-major, future
  /// tau is h^O x 2.
  std::vector<double> predict(std::span<const double> past,
                              std::span<const double> future_tau);
  /// Probabilities [n x h^O] for every sample of `windows`.
  std::vector<double> predict_all(const WindowSet& windows, std::size_t batch = 256);
  /// Context vector [fwd final; bwd at earliest step] for one sample.
  std::vector<double> context(std::span<const double> past);

  nn::ParamList params();
  const PredictorConfig& config() const { return config_; }
  nn::Linear& head() { return head_; }

  nn::Checkpoint to_checkpoint();
  static OccupancyPredictor from_checkpoint(const nn::Checkpoint& ck);

 private:
  nn::Var encode(nn::Tape& tape, const WindowSet& w, std::span<const std::size_t> samples);

  PredictorConfig config_;
  nn::LstmCell l1f_, l1b_, l2f_, l2b_;
  nn::Linear head_;
};

struct TrainResult {
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // full-set mean BCE after each epoch
};

/// Mean binary cross-entropy of the model over every (sample, step) pair.
double dataset_loss(OccupancyPredictor& model, const WindowSet& windows,
                    std::size_t batch = 256);

/// Minibatch Adam on mean BCE; shuffling is seeded from config.seed.
TrainResult train(OccupancyPredictor& model, const WindowSet& windows);

/// Fraction of (sample, step) pairs where (p > threshold) equals the target.
double accuracy(std::span<const double> probabilities, std::span<const double> targets,
                double threshold = 0.5);
double accuracy(OccupancyPredictor& model, const WindowSet& windows,
                double threshold = 0.5);

/// Forecast table for every step of a trace. Steps with less than h^p of
/// history repeat the first observed value to fill the window.
env::OccupancyForecasts forecast_trace(OccupancyPredictor& model,
                                       const ExogenousTraces& traces,
                                       std::span<const std::uint8_t> history = {});

}  // namespace hvac::predictor
