#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvac/config.hpp"
#include "hvac/env/episode.hpp"
#include "hvac/harness/metrics.hpp"
#include "hvac/ppo/ppo.hpp"
#include "hvac/predictor/predictor.hpp"
#include "json.hpp"

namespace hvac::harness {

/// One evaluation run: a controller on the test split under one setting.
struct CellSpec {
  std::string controller = "rule";  // rule | mpc | rl
  ScenarioId scenario = ScenarioId::kS1;
  double beta = 0.5;
  double p_max = 1.0;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;  // rl only

  void validate() const;
  std::string label() const;
};

nlohmann::json to_json(const CellSpec& c);
CellSpec cell_from_json(const nlohmann::json& j);

/// Shared read-only inputs for every cell of a run.
struct EvalContext {
  std::shared_ptr<const ExogenousTraces> test;
  SimConfig base;
  std::string dataset_id;
  // Predictor forecasts over the test split; required by S4 cells.
  std::shared_ptr<const env::OccupancyForecasts> test_forecasts;
  std::string forecasts_id;
};

/// Simulation config of a cell: base config with the cell's scenario, beta,
/// p_max and seed applied.
SimConfig cell_config(const CellSpec& cell, const SimConfig& base);

/// Controller of a cell; rl cells load their checkpoint and check that it
/// was trained for the cell's scenario.
std::unique_ptr<env::Policy> make_policy(const CellSpec& cell);

/// Content key of a cell: hash of the cell, its config and the dataset.
std::string cell_key(const CellSpec& cell, const EvalContext& ctx);

/// Hash of a file's bytes, or nullopt when it cannot be read.
std::optional<std::string> file_hash(const std::filesystem::path& path);

/// Runs every whole day of the test split. Feedback and policy streams are
/// substreams of the cell seed indexed by day.
std::vector<env::EpisodeRecord> evaluate_cell(const CellSpec& cell, const EvalContext& ctx);

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StoredResult {
  std::string key;
  std::string status;  // ok | failed
  CellSpec cell;
  std::string config_hash;
  std::string checkpoint_hash;  // empty for benchmark cells
  std::optional<MetricsSummary> metrics;
  std::string error;

  bool ok() const { return status == "ok"; }
};

nlohmann::json to_json(const StoredResult& r);
StoredResult stored_result_from_json(const nlohmann::json& j);

/// Directory of content-addressed cell files: `<key>.json` holds the summary
/// and `<key>.records` the episode records of a successful cell.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::optional<StoredResult> get(const std::string& key) const;
  void put(const StoredResult& result, const std::vector<env::EpisodeRecord>* records);
  std::vector<env::EpisodeRecord> records(const std::string& key) const;
  /// Every stored result, ordered by key.
  std::vector<StoredResult> all() const;

 private:
  std::filesystem::path dir_;
};

struct MatrixOutcome {
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::vector<std::string> keys;  // in cell order
};

/// Evaluates cells not already stored. A stored success is reused while its
/// checkpoint is unchanged; stored failures are retried.
MatrixOutcome run_matrix(const std::vector<CellSpec>& cells, const EvalContext& ctx,
                         ResultStore& store);

/// Checkpoint file name for a trained policy.
std::string checkpoint_name(ScenarioId scenario, double beta, std::uint64_t seed);

struct MatrixPlan {
  std::vector<ScenarioId> scenarios{ScenarioId::kS1, ScenarioId::kS2, ScenarioId::kS3,
                                    ScenarioId::kS4};
  std::vector<double> betas{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool include_benchmarks = true;
  bool include_rl = true;
  std::filesystem::path checkpoint_dir = "checkpoints";
};

/// Benchmarks run once per (beta, seed); they never read the masked
/// observation, so their scenario is fixed to S1.
std::vector<CellSpec> matrix_cells(const MatrixPlan& plan);

struct SweepPlan {
  std::vector<ScenarioId> scenarios{ScenarioId::kS1, ScenarioId::kS2, ScenarioId::kS3,
                                    ScenarioId::kS4};
  std::vector<double> p_grid{0.5, 0.625, 0.75, 0.875, 1.0};
  double beta = 0.5;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path checkpoint_dir = "checkpoints";
};

/// Policies trained at p_max 1 evaluated across the p_max grid.
std::vector<CellSpec> sweep_cells(const SweepPlan& plan);

/// Predictor forecasts over both splits. Test forecasts see the end of the
/// training split as history, as they would when deployed.
struct ForecastBundle {
  std::shared_ptr<const env::OccupancyForecasts> train;
  std::shared_ptr<const env::OccupancyForecasts> test;
  std::string id;  // hash of the predictor checkpoint
};

ForecastBundle make_forecasts(predictor::OccupancyPredictor& model, const ExogenousTraces& train,
                              const ExogenousTraces& test);

/// Everything needed to train one policy.
struct TrainRequest {
  std::shared_ptr<const ExogenousTraces> train;
  std::shared_ptr<const env::OccupancyForecasts> train_forecasts;  // S4
  SimConfig base;
  ScenarioId scenario = ScenarioId::kS1;
  double beta = 0.5;
  std::uint64_t seed = 0;
  ppo::PpoConfig ppo;
  int train_days = 20;
  int validation_days = 3;
};

/// Trains at p_max 1 on the first days of the training split and selects the
/// checkpoint with the lowest cost on the remaining validation days.
ppo::TrainResult train_policy(const TrainRequest& request);

/// Writes the selected policy with its provenance metadata.
void save_policy(const ppo::TrainResult& result, const TrainRequest& request,
                 const std::filesystem::path& path);

}  // namespace hvac::harness
