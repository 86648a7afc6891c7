#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hvac/bridge/service.hpp"
#include "hvac/config.hpp"
#include "hvac/harness/experiment.hpp"
#include "hvac/harness/report.hpp"
#include "hvac/ingest.hpp"
#include "hvac/nn/checkpoint.hpp"
#include "hvac/predictor/predictor.hpp"

using namespace hvac;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Dataset {
  ExogenousTraces full, train, test;
  std::string id;
};

Dataset load_data(const fs::path& path, int train_days, int test_days) {
  Dataset d;
  if (path.extension() == ".csv") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    d.full = ingest::read_traces_csv(in);
  } else {
    d.full = ingest::load_dataset(path);
  }
  std::tie(d.train, d.test) = ingest::split_train_test(d.full, train_days, test_days);
  d.id = harness::file_hash(path).value_or(path.string());
  return d;
}

// Seed precedence: explicit flag, then HVACSIM_SEED, then the config file.
std::uint64_t resolve_seed(SimConfig& cfg, const std::optional<std::uint64_t>& flag) {
  apply_seed_override(cfg);
  if (flag) cfg.scenario.seed = *flag;
  return cfg.scenario.seed;
}

SimConfig load_sim_config(const std::string& path) {
  SimConfig cfg = path.empty() ? SimConfig{} : load_config(path);
  cfg.validate();
  return cfg;
}

std::vector<ScenarioId> parse_scenarios(const std::vector<std::string>& names) {
  std::vector<ScenarioId> out;
  for (const auto& n : names) out.push_back(parse_scenario(n));
  return out;
}

bool needs_predictor(const std::vector<ScenarioId>& scenarios) {
  for (ScenarioId s : scenarios) {
    if (s == ScenarioId::kS4) return true;
  }
  return false;
}

std::optional<harness::ForecastBundle> load_forecasts(const std::string& predictor_path,
                                                      const Dataset& data) {
  if (predictor_path.empty()) return std::nullopt;
  predictor::OccupancyPredictor model =
      predictor::OccupancyPredictor::from_checkpoint(nn::load_checkpoint(predictor_path));
  return harness::make_forecasts(model, data.train, data.test);
}

harness::EvalContext make_context(const Dataset& data, const SimConfig& cfg,
                                  const std::optional<harness::ForecastBundle>& fc) {
  harness::EvalContext ctx;
  ctx.test = std::make_shared<const ExogenousTraces>(data.test);
  ctx.base = cfg;
  ctx.dataset_id = data.id;
  if (fc) {
    ctx.test_forecasts = fc->test;
    ctx.forecasts_id = fc->id;
  }
  return ctx;
}

void print_metrics(const harness::MetricsSummary& m) {
  std::cout << harness::to_json(m).dump(2) << "\n";
}

void print_outcome(const harness::MatrixOutcome& o) {
  std::printf("cells %zu, computed %zu, reused %zu, failed %zu\n", o.keys.size(), o.computed,
              o.skipped, o.failed);
}

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hvacsim: single-zone HVAC simulation with occupant overrides"};
  app.require_subcommand(1);

  std::string config_path;
  int train_days = 23, test_days = 7;
  std::optional<std::uint64_t> seed_flag;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Simulation config JSON (docs/config.md)");
    cmd->add_option("--seed", seed_flag, "Seed; overrides HVACSIM_SEED and the config");
  };
  auto add_split = [&](CLI::App* cmd) {
    cmd->add_option("--train-days", train_days, "Days in the training split")
        ->capture_default_str();
    cmd->add_option("--test-days", test_days, "Days in the test split")->capture_default_str();
  };

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Align raw occupancy, weather and price CSVs");
  std::string occ_csv, weather_csv, price_csv, ingest_out, ingest_csv;
  int residents = 1;
  ingest_cmd->add_option("--occupancy", occ_csv, "Occupancy CSV")->required();
  ingest_cmd->add_option("--residents", residents, "Resident columns")->capture_default_str();
  ingest_cmd->add_option("--weather", weather_csv, "Hourly temperature CSV")->required();
  ingest_cmd->add_option("--price", price_csv, "Hourly price CSV ($/MWh)")->required();
  ingest_cmd->add_option("--out", ingest_out, "Binary dataset output")->required();
  ingest_cmd->add_option("--csv", ingest_csv, "Also write the aligned traces as CSV");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  int synth_days = 30;
  std::string synth_out, synth_csv;
  synth_cmd->add_option("--days", synth_days, "Days to generate")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Binary dataset output")->required();
  synth_cmd->add_option("--csv", synth_csv, "Also write CSV");
  add_common(synth_cmd);

  // train-predictor
  auto* tp_cmd = app.add_subcommand("train-predictor", "Train the occupancy predictor");
  std::string dataset, tp_out, tp_config;
  int tp_epochs = -1;
  tp_cmd->add_option("--dataset", dataset, "Dataset (.bin or .csv)")->required();
  tp_cmd->add_option("--out", tp_out, "Checkpoint output")->required();
  tp_cmd->add_option("--predictor-config", tp_config, "Predictor hyperparameters JSON");
  tp_cmd->add_option("--epochs", tp_epochs, "Override the epoch count");
  add_common(tp_cmd);
  add_split(tp_cmd);

  // train-rl
  auto* rl_cmd = app.add_subcommand("train-rl", "Train PPO policies (one per run)");
  std::string scenario_name = "S1", ckpt_dir = "checkpoints", predictor_path, ppo_config;
  double beta = 0.5;
  int runs = 1, updates = -1;
  rl_cmd->add_option("--dataset", dataset, "Dataset (.bin or .csv)")->required();
  rl_cmd->add_option("--scenario", scenario_name, "S1..S4")->capture_default_str();
  rl_cmd->add_option("--beta", beta, "Discomfort weight")->capture_default_str();
  rl_cmd->add_option("--runs", runs, "Independent runs; run i uses seed base + i")
      ->capture_default_str();
  rl_cmd->add_option("--out-dir", ckpt_dir, "Checkpoint directory")->capture_default_str();
  rl_cmd->add_option("--predictor", predictor_path, "Predictor checkpoint (S4)");
  rl_cmd->add_option("--ppo-config", ppo_config, "PPO hyperparameters JSON");
  rl_cmd->add_option("--updates", updates, "Override the update count");
  add_common(rl_cmd);
  add_split(rl_cmd);

  // run
  auto* run_cmd = app.add_subcommand("run", "Evaluate one controller on the test split");
  std::string controller = "rule", checkpoint, records_out;
  double p_max = 1.0;
  run_cmd->add_option("--dataset", dataset, "Dataset (.bin or .csv)")->required();
  run_cmd->add_option("--controller", controller, "rule, mpc or rl")->capture_default_str();
  run_cmd->add_option("--scenario", scenario_name, "S1..S4")->capture_default_str();
  run_cmd->add_option("--beta", beta, "Discomfort weight")->capture_default_str();
  run_cmd->add_option("--p-max", p_max, "Feedback probability cap")->capture_default_str();
  run_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint (rl)");
  run_cmd->add_option("--predictor", predictor_path, "Predictor checkpoint (S4)");
  run_cmd->add_option("--records", records_out, "Write episode records here");
  add_common(run_cmd);
  add_split(run_cmd);

  // matrix
  auto* matrix_cmd = app.add_subcommand("matrix", "Run the scenario x beta x seed matrix");
  std::string store_dir = "results";
  std::vector<std::string> scenario_names{"S1", "S2", "S3", "S4"};
  std::vector<double> betas{0.1, 0.3, 0.5, 0.7, 0.9};
  int seeds = 5;
  bool no_benchmarks = false, no_rl = false;
  matrix_cmd->add_option("--dataset", dataset, "Dataset (.bin or .csv)")->required();
  matrix_cmd->add_option("--store", store_dir, "Result store directory")->capture_default_str();
  matrix_cmd->add_option("--checkpoints", ckpt_dir, "Checkpoint directory")
      ->capture_default_str();
  matrix_cmd->add_option("--scenarios", scenario_names, "Scenarios")->capture_default_str();
  matrix_cmd->add_option("--betas", betas, "Beta grid")->capture_default_str();
  matrix_cmd->add_option("--seeds", seeds, "Runs per cell (seeds 0..n-1)")
      ->capture_default_str();
  matrix_cmd->add_flag("--no-benchmarks", no_benchmarks, "Skip rule and mpc cells");
  matrix_cmd->add_flag("--no-rl", no_rl, "Skip learned-policy cells");
  matrix_cmd->add_option("--predictor", predictor_path, "Predictor checkpoint (S4)");
  matrix_cmd->add_option("--config", config_path, "Simulation config JSON");
  add_split(matrix_cmd);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate trained policies across p_max caps");
  std::vector<double> p_grid{0.5, 0.625, 0.75, 0.875, 1.0};
  sweep_cmd->add_option("--dataset", dataset, "Dataset (.bin or .csv)")->required();
  sweep_cmd->add_option("--store", store_dir, "Result store directory")->capture_default_str();
  sweep_cmd->add_option("--checkpoints", ckpt_dir, "Checkpoint directory")
      ->capture_default_str();
  sweep_cmd->add_option("--scenarios", scenario_names, "Scenarios")->capture_default_str();
  sweep_cmd->add_option("--p-grid", p_grid, "p_max grid")->capture_default_str();
  sweep_cmd->add_option("--beta", beta, "Discomfort weight")->capture_default_str();
  sweep_cmd->add_option("--seeds", seeds, "Runs per cell (seeds 0..n-1)")
      ->capture_default_str();
  sweep_cmd->add_option("--predictor", predictor_path, "Predictor checkpoint (S4)");
  sweep_cmd->add_option("--config", config_path, "Simulation config JSON");
  add_split(sweep_cmd);

  // report
  auto* report_cmd = app.add_subcommand("report", "Write CSV tables and a text summary");
  std::string report_dir = "report";
  report_cmd->add_option("--store", store_dir, "Result store directory")->capture_default_str();
  report_cmd->add_option("--out", report_dir, "Report directory")->capture_default_str();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the live session service");
  std::string host = "127.0.0.1", sessions_dir = "sessions", static_dir;
  int port = 8765;
  bool whole_trace = false;
  serve_cmd->add_option("--dataset", dataset, "Dataset (.bin or .csv)")->required();
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port (0 picks one)")->capture_default_str();
  serve_cmd->add_option("--records-dir", sessions_dir, "Where closed sessions are written")
      ->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Dashboard bundle to serve at /");
  serve_cmd->add_option("--predictor", predictor_path, "Predictor checkpoint (S4 sessions)");
  serve_cmd->add_flag("--whole-trace", whole_trace, "Serve every day instead of the test split");
  serve_cmd->add_option("--config", config_path, "Simulation config JSON");
  add_split(serve_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      const auto occ = ingest::resample_15min(ingest::load_occupancy_csv(occ_csv, residents));
      const auto weather = ingest::resample_15min(
          ingest::load_hourly_csv(weather_csv, ingest::SeriesKind::kTemperature));
      const auto price =
          ingest::resample_15min(ingest::load_hourly_csv(price_csv, ingest::SeriesKind::kPrice));
      const ExogenousTraces traces = ingest::align(occ, weather, price);
      ingest::save_dataset(traces, ingest_out);
      if (!ingest_csv.empty()) {
        std::ofstream out(ingest_csv);
        ingest::write_traces_csv(traces, out);
      }
      std::printf("aligned %zu steps (%zu days) -> %s\n", traces.size(),
                  traces.size() / static_cast<std::size_t>(traces.cycle_steps),
                  ingest_out.c_str());
    } else if (*synth_cmd) {
      SimConfig cfg = load_sim_config(config_path);
      const std::uint64_t seed = resolve_seed(cfg, seed_flag);
      const ExogenousTraces traces = ingest::synth_traces(synth_days, seed);
      ingest::save_dataset(traces, synth_out);
      if (!synth_csv.empty()) {
        std::ofstream out(synth_csv);
        ingest::write_traces_csv(traces, out);
      }
      std::printf("synthesized %d days (seed %llu) -> %s\n", synth_days,
                  static_cast<unsigned long long>(seed), synth_out.c_str());
    } else if (*tp_cmd) {
      SimConfig cfg = load_sim_config(config_path);
      const std::uint64_t seed = resolve_seed(cfg, seed_flag);
      const Dataset data = load_data(dataset, train_days, test_days);
      predictor::PredictorConfig pc;
      if (!tp_config.empty()) {
        std::ifstream in(tp_config);
        if (!in) throw std::runtime_error("cannot open " + tp_config);
        pc = predictor::predictor_config_from_json(json::parse(in));
      }
      if (tp_epochs >= 0) pc.epochs = tp_epochs;
      pc.seed = seed;
      pc.cycle_steps = data.full.cycle_steps;
      pc.validate();
      const auto train_w = predictor::build_training_windows(data.train.occupancy,
                                                             pc.cycle_steps, pc);
      const auto test_w = predictor::build_training_windows(
          data.test.occupancy, pc.cycle_steps, pc, data.train.size());
      predictor::OccupancyPredictor model(pc);
      const auto result = predictor::train(model, train_w);
      std::printf("initial loss %.4f\n", result.initial_loss);
      for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        std::printf("epoch %zu loss %.4f\n", e + 1, result.epoch_losses[e]);
      }
      std::printf("accuracy train %.4f test %.4f\n", predictor::accuracy(model, train_w),
                  predictor::accuracy(model, test_w));
      nn::save_checkpoint(tp_out, model.to_checkpoint());
    } else if (*rl_cmd) {
      SimConfig cfg = load_sim_config(config_path);
      const std::uint64_t base_seed = resolve_seed(cfg, seed_flag);
      const Dataset data = load_data(dataset, train_days, test_days);
      const ScenarioId scenario = parse_scenario(scenario_name);
      harness::TrainRequest req;
      req.train = std::make_shared<const ExogenousTraces>(data.train);
      req.base = cfg;
      req.scenario = scenario;
      req.beta = beta;
      if (!ppo_config.empty()) {
        std::ifstream in(ppo_config);
        if (!in) throw std::runtime_error("cannot open " + ppo_config);
        req.ppo = ppo::ppo_config_from_json(json::parse(in));
      }
      if (updates >= 0) req.ppo.total_updates = updates;
      const int days = static_cast<int>(data.train.size() / cfg.episode_steps);
      req.validation_days = std::min(3, days / 4);
      req.train_days = days - req.validation_days;
      if (scenario == ScenarioId::kS4) {
        if (predictor_path.empty()) throw ConfigError("S4 training needs --predictor");
        req.train_forecasts = load_forecasts(predictor_path, data)->train;
      }
      for (int r = 0; r < runs; ++r) {
        req.seed = base_seed + static_cast<std::uint64_t>(r);
        const ppo::TrainResult result = harness::train_policy(req);
        const fs::path out = fs::path(ckpt_dir) / harness::checkpoint_name(scenario, beta, req.seed);
        harness::save_policy(result, req, out);
        const std::string note =
            result.aborted ? " (aborted: " + result.abort_reason + ")" : std::string();
        std::printf("run %d seed %llu: best update %d, validation cost %.4f%s -> %s\n", r,
                    static_cast<unsigned long long>(req.seed), result.best_update,
                    result.best_validation_cost, note.c_str(), out.string().c_str());
      }
    } else if (*run_cmd) {
      SimConfig cfg = load_sim_config(config_path);
      const std::uint64_t seed = resolve_seed(cfg, seed_flag);
      const Dataset data = load_data(dataset, train_days, test_days);
      harness::CellSpec cell;
      cell.controller = controller;
      cell.scenario = parse_scenario(scenario_name);
      cell.beta = beta;
      cell.p_max = p_max;
      cell.seed = seed;
      cell.checkpoint = checkpoint;
      const auto fc = load_forecasts(predictor_path, data);
      const auto records = harness::evaluate_cell(cell, make_context(data, cfg, fc));
      if (!records_out.empty()) env::write_records(fs::path(records_out), records);
      print_metrics(harness::compute_metrics(records, harness::cell_config(cell, cfg).comfort));
    } else if (*matrix_cmd || *sweep_cmd) {
      const SimConfig cfg = load_sim_config(config_path);
      const Dataset data = load_data(dataset, train_days, test_days);
      const auto scenarios = parse_scenarios(scenario_names);
      std::vector<std::uint64_t> seed_list;
      for (int s = 0; s < seeds; ++s) seed_list.push_back(static_cast<std::uint64_t>(s));
      std::vector<harness::CellSpec> cells;
      if (*matrix_cmd) {
        harness::MatrixPlan plan;
        plan.scenarios = scenarios;
        plan.betas = betas;
        plan.seeds = seed_list;
        plan.include_benchmarks = !no_benchmarks;
        plan.include_rl = !no_rl;
        plan.checkpoint_dir = ckpt_dir;
        cells = harness::matrix_cells(plan);
      } else {
        harness::SweepPlan plan;
        plan.scenarios = scenarios;
        plan.p_grid = p_grid;
        plan.beta = beta;
        plan.seeds = seed_list;
        plan.checkpoint_dir = ckpt_dir;
        cells = harness::sweep_cells(plan);
      }
      std::optional<harness::ForecastBundle> fc;
      if (needs_predictor(scenarios)) fc = load_forecasts(predictor_path, data);
      harness::ResultStore store(store_dir);
      print_outcome(harness::run_matrix(cells, make_context(data, cfg, fc), store));
    } else if (*report_cmd) {
      const harness::ResultStore store(store_dir);
      for (const fs::path& p : harness::emit_report(store, report_dir)) {
        std::printf("wrote %s\n", p.string().c_str());
      }
      std::ifstream summary(fs::path(report_dir) / "summary.txt");
      std::cout << summary.rdbuf();
    } else if (*serve_cmd) {
      const SimConfig cfg = load_sim_config(config_path);
      const Dataset data = load_data(dataset, train_days, test_days);
      bridge::ServiceConfig sc;
      sc.inputs.traces =
          std::make_shared<const ExogenousTraces>(whole_trace ? data.full : data.test);
      sc.inputs.base = cfg;
      if (const auto fc = load_forecasts(predictor_path, data)) {
        if (whole_trace) {
          predictor::OccupancyPredictor model = predictor::OccupancyPredictor::from_checkpoint(
              nn::load_checkpoint(predictor_path));
          sc.inputs.forecasts = std::make_shared<const env::OccupancyForecasts>(
              predictor::forecast_trace(model, data.full));
        } else {
          sc.inputs.forecasts = fc->test;
        }
      }
      sc.host = host;
      sc.port = port;
      sc.records_dir = sessions_dir;
      sc.static_dir = static_dir;
      bridge::BridgeService service(sc);
      service.start();
      std::printf("serving on http://%s:%d (protocol %d)\n", host.c_str(), service.port(),
                  bridge::kProtocolVersion);
      std::fflush(stdout);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
      std::printf("stopped; session records in %s\n", sessions_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hvacsim: %s\n", e.what());
    return 1;
  }
  return 0;
}
