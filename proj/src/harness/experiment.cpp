#include "hvac/harness/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hvac/controllers/mpc.hpp"
#include "hvac/controllers/rule_based.hpp"
#include "hvac/nn/checkpoint.hpp"

namespace hvac::harness {

namespace fs = std::filesystem;
using nlohmann::json;

void CellSpec::validate() const {
  if (controller != "rule" && controller != "mpc" && controller != "rl") {
    throw ConfigError("cell controller must be rule, mpc or rl, got '" + controller + "'");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("cell beta must lie in [0, 1]");
  if (!(p_max > 0.0 && p_max <= 1.0)) throw ConfigError("cell p_max must lie in (0, 1]");
  if (controller == "rl" && checkpoint.empty()) {
    throw ConfigError("rl cell needs a checkpoint path");
  }
}

std::string CellSpec::label() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s/%s/beta=%g/pmax=%g/seed=%llu", controller.c_str(),
                to_string(scenario).c_str(), beta, p_max,
                static_cast<unsigned long long>(seed));
  return buf;
}

json to_json(const CellSpec& c) {
  return {{"controller", c.controller},
          {"scenario", to_string(c.scenario)},
          {"beta", c.beta},
          {"p_max", c.p_max},
          {"seed", c.seed},
          {"checkpoint", c.checkpoint.generic_string()}};
}

CellSpec cell_from_json(const json& j) {
  CellSpec c;
  c.controller = j.at("controller").get<std::string>();
  c.scenario = parse_scenario(j.at("scenario").get<std::string>());
  c.beta = j.at("beta").get<double>();
  c.p_max = j.at("p_max").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint = j.at("checkpoint").get<std::string>();
  return c;
}

SimConfig cell_config(const CellSpec& cell, const SimConfig& base) {
  SimConfig cfg = base;
  const ScenarioSpec fresh = ScenarioSpec::make(cell.scenario);
  cfg.scenario.id = fresh.id;
  cfg.scenario.include_occupancy_now = fresh.include_occupancy_now;
  cfg.scenario.occupancy_forecast_source = fresh.occupancy_forecast_source;
  cfg.scenario.beta = cell.beta;
  cfg.scenario.p_max = cell.p_max;
  cfg.scenario.seed = cell.seed;
  cfg.reward.beta = cell.beta;
  cfg.comfort.p_max = cell.p_max;
  cfg.validate();
  return cfg;
}

std::string cell_key(const CellSpec& cell, const EvalContext& ctx) {
  const json j = {{"cell", to_json(cell)},
                  {"config", config_to_json(cell_config(cell, ctx.base))},
                  {"dataset", ctx.dataset_id},
                  {"forecasts", cell.scenario == ScenarioId::kS4 ? ctx.forecasts_id : ""}};
  return hex64(json_hash(j));
}

std::optional<std::string> file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

std::unique_ptr<env::Policy> make_policy(const CellSpec& cell) {
  if (cell.controller == "rule") return std::make_unique<controllers::RuleBasedController>();
  if (cell.controller == "mpc") return std::make_unique<controllers::MpcController>();
  const nn::Checkpoint ck = nn::load_checkpoint(cell.checkpoint.string());
  if (ck.meta.count("scenario") && ck.meta.at("scenario") != to_string(cell.scenario)) {
    throw ConfigError("checkpoint " + cell.checkpoint.string() + " was trained for " +
                      ck.meta.at("scenario") + ", cell needs " + to_string(cell.scenario));
  }
  auto net = std::make_shared<const ppo::PolicyNet>(ppo::PolicyNet::from_checkpoint(ck));
  return std::make_unique<ppo::GreedyPolicy>(std::move(net));
}

std::vector<env::EpisodeRecord> evaluate_cell(const CellSpec& cell, const EvalContext& ctx) {
  cell.validate();
  if (!ctx.test) throw ConfigError("evaluation context has no test traces");
  const SimConfig cfg = cell_config(cell, ctx.base);
  std::shared_ptr<const env::OccupancyForecasts> forecasts;
  if (cfg.scenario.occupancy_forecast_source == OccupancyForecastSource::kPredictor) {
    if (!ctx.test_forecasts) throw ConfigError("S4 cell needs predictor forecasts");
    forecasts = ctx.test_forecasts;
  }
  std::unique_ptr<env::Policy> policy = make_policy(cell);
  env::HvacEnv e(ctx.test, cfg, forecasts);
  env::SimulatedFeedback source;
  const std::size_t steps = static_cast<std::size_t>(cfg.episode_steps);
  const std::size_t days = ctx.test->size() / steps;
  if (days == 0) throw ConfigError("test split is shorter than one episode");
  const Rng root(cell.seed);
  std::vector<env::EpisodeRecord> out;
  out.reserve(days);
  for (std::size_t d = 0; d < days; ++d) {
    Rng fb = root.substream("harness.feedback", d);
    Rng pol = root.substream("harness.policy", d);
    out.push_back(env::run_episode(*policy, e, d * steps, source, fb, pol));
  }
  return out;
}

json to_json(const StoredResult& r) {
  return {{"key", r.key},
          {"status", r.status},
          {"cell", to_json(r.cell)},
          {"config_hash", r.config_hash},
          {"checkpoint_hash", r.checkpoint_hash},
          {"metrics", r.metrics ? to_json(*r.metrics) : json(nullptr)},
          {"error", r.error}};
}

StoredResult stored_result_from_json(const json& j) {
  StoredResult r;
  r.key = j.at("key").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.cell = cell_from_json(j.at("cell"));
  r.config_hash = j.at("config_hash").get<std::string>();
  r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  if (!j.at("metrics").is_null()) r.metrics = metrics_from_json(j.at("metrics"));
  r.error = j.at("error").get<std::string>();
  return r;
}

ResultStore::ResultStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw StoreError("cannot create result store " + dir_.string() + ": " + ec.message());
}

std::optional<StoredResult> ResultStore::get(const std::string& key) const {
  const fs::path path = dir_ / (key + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return stored_result_from_json(json::parse(in));
  } catch (const std::exception& e) {
    throw StoreError("corrupt result file " + path.string() + ": " + e.what());
  }
}

namespace {

// Write to a sibling temp file, then rename, so readers never see a partial
// file and an interrupted run leaves no half-written cell behind.
template <typename WriteFn>
void write_atomically(const fs::path& path, WriteFn&& write) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    write(out);
    out.flush();
    if (!out) throw StoreError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StoreError("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

void ResultStore::put(const StoredResult& result,
                      const std::vector<env::EpisodeRecord>* records) {
  if (records) {
    write_atomically(dir_ / (result.key + ".records"),
                     [&](std::ostream& out) { env::write_records(out, *records); });
  }
  write_atomically(dir_ / (result.key + ".json"),
                   [&](std::ostream& out) { out << to_json(result).dump(2) << '\n'; });
}

std::vector<env::EpisodeRecord> ResultStore::records(const std::string& key) const {
  const fs::path path = dir_ / (key + ".records");
  std::ifstream in(path);
  if (!in) throw StoreError("missing record file " + path.string());
  return env::read_records(in);
}

std::vector<StoredResult> ResultStore::all() const {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<StoredResult> out;
  for (const fs::path& f : files) {
    if (auto r = get(f.stem().string())) out.push_back(std::move(*r));
  }
  return out;
}

namespace {

std::string expected_checkpoint_hash(const CellSpec& cell) {
  if (cell.controller != "rl") return "";
  return file_hash(cell.checkpoint).value_or("");
}

bool reusable(const std::optional<StoredResult>& stored, const CellSpec& cell) {
  if (!stored || !stored->ok()) return false;
  return stored->checkpoint_hash == expected_checkpoint_hash(cell);
}

StoredResult run_cell(const CellSpec& cell, const std::string& key, const EvalContext& ctx,
                      std::vector<env::EpisodeRecord>& records) {
  StoredResult r;
  r.key = key;
  r.cell = cell;
  r.config_hash = key;
  try {
    if (cell.controller == "rl") {
      const auto hash = file_hash(cell.checkpoint);
      if (!hash) throw StoreError("missing checkpoint " + cell.checkpoint.string());
      r.checkpoint_hash = *hash;
    }
    records = evaluate_cell(cell, ctx);
    r.metrics = compute_metrics(records, cell_config(cell, ctx.base).comfort);
    r.status = "ok";
  } catch (const std::exception& e) {
    records.clear();
    r.status = "failed";
    r.error = e.what();
  }
  return r;
}

}  // namespace

MatrixOutcome run_matrix(const std::vector<CellSpec>& cells, const EvalContext& ctx,
                         ResultStore& store) {
  MatrixOutcome outcome;
  std::vector<std::size_t> pending;
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string key = cell_key(cells[i], ctx);
    outcome.keys.push_back(key);
    // Duplicate cells share a key; evaluate them once.
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    if (reusable(store.get(key), cells[i])) {
      ++outcome.skipped;
    } else {
      pending.push_back(i);
    }
  }
  std::size_t failed = 0;
  const long n = static_cast<long>(pending.size());
#pragma omp parallel for schedule(dynamic, 1) reduction(+ : failed)
  for (long p = 0; p < n; ++p) {
    const std::size_t i = pending[static_cast<std::size_t>(p)];
    std::vector<env::EpisodeRecord> records;
    const StoredResult r = run_cell(cells[i], outcome.keys[i], ctx, records);
    // Each cell owns its files, so workers never write the same path.
    store.put(r, r.ok() ? &records : nullptr);
    if (!r.ok()) ++failed;
  }
  outcome.computed = pending.size();
  outcome.failed = failed;
  return outcome;
}

std::string checkpoint_name(ScenarioId scenario, double beta, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "rl_%s_b%.2f_s%llu.ckpt", to_string(scenario).c_str(), beta,
                static_cast<unsigned long long>(seed));
  return buf;
}

std::vector<CellSpec> matrix_cells(const MatrixPlan& plan) {
  std::vector<CellSpec> cells;
  for (double beta : plan.betas) {
    for (std::uint64_t seed : plan.seeds) {
      if (plan.include_benchmarks) {
        for (const char* name : {"rule", "mpc"}) {
          CellSpec c;
          c.controller = name;
          c.beta = beta;
          c.seed = seed;
          cells.push_back(c);
        }
      }
      if (!plan.include_rl) continue;
      for (ScenarioId s : plan.scenarios) {
        CellSpec c;
        c.controller = "rl";
        c.scenario = s;
        c.beta = beta;
        c.seed = seed;
        c.checkpoint = plan.checkpoint_dir / checkpoint_name(s, beta, seed);
        cells.push_back(c);
      }
    }
  }
  return cells;
}

std::vector<CellSpec> sweep_cells(const SweepPlan& plan) {
  std::vector<CellSpec> cells;
  for (ScenarioId s : plan.scenarios) {
    for (double p : plan.p_grid) {
      for (std::uint64_t seed : plan.seeds) {
        CellSpec c;
        c.controller = "rl";
        c.scenario = s;
        c.beta = plan.beta;
        c.p_max = p;
        c.seed = seed;
        c.checkpoint = plan.checkpoint_dir / checkpoint_name(s, plan.beta, seed);
        cells.push_back(c);
      }
    }
  }
  return cells;
}

ForecastBundle make_forecasts(predictor::OccupancyPredictor& model, const ExogenousTraces& train,
                              const ExogenousTraces& test) {
  ForecastBundle b;
  b.train = std::make_shared<const env::OccupancyForecasts>(predictor::forecast_trace(model, train));
  b.test = std::make_shared<const env::OccupancyForecasts>(
      predictor::forecast_trace(model, test, train.occupancy));
  b.id = hex64(fnv1a64(nn::encode_checkpoint(model.to_checkpoint())));
  return b;
}

namespace {

SimConfig training_config(const TrainRequest& req) {
  CellSpec cell;
  cell.scenario = req.scenario;
  cell.beta = req.beta;
  cell.p_max = 1.0;
  cell.seed = req.seed;
  return cell_config(cell, req.base);
}

}  // namespace

ppo::TrainResult train_policy(const TrainRequest& req) {
  if (!req.train) throw ConfigError("training request has no traces");
  const SimConfig cfg = training_config(req);
  std::shared_ptr<const env::OccupancyForecasts> forecasts;
  if (cfg.scenario.occupancy_forecast_source == OccupancyForecastSource::kPredictor) {
    if (!req.train_forecasts) throw ConfigError("S4 training needs predictor forecasts");
    forecasts = req.train_forecasts;
  }
  const int needed = req.train_days + req.validation_days;
  if (static_cast<int>(req.train->size()) < needed * cfg.episode_steps) {
    throw ConfigError("training split holds fewer than " + std::to_string(needed) + " days");
  }
  ppo::PpoConfig pc = req.ppo;
  pc.seed = req.seed;
  const std::uint64_t validation_seed = Rng(req.seed).substream("harness.validation").next_u64();
  auto make_env = [&](std::size_t) {
    return std::make_unique<ppo::HvacRlEnv>(req.train, cfg, forecasts, 0, req.train_days);
  };
  ppo::Validator validator;
  if (req.validation_days > 0) {
    validator = [&](const ppo::PolicyNet& net) {
      return ppo::evaluate_days(net, req.train, cfg, forecasts, req.train_days,
                                req.validation_days, validation_seed);
    };
  }
  return ppo::train(pc, make_env, validator);
}

void save_policy(const ppo::TrainResult& result, const TrainRequest& req,
                 const fs::path& path) {
  const SimConfig cfg = training_config(req);
  const json meta = {{"scenario", to_string(req.scenario)},
                     {"beta", req.beta},
                     {"seed", req.seed},
                     {"config_hash", hex64(json_hash(config_to_json(cfg)))},
                     {"ppo", ppo::to_json(req.ppo)},
                     {"best_update", result.best_update},
                     {"best_validation_cost", result.best_validation_cost}};
  nn::Checkpoint ck = result.best.to_checkpoint(meta);
  ck.meta["scenario"] = to_string(req.scenario);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::save_checkpoint(path.string(), ck);
}

}  // namespace hvac::harness
