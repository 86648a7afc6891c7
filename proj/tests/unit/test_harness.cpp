#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "hvac/controllers/mpc.hpp"
#include "hvac/controllers/rule_based.hpp"
#include "hvac/harness/experiment.hpp"
#include "hvac/harness/metrics.hpp"
#include "hvac/harness/report.hpp"
#include "hvac/ingest.hpp"
#include "hvac/nn/checkpoint.hpp"

using namespace hvac;
using namespace hvac::harness;
namespace fs = std::filesystem;

namespace {

env::StepRecord step_at(double t_in, int occupied, double energy = 0.0,
                        double discomfort = 0.0, double total = 0.0, int feedback = 0) {
  env::StepRecord s;
  s.t_in = t_in;
  s.occupied = occupied;
  s.energy = energy;
  s.discomfort = discomfort;
  s.total = total;
  s.feedback = feedback;
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hvac_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Fixture {
  ExogenousTraces train, test;
  EvalContext ctx;

  explicit Fixture(int test_days = 2) {
    auto [tr, te] = ingest::split_train_test(ingest::synth_traces(30, 1));
    train = tr;
    test = te.slice(0, static_cast<std::size_t>(test_days) * 96);
    ctx.test = std::make_shared<const ExogenousTraces>(test);
    ctx.dataset_id = "synth-30-1";
  }
};

// Untrained policy with the observation layout of the scenario.
void write_random_policy(const fs::path& path, ScenarioId scenario, std::uint64_t seed) {
  SimConfig cfg;
  cfg.scenario = ScenarioSpec::make(scenario);
  auto traces = std::make_shared<const ExogenousTraces>(ingest::synth_traces(2, 3));
  auto forecasts = std::make_shared<env::OccupancyForecasts>();
  forecasts->horizon = 8;
  forecasts->probabilities.assign(traces->size() * 8, 0.5);
  env::HvacEnv e(traces, cfg, scenario == ScenarioId::kS4 ? forecasts : nullptr);
  const Observation obs = e.reset(0);
  Rng rng(seed);
  ppo::PolicyNet net(obs.flatten().size(), {8, 8}, obs.mask(), rng);
  nn::Checkpoint ck = net.to_checkpoint({{"note", "untrained"}});
  ck.meta["scenario"] = to_string(scenario);
  nn::save_checkpoint(path.string(), ck);
}

}  // namespace

TEST(Metrics, SetpointTrackingIsZero) {
  env::EpisodeRecord rec;
  for (int i = 0; i < 8; ++i) rec.steps.push_back(step_at(22.0, 1));
  const auto m = compute_metrics(std::vector{rec}, ComfortModel{});
  ASSERT_TRUE(m.violation_probability && m.mae_to_setpoint);
  EXPECT_EQ(*m.violation_probability, 0.0);
  EXPECT_EQ(*m.mae_to_setpoint, 0.0);
}

TEST(Metrics, HalfOccupiedStepsFourAbove) {
  env::EpisodeRecord rec;
  for (int i = 0; i < 10; ++i) rec.steps.push_back(step_at(i % 2 ? 26.0 : 22.0, 1));
  // Unoccupied steps far outside the band must not count.
  for (int i = 0; i < 5; ++i) rec.steps.push_back(step_at(40.0, 0));
  const auto m = compute_metrics(std::vector{rec}, ComfortModel{});
  EXPECT_DOUBLE_EQ(*m.violation_probability, 0.5);
  EXPECT_DOUBLE_EQ(*m.mae_to_setpoint, 2.0);
  EXPECT_EQ(m.occupied_steps, 10);
  EXPECT_EQ(m.steps, 15);
}

TEST(Metrics, HandBuiltTenStepOracle) {
  // Two episodes (6 + 4 steps). Occupied errors: 0, 3.5, 4, 1, 3, 1, 4, 2
  // sum 18.5 over 8 steps; strictly outside 22 +- 3: 3.5, 4, 4.
  env::EpisodeRecord a, b;
  a.steps = {step_at(22.0, 1, 0.20, 0.0, 0.100, 0),  step_at(25.5, 1, 0.00, 1.0, 0.500, 1),
             step_at(18.0, 1, 0.35, 0.0, 0.175, 1),  step_at(23.0, 1, 0.00, 0.0, 0.000, 0),
             step_at(19.0, 1, 0.10, 0.5, 0.300, 0),  step_at(30.0, 0, 0.00, 0.0, 0.000, 0)};
  b.steps = {step_at(22.0, 0, 0.00, 0.0, 0.000, 0),  step_at(21.0, 1, 0.05, 0.0, 0.025, 0),
             step_at(26.0, 1, 0.00, 2.0, 1.000, -1), step_at(20.0, 1, 0.30, 0.0, 0.150, 0)};
  const auto m = compute_metrics(std::vector{a, b}, ComfortModel{});
  EXPECT_DOUBLE_EQ(*m.violation_probability, 0.375);
  EXPECT_DOUBLE_EQ(*m.mae_to_setpoint, 2.3125);
  EXPECT_NEAR(m.energy_cost, 1.0, 1e-12);
  EXPECT_NEAR(m.discomfort_cost, 3.5, 1e-12);
  EXPECT_NEAR(m.total_cost, 2.25, 1e-12);
  EXPECT_EQ(m.override_count, 3);
  EXPECT_EQ(m.occupied_steps, 8);
  EXPECT_EQ(m.steps, 10);
  EXPECT_EQ(m.episodes, 2);
}

TEST(Metrics, NoOccupiedStepsIsNotApplicable) {
  env::EpisodeRecord rec;
  for (int i = 0; i < 4; ++i) rec.steps.push_back(step_at(30.0, 0, 0.1));
  const auto m = compute_metrics(std::vector{rec}, ComfortModel{});
  EXPECT_FALSE(m.violation_probability.has_value());
  EXPECT_FALSE(m.mae_to_setpoint.has_value());
  EXPECT_NEAR(m.energy_cost, 0.4, 1e-12);
  EXPECT_TRUE(to_json(m).at("mae_to_setpoint").is_null());
  EXPECT_EQ(metrics_from_json(to_json(m)), m);
  EXPECT_THROW(compute_metrics({}, ComfortModel{}), std::invalid_argument);
}

TEST(Metrics, InvariantsOnRandomRecords) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    env::EpisodeRecord rec;
    const int n = 1 + static_cast<int>(rng.below(50));
    for (int i = 0; i < n; ++i) {
      rec.steps.push_back(step_at(rng.uniform(10.0, 34.0), rng.bernoulli(0.6)));
    }
    const auto m = compute_metrics(std::vector{rec}, ComfortModel{});
    if (!m.violation_probability) {
      EXPECT_EQ(m.occupied_steps, 0);
      continue;
    }
    EXPECT_GE(*m.violation_probability, 0.0);
    EXPECT_LE(*m.violation_probability, 1.0);
    EXPECT_GE(*m.mae_to_setpoint, 0.0);
  }
}

TEST(Metrics, QuantilesInterpolateLinearly) {
  const auto d = summarize({4.0, 1.0, 3.0, 2.0});
  ASSERT_TRUE(d);
  EXPECT_DOUBLE_EQ(d->q1, 1.75);
  EXPECT_DOUBLE_EQ(d->median, 2.5);
  EXPECT_DOUBLE_EQ(d->q3, 3.25);
  EXPECT_DOUBLE_EQ(quantile({5.0, 1.0, 3.0}, 0.5), 3.0);
  EXPECT_FALSE(summarize({}).has_value());
}

TEST(Cells, ConfigAppliesSetting) {
  CellSpec c;
  c.controller = "rl";
  c.scenario = ScenarioId::kS3;
  c.beta = 0.9;
  c.p_max = 0.75;
  c.seed = 4;
  c.checkpoint = "x.ckpt";
  const SimConfig cfg = cell_config(c, SimConfig{});
  EXPECT_EQ(cfg.scenario.id, ScenarioId::kS3);
  EXPECT_FALSE(cfg.scenario.occupancy_forecast_source == OccupancyForecastSource::kPerfect);
  EXPECT_EQ(cfg.reward.beta, 0.9);
  EXPECT_EQ(cfg.comfort.p_max, 0.75);
  EXPECT_EQ(cell_from_json(to_json(c)).label(), c.label());

  EvalContext ctx;
  ctx.dataset_id = "d";
  CellSpec other = c;
  other.p_max = 1.0;
  EXPECT_NE(cell_key(c, ctx), cell_key(other, ctx));
  EXPECT_EQ(cell_key(c, ctx), cell_key(c, ctx));

  CellSpec bad = c;
  bad.controller = "pid";
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Matrix, OneCellEqualsRunEpisode) {
  Fixture f(1);
  CellSpec cell;
  cell.controller = "rule";
  cell.seed = 3;
  ResultStore store(fresh_dir("one_cell"));
  const MatrixOutcome out = run_matrix({cell}, f.ctx, store);
  ASSERT_EQ(out.computed, 1u);
  ASSERT_EQ(out.failed, 0u);

  const SimConfig cfg = cell_config(cell, f.ctx.base);
  env::HvacEnv e(f.ctx.test, cfg);
  controllers::RuleBasedController rule;
  env::SimulatedFeedback src;
  Rng fb = Rng(3).substream("harness.feedback", 0);
  Rng pol = Rng(3).substream("harness.policy", 0);
  const env::EpisodeRecord direct = env::run_episode(rule, e, 0, src, fb, pol);

  const auto stored = store.records(out.keys[0]);
  ASSERT_EQ(stored.size(), 1u);
  EXPECT_EQ(stored[0].steps, direct.steps);
  const auto result = store.get(out.keys[0]);
  ASSERT_TRUE(result && result->ok());
  EXPECT_EQ(*result->metrics, compute_metrics(std::vector{direct}, cfg.comfort));
  EXPECT_EQ(result->config_hash, out.keys[0]);
  EXPECT_EQ(result->cell.seed, 3u);
}

TEST(Matrix, RerunRecomputesNothing) {
  Fixture f(1);
  MatrixPlan plan;
  plan.betas = {0.5};
  plan.seeds = {0, 1};
  plan.include_rl = false;
  ResultStore store(fresh_dir("rerun"));
  const auto cells = matrix_cells(plan);
  ASSERT_EQ(cells.size(), 4u);
  const MatrixOutcome first = run_matrix(cells, f.ctx, store);
  EXPECT_EQ(first.computed, 4u);
  const auto before = fs::last_write_time(store.dir() / (first.keys[0] + ".json"));
  const MatrixOutcome second = run_matrix(cells, f.ctx, store);
  EXPECT_EQ(second.computed, 0u);
  EXPECT_EQ(second.skipped, 4u);
  EXPECT_EQ(second.keys, first.keys);
  EXPECT_EQ(fs::last_write_time(store.dir() / (first.keys[0] + ".json")), before);
}

TEST(Matrix, MissingCheckpointFailsCellAndContinues) {
  Fixture f(1);
  const fs::path dir = fresh_dir("missing_ckpt");
  CellSpec rl;
  rl.controller = "rl";
  rl.checkpoint = dir / "ckpt" / checkpoint_name(ScenarioId::kS1, 0.5, 0);
  CellSpec rule;
  ResultStore store(dir / "store");
  const MatrixOutcome out = run_matrix({rl, rule}, f.ctx, store);
  EXPECT_EQ(out.computed, 2u);
  EXPECT_EQ(out.failed, 1u);
  const auto failed = store.get(out.keys[0]);
  ASSERT_TRUE(failed);
  EXPECT_EQ(failed->status, "failed");
  EXPECT_NE(failed->error.find("missing checkpoint"), std::string::npos);
  EXPECT_TRUE(store.get(out.keys[1])->ok());

  // Failures are retried; once the checkpoint exists the cell succeeds.
  fs::create_directories(rl.checkpoint.parent_path());
  write_random_policy(rl.checkpoint, ScenarioId::kS1, 5);
  const MatrixOutcome again = run_matrix({rl, rule}, f.ctx, store);
  EXPECT_EQ(again.computed, 1u);
  EXPECT_EQ(again.failed, 0u);
  const auto ok = store.get(out.keys[0]);
  ASSERT_TRUE(ok && ok->ok());
  EXPECT_EQ(ok->checkpoint_hash, *file_hash(rl.checkpoint));

  // A changed checkpoint invalidates the stored result.
  write_random_policy(rl.checkpoint, ScenarioId::kS1, 6);
  EXPECT_EQ(run_matrix({rl, rule}, f.ctx, store).computed, 1u);
}

TEST(Matrix, ScenarioMismatchAndMissingForecastsFail) {
  Fixture f(1);
  const fs::path dir = fresh_dir("mismatch");
  CellSpec rl;
  rl.controller = "rl";
  rl.scenario = ScenarioId::kS2;
  rl.checkpoint = dir / "s1.ckpt";
  write_random_policy(rl.checkpoint, ScenarioId::kS1, 1);
  CellSpec s4 = rl;
  s4.scenario = ScenarioId::kS4;
  s4.checkpoint = dir / "s4.ckpt";
  write_random_policy(s4.checkpoint, ScenarioId::kS4, 1);
  ResultStore store(dir / "store");
  const MatrixOutcome out = run_matrix({rl, s4}, f.ctx, store);
  EXPECT_EQ(out.failed, 2u);
  EXPECT_NE(store.get(out.keys[0])->error.find("trained for S1"), std::string::npos);
  EXPECT_NE(store.get(out.keys[1])->error.find("forecasts"), std::string::npos);
}

TEST(Matrix, MpcNeverViolatesOnTestDay) {
  Fixture f(1);
  CellSpec cell;
  cell.controller = "mpc";
  ResultStore store(fresh_dir("mpc"));
  const MatrixOutcome out = run_matrix({cell}, f.ctx, store);
  const auto r = store.get(out.keys[0]);
  ASSERT_TRUE(r && r->ok());
  ASSERT_TRUE(r->metrics->violation_probability);
  EXPECT_EQ(*r->metrics->violation_probability, 0.0);
}

TEST(Sweep, FullCapCellEqualsMatrixCell) {
  Fixture f(1);
  const fs::path dir = fresh_dir("sweep");
  MatrixPlan mplan;
  mplan.scenarios = {ScenarioId::kS2};
  mplan.betas = {0.5};
  mplan.seeds = {2};
  mplan.include_benchmarks = false;
  mplan.checkpoint_dir = dir / "ckpt";
  SweepPlan splan;
  splan.scenarios = {ScenarioId::kS2};
  splan.p_grid = {0.5, 1.0};
  splan.seeds = {2};
  splan.checkpoint_dir = mplan.checkpoint_dir;
  fs::create_directories(mplan.checkpoint_dir);
  write_random_policy(mplan.checkpoint_dir / checkpoint_name(ScenarioId::kS2, 0.5, 2),
                      ScenarioId::kS2, 9);

  ResultStore store(dir / "store");
  const auto mcells = matrix_cells(mplan);
  const auto scells = sweep_cells(splan);
  ASSERT_EQ(mcells.size(), 1u);
  ASSERT_EQ(scells.size(), 2u);
  const MatrixOutcome m = run_matrix(mcells, f.ctx, store);
  EXPECT_EQ(m.computed, 1u);
  const MatrixOutcome s = run_matrix(scells, f.ctx, store);
  EXPECT_EQ(s.keys[1], m.keys[0]);
  EXPECT_EQ(s.skipped, 1u);
  EXPECT_EQ(s.computed, 1u);

  // Independent recomputation of the p_max 1 cell agrees with the stored one.
  const auto fresh = evaluate_cell(scells[1], f.ctx);
  EXPECT_EQ(*store.get(m.keys[0])->metrics,
            compute_metrics(fresh, cell_config(scells[1], f.ctx.base).comfort));
}

TEST(Report, CsvRoundTripsThroughIngestReader) {
  Fixture f(1);
  const fs::path dir = fresh_dir("report_csv");
  CellSpec rule, rl;
  rl.controller = "rl";
  rl.checkpoint = dir / "absent.ckpt";
  rule.seed = 7;
  ResultStore store(dir / "store");
  run_matrix({rule, rl}, f.ctx, store);
  const auto paths = emit_report(store, dir / "report");
  ASSERT_EQ(paths.size(), 4u);

  std::ifstream in(dir / "report" / "results.csv");
  const ingest::CsvTable table = ingest::read_csv(in, "results.csv");
  ASSERT_EQ(table.rows.size(), 2u);
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      if (table.header[i] == name) return i;
    }
    ADD_FAILURE() << "no column " << name;
    return std::size_t{0};
  };
  std::size_t matched = 0;
  for (const auto& row : table.rows) {
    const auto stored = store.get(row[col("key")]);
    ASSERT_TRUE(stored);
    EXPECT_EQ(row[col("status")], stored->status);
    EXPECT_EQ(row[col("config_hash")], stored->config_hash);
    EXPECT_EQ(std::stoull(row[col("seed")]), stored->cell.seed);
    if (stored->ok()) {
      const MetricsSummary& m = *stored->metrics;
      EXPECT_EQ(std::stod(row[col("total_cost")]), m.total_cost);
      EXPECT_EQ(std::stod(row[col("energy_cost")]), m.energy_cost);
      EXPECT_EQ(std::stod(row[col("mae_to_setpoint")]), *m.mae_to_setpoint);
      EXPECT_EQ(std::stod(row[col("violation_probability")]), *m.violation_probability);
      EXPECT_EQ(std::stoi(row[col("override_count")]), m.override_count);
    } else {
      // A failed cell still has a row, with markers instead of numbers.
      EXPECT_EQ(row[col("total_cost")], kNotApplicable);
      EXPECT_NE(row[col("error")], kNotApplicable);
    }
    ++matched;
  }
  EXPECT_EQ(matched, 2u);
}

TEST(Report, RegenerationIsByteIdentical) {
  Fixture f(1);
  const fs::path dir = fresh_dir("report_bytes");
  MatrixPlan plan;
  plan.betas = {0.3, 0.5};
  plan.seeds = {0, 1, 2};
  plan.include_rl = false;
  ResultStore a(dir / "a");
  ResultStore b(dir / "b");
  run_matrix(matrix_cells(plan), f.ctx, a);
  run_matrix(matrix_cells(plan), f.ctx, b);
  emit_report(a, dir / "ra1");
  emit_report(a, dir / "ra2");
  emit_report(b, dir / "rb");
  for (const char* name : {"results.csv", "cost_vs_beta.csv", "sensitivity.csv", "summary.txt"}) {
    const std::string first = slurp(dir / "ra1" / name);
    EXPECT_FALSE(first.empty()) << name;
    EXPECT_EQ(first, slurp(dir / "ra2" / name)) << name;
    EXPECT_EQ(first, slurp(dir / "rb" / name)) << name;
  }
  for (const auto& r : a.all()) {
    EXPECT_EQ(slurp(a.dir() / (r.key + ".records")), slurp(b.dir() / (r.key + ".records")));
  }
  EXPECT_THROW(emit_report(ResultStore(dir / "empty"), dir / "re"), StoreError);
}

namespace {

StoredResult synthetic(const std::string& controller, ScenarioId s, double p_max,
                       std::uint64_t seed, double violation, double mae, double total) {
  StoredResult r;
  r.key = controller + to_string(s) + std::to_string(p_max) + std::to_string(seed);
  r.status = "ok";
  r.cell.controller = controller;
  r.cell.scenario = s;
  r.cell.p_max = p_max;
  r.cell.seed = seed;
  MetricsSummary m;
  m.violation_probability = violation;
  m.mae_to_setpoint = mae;
  m.total_cost = total;
  m.energy_cost = total;
  r.metrics = m;
  return r;
}

}  // namespace

TEST(Report, OrderingChecksUseMedians) {
  std::vector<StoredResult> rs;
  // Medians: mpc (0, 1.0, 10), rule (0.01, 0.4, 12), S1 (0.1, 1.5, 11.5).
  for (std::uint64_t s = 0; s < 3; ++s) {
    rs.push_back(synthetic("mpc", ScenarioId::kS1, 1.0, s, 0.0, 1.0, 9.0 + s));
    rs.push_back(synthetic("rule", ScenarioId::kS1, 1.0, s, 0.01, 0.3 + 0.1 * s, 11.0 + s));
    rs.push_back(synthetic("rl", ScenarioId::kS1, 1.0, s, 0.1, 1.5, 11.5 + (s == 1 ? 10 : 0)));
    rs.push_back(synthetic("rl", ScenarioId::kS3, 1.0, s, 0.2, 1.6, 13.0));
  }
  const OrderingChecks c = check_orderings(rs, 0.5);
  EXPECT_EQ(c.hitl_cost_le_rule, std::optional(true));
  EXPECT_EQ(c.hitl_within_mpc_margin, std::optional(true));  // 11.5 <= 12.5
  EXPECT_EQ(c.violation_order, std::optional(true));
  EXPECT_EQ(c.rule_mae_smallest, std::optional(true));
  EXPECT_EQ(c.mpc_violation_zero, std::optional(true));
  EXPECT_EQ(c.s1_cost_le_s3, std::optional(true));

  rs.push_back(synthetic("mpc", ScenarioId::kS1, 1.0, 9, 0.02, 1.0, 9.0));
  EXPECT_EQ(check_orderings(rs, 0.5).mpc_violation_zero, std::optional(false));
  EXPECT_FALSE(check_orderings({}, 0.5).hitl_cost_le_rule.has_value());
}

TEST(Report, SensitivityVariationDefinition) {
  std::vector<StoredResult> rs;
  // Median MAE per cap: 0.5 -> 1.1, 0.75 -> 0.9, 1.0 -> 1.0.
  for (std::uint64_t s = 0; s < 3; ++s) {
    rs.push_back(synthetic("rl", ScenarioId::kS2, 0.5, s, 0.0, 1.1, 1.0));
    rs.push_back(synthetic("rl", ScenarioId::kS2, 0.75, s, 0.0, 0.9, 1.0));
    rs.push_back(synthetic("rl", ScenarioId::kS2, 1.0, s, 0.0, 1.0, 1.0));
  }
  const auto v = sensitivity_variation(rs, ScenarioId::kS2, 0.5);
  ASSERT_TRUE(v);
  EXPECT_NEAR(*v, 0.2, 1e-12);
  EXPECT_FALSE(sensitivity_variation(rs, ScenarioId::kS1, 0.5).has_value());
}
