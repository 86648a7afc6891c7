#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "hvac/env/batch.hpp"
#include "hvac/env/dynamics.hpp"
#include "hvac/env/episode.hpp"
#include "hvac/ingest.hpp"

using namespace hvac;
using namespace hvac::env;

namespace {

std::shared_ptr<ExogenousTraces> flat_trace(std::size_t n, double t_out,
                                            double rho, int occupied) {
  auto tr = std::make_shared<ExogenousTraces>();
  tr->t_out_degc.assign(n, t_out);
  tr->rho_per_kwh.assign(n, rho);
  tr->occupancy.assign(n, static_cast<std::uint8_t>(occupied));
  return tr;
}

class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(int a) : a_(a) {}
  std::string name() const override { return "const"; }
  int act(const Observation&, const HvacEnv&, Rng&) override { return a_; }

 private:
  int a_;
};

class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(std::vector<int> actions) : actions_(std::move(actions)) {}
  std::string name() const override { return "scripted"; }
  int act(const Observation&, const HvacEnv& env, Rng&) override {
    return actions_.at(env.state().step_index - env.episode_start());
  }

 private:
  std::vector<int> actions_;
};

}  // namespace

TEST(Alpha, Values) {
  ThermalParams p;
  EXPECT_NEAR(alpha(p), 0.98496269152523240, 1e-15);
  p.dt_hours = 16.5;
  EXPECT_NEAR(alpha(p), std::exp(-1.0), 1e-15);
  p.dt_hours = 0.25;
  p.rc_hours = 1e12;
  EXPECT_NEAR(alpha(p), 1.0, 1e-12);
}

TEST(ThermalStep, Examples) {
  ThermalParams p;
  EXPECT_NEAR(thermal_step(22.0, 10.0, 0, 0.98496, p), 21.81952, 1e-9);
  EXPECT_NEAR(thermal_step(22.0, 10.0, 0, p), 21.8195, 1e-4);
  EXPECT_EQ(thermal_step(17.0, 17.0, 0, p), 17.0);
  EXPECT_GT(thermal_step(20.0, 10.0, 1, p), 20.0);
  p.mode = HvacMode::kCooling;
  EXPECT_LT(thermal_step(25.0, 30.0, 1, p), thermal_step(25.0, 30.0, 0, p));
  EXPECT_THROW(thermal_step(20.0, 10.0, 2, p), DomainError);
}

TEST(ThermalStep, Contraction) {
  ThermalParams p;
  Rng r(1);
  const double a = alpha(p);
  for (int i = 0; i < 500; ++i) {
    const double ta = r.uniform(0, 40), tb = r.uniform(0, 40);
    const double to = r.uniform(-5, 35);
    const int ac = static_cast<int>(r.below(2));
    EXPECT_NEAR(std::abs(thermal_step(ta, to, ac, p) - thermal_step(tb, to, ac, p)),
                a * std::abs(ta - tb), 1e-12);
  }
}

TEST(ThermalStep, GeometricConvergence) {
  ThermalParams p;
  const double a = alpha(p);
  double t = 22.0;
  const double t_out = 8.0;
  for (int k = 0; k < 100; ++k) {
    const double next = thermal_step(t, t_out, 0, p);
    EXPECT_NEAR((next - t_out) / (t - t_out), a, 1e-9);
    t = next;
  }
  EXPECT_NEAR(t - t_out, 14.0 * std::pow(a, 100), 1e-9);
}

TEST(FeedbackProbability, Examples) {
  ComfortModel c;
  EXPECT_EQ(feedback_probability(22.0, c), 0.0);
  EXPECT_EQ(feedback_probability(25.0, c), 1.0);
  EXPECT_NEAR(feedback_probability(23.5, c), 0.25, 1e-15);
  c.p_max = 0.5;
  EXPECT_EQ(feedback_probability(25.0, c), 0.5);
  EXPECT_EQ(feedback_probability(15.0, c), 0.5);
}

TEST(ExpectedAction, Examples) {
  ComfortModel c;
  EXPECT_EQ(expected_action(25, 30, c), 1);
  EXPECT_EQ(expected_action(18, 5, c), 1);
  EXPECT_EQ(expected_action(25, 10, c), 0);
  EXPECT_EQ(expected_action(22, 10, c), 0);
}

TEST(SimulateFeedback, GatesAndForcedOverride) {
  ComfortModel c;
  Rng r(9);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(simulate_feedback(15.0, 5.0, 0, false, c, r), 0);
    EXPECT_EQ(simulate_feedback(15.0, 5.0, 1, true, c, r), 0);
    EXPECT_EQ(simulate_feedback(25.0, 30.0, 0, true, c, r), 1);
    EXPECT_EQ(simulate_feedback(25.0, 10.0, 1, true, c, r), -1);
  }
}

TEST(SimulateFeedback, EmpiricalFrequency) {
  ComfortModel c;
  c.p_max = 0.75;
  Rng r(77);
  for (int k = 0; k < 20; ++k) {
    const double t_in = 22.0 - 3.5 + 0.35 * k;
    if (t_in == 22.0) continue;
    const int expected = expected_action(t_in, 5.0, c);
    const int action = 1 - expected;
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      hits += simulate_feedback(t_in, 5.0, action, true, c, r) != 0;
    }
    EXPECT_NEAR(hits / 10000.0, feedback_probability(t_in, c), 0.02) << t_in;
  }
}

TEST(ControlledAction, TruthTable) {
  EXPECT_EQ(controlled_action(0, -1), 0);
  EXPECT_EQ(controlled_action(0, 0), 0);
  EXPECT_EQ(controlled_action(0, 1), 1);
  EXPECT_EQ(controlled_action(1, -1), 0);
  EXPECT_EQ(controlled_action(1, 0), 1);
  EXPECT_EQ(controlled_action(1, 1), 0);
}

TEST(Discomfort, Weights) {
  EXPECT_NEAR(discomfort_weight(1, 16), 1.6537873695411858, 1e-14);
  EXPECT_NEAR(discomfort_weight(16, 16), 0.0, 1e-15);
  for (int i = 1; i < 16; ++i) {
    EXPECT_GT(discomfort_weight(i, 16), discomfort_weight(i + 1, 16));
  }
  double sum = 0.0;
  for (int i = 1; i <= 16; ++i) sum += discomfort_weight(i, 16);
  EXPECT_NEAR(sum, 15.13191028383529, 1e-12);
}

TEST(Discomfort, Cases) {
  RewardParams r;
  FeedbackBuffer b(16);
  EXPECT_EQ(discomfort_cost(b, 0, true, r), -0.01);
  EXPECT_EQ(discomfort_cost(b, 0, false, r), 0.0);
  b.push(1);
  EXPECT_NEAR(discomfort_cost(b, 1, true, r), 1.6537873695411858, 1e-14);
  b.push(-1);
  EXPECT_NEAR(discomfort_cost(b, -1, true, r),
              discomfort_weight(1, 16) + discomfort_weight(2, 16), 1e-14);

  FeedbackBuffer fresh(16);
  EXPECT_EQ(discomfort_cost_excluding_current(fresh, 1, true, r), 0.0);
  FeedbackBuffer one(16);
  one.push(1);
  EXPECT_NEAR(discomfort_cost_excluding_current(one, -1, true, r),
              discomfort_weight(1, 16), 1e-14);
}

TEST(EnergyCost, Examples) {
  ThermalParams p;
  EXPECT_NEAR(energy_cost(1, 0.10, p), 0.0875, 1e-15);
  EXPECT_EQ(energy_cost(0, 0.25, p), 0.0);
  EXPECT_NEAR(energy_cost(1, -0.02, p), -0.0175, 1e-15);
}

TEST(Environment, GoldenStepRegression) {
  std::ifstream in(std::string(HVAC_TEST_DATA_DIR) + "/golden/step_regression.txt");
  ASSERT_TRUE(in) << "golden file missing";
  auto tr = std::make_shared<ExogenousTraces>();
  struct Row {
    double t_in;
    int action, feedback, ac;
    double disc, energy, total, reward, next;
    std::string buffer;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f[0] == "in") {
      tr->t_out_degc.push_back(std::stod(f[2]));
      tr->rho_per_kwh.push_back(std::stod(f[3]));
      tr->occupancy.push_back(static_cast<std::uint8_t>(std::stoi(f[4])));
    } else {
      rows.push_back({std::stod(f[2]), std::stoi(f[3]), std::stoi(f[4]),
                      std::stoi(f[5]), std::stod(f[6]), std::stod(f[7]),
                      std::stod(f[8]), std::stod(f[9]), std::stod(f[10]), f[11]});
    }
  }
  ASSERT_EQ(rows.size(), tr->size());

  SimConfig cfg;
  HvacEnv env(tr, cfg);
  env.reset(0, 18.5);
  SimulatedFeedback source;
  Rng fb = Rng(20240501).substream("feedback");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Row& r = rows[k];
    const StepOutcome o = env.step(r.action, source, fb);
    EXPECT_NEAR(o.t_in, r.t_in, 1e-12) << k;
    EXPECT_EQ(o.feedback, r.feedback) << k;
    EXPECT_EQ(o.controlled_action, r.ac) << k;
    EXPECT_NEAR(o.costs.discomfort, r.disc, 1e-12) << k;
    EXPECT_NEAR(o.costs.energy, r.energy, 1e-15) << k;
    EXPECT_NEAR(o.costs.total, r.total, 1e-12) << k;
    EXPECT_NEAR(o.costs.reward, r.reward, 1e-12) << k;
    EXPECT_NEAR(o.next_t_in, r.next, 1e-12) << k;
    std::string buf;
    for (double v : o.observation.feedback) buf += v > 0 ? '+' : (v < 0 ? '-' : '0');
    EXPECT_EQ(buf, r.buffer) << k;
  }
  EXPECT_TRUE(env.done());
}

TEST(Environment, UnoccupiedOffIsFree) {
  auto tr = flat_trace(96, 10.0, 0.2, 0);
  HvacEnv env(tr, SimConfig{});
  env.reset(0);
  SimulatedFeedback src;
  Rng fb(1);
  const auto o = env.step(0, src, fb);
  EXPECT_EQ(o.costs.discomfort, 0.0);
  EXPECT_EQ(o.costs.energy, 0.0);
  EXPECT_EQ(o.costs.total, 0.0);
  EXPECT_EQ(o.costs.reward, 0.0);
}

TEST(Environment, BetaZeroTotalIsEnergy) {
  auto tr = flat_trace(96, 10.0, 0.13, 1);
  SimConfig cfg;
  cfg.reward.beta = 0.0;
  cfg.scenario.beta = 0.0;
  HvacEnv env(tr, cfg);
  env.reset(0, 16.0);
  SimulatedFeedback src;
  Rng fb(2);
  for (int k = 0; k < 96; ++k) {
    const auto o = env.step(k % 2, src, fb);
    EXPECT_EQ(o.costs.total, o.costs.energy);
    EXPECT_EQ(o.costs.reward, -(0.0 * o.costs.discomfort + 1.0 * o.costs.energy));
  }
}

TEST(Environment, StepPastEndThrows) {
  auto tr = flat_trace(4, 10.0, 0.1, 1);
  HvacEnv env(tr, SimConfig{});
  env.reset(0);
  NoFeedback src;
  Rng fb(0);
  for (int k = 0; k < 4; ++k) env.step(1, src, fb);
  EXPECT_THROW(env.step(1, src, fb), EpisodeFinished);
}

TEST(Environment, ObservationLayoutAndMasking) {
  ingest::SynthProfile prof;
  auto tr = std::make_shared<ExogenousTraces>(ingest::synth_traces(2, 4, prof));
  for (auto id : {ScenarioId::kS1, ScenarioId::kS2, ScenarioId::kS3}) {
    SimConfig cfg;
    cfg.scenario = ScenarioSpec::make(id);
    HvacEnv env(tr, cfg);
    const Observation o = env.reset(10);
    const auto flat = o.flatten();
    EXPECT_EQ(flat.size(), Observation::flat_size(cfg.scenario, 16));
    EXPECT_EQ(flat.size(), 46u);
    EXPECT_EQ(o.mask().size(), flat.size());
    EXPECT_NEAR(o.tau_sin * o.tau_sin + o.tau_cos * o.tau_cos, 1.0, 1e-9);
    EXPECT_EQ(flat[12], id == ScenarioId::kS2 ? 0.0 : tr->occupancy[10]);
    for (int j = 0; j < 8; ++j) {
      const double expect = id == ScenarioId::kS1 ? tr->occupancy[11 + j] : 0.0;
      EXPECT_EQ(flat[13 + j], expect);
    }
  }
}

TEST(Environment, FeedbackOnlyWhenOccupied) {
  auto tr = std::make_shared<ExogenousTraces>(ingest::synth_traces(3, 8));
  HvacEnv env(tr, SimConfig{});
  SimulatedFeedback src;
  Rng fb(3), pol(4);
  for (std::size_t day = 0; day < 3; ++day) {
    env.reset(day * 96, 15.0);
    while (!env.done()) {
      const auto o = env.step(static_cast<int>(pol.below(2)), src, fb);
      if (!o.occupied) {
        EXPECT_EQ(o.feedback, 0);
      }
      EXPECT_EQ(o.controlled_action, controlled_action(o.action, o.feedback));
    }
  }
}

TEST(Environment, HumanFeedbackRejectedWhenUnoccupied) {
  auto tr = flat_trace(8, 10.0, 0.1, 0);
  HvacEnv env(tr, SimConfig{});
  env.reset(0);
  HumanFeedback human;
  Rng fb(0);
  human.submit(1);
  human.submit(-1);
  const auto o = env.step(0, human, fb);
  EXPECT_EQ(o.feedback, 0);
  EXPECT_TRUE(o.feedback_rejected);
  EXPECT_FALSE(human.has_pending());
}

TEST(Environment, HumanFeedbackLastWriteWins) {
  auto tr = flat_trace(8, 10.0, 0.1, 1);
  HvacEnv env(tr, SimConfig{});
  env.reset(0);
  HumanFeedback human;
  Rng fb(0);
  human.submit(-1);
  human.submit(1);
  const auto o = env.step(0, human, fb);
  EXPECT_EQ(o.feedback, 1);
  EXPECT_EQ(o.origin, FeedbackOrigin::kHuman);
  EXPECT_EQ(o.controlled_action, 1);
  const auto o2 = env.step(0, human, fb);
  EXPECT_EQ(o2.feedback, 0);
}

TEST(Episode, AlwaysOffOnEmptyHomeCostsNothing) {
  auto tr = flat_trace(96, 10.0, 0.3, 0);
  HvacEnv env(tr, SimConfig{});
  ConstantPolicy off(0);
  SimulatedFeedback src;
  Rng fb(1), pol(2);
  const auto rec = run_episode(off, env, 0, src, fb, pol);
  EXPECT_EQ(rec.steps.size(), 96u);
  EXPECT_EQ(rec.total_cost(), 0.0);
}

TEST(Episode, AlwaysOnCostIsSumOfEnergy) {
  auto tr = std::make_shared<ExogenousTraces>(ingest::synth_traces(1, 3));
  tr->occupancy.assign(tr->size(), 0);
  SimConfig cfg;
  HvacEnv env(tr, cfg);
  ConstantPolicy on(1);
  NoFeedback src;
  Rng fb(1), pol(2);
  const auto rec = run_episode(on, env, 0, src, fb, pol);
  double energy = 0.0;
  for (std::size_t k = 0; k < 96; ++k) energy += energy_cost(1, tr->rho_per_kwh[k], cfg.thermal);
  EXPECT_NEAR(rec.energy_cost(), energy, 1e-12);
  EXPECT_NEAR(rec.total_cost(), 0.5 * energy, 1e-12);
}

TEST(Episode, SameSeedsSameRecordsAndFileRoundTrip) {
  auto tr = std::make_shared<ExogenousTraces>(ingest::synth_traces(2, 5));
  auto run = [&](std::uint64_t seed) {
    HvacEnv env(tr, SimConfig{});
    std::vector<int> acts(96);
    Rng a(seed);
    for (int& x : acts) x = static_cast<int>(a.below(2));
    ScriptedPolicy p(acts);
    SimulatedFeedback src;
    Rng fb = Rng(seed).substream("feedback"), pol(0);
    return run_episode(p, env, 96, src, fb, pol);
  };
  const auto a = run(21), b = run(21), c = run(22);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);

  std::stringstream ss;
  std::vector<EpisodeRecord> recs{a, c};
  write_records(ss, recs);
  const auto back = read_records(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], c);
}

TEST(Batch, SerialAndParallelAgree) {
  auto tr = std::make_shared<ExogenousTraces>(ingest::synth_traces(2, 12));
  auto make = [&] {
    std::vector<EnvSlot> slots;
    for (int i = 0; i < 6; ++i) {
      HvacEnv env(tr, SimConfig{});
      env.reset(static_cast<std::size_t>(i) * 10, 17.0 + i);
      slots.push_back({std::move(env), std::make_unique<SimulatedFeedback>(),
                       Rng(5).substream("env", i)});
    }
    return slots;
  };
  auto s1 = make(), s2 = make();
  std::vector<StepOutcome> o1(6), o2(6);
  Rng acts(9);
  for (int k = 0; k < 80; ++k) {
    std::vector<int> a(6);
    for (int& x : a) x = static_cast<int>(acts.below(2));
    step_batch_serial(s1, a, o1);
    step_batch_parallel(s2, a, o2);
    for (int i = 0; i < 6; ++i) {
      EXPECT_EQ(StepRecord::from(o1[i]), StepRecord::from(o2[i]));
    }
  }
}
