#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "hvac/ingest.hpp"
#include "hvac/nn/gradcheck.hpp"
#include "hvac/ppo/ppo.hpp"

#include "support/ppo_oracles.hpp"

using namespace hvac;
using namespace hvac::oracle;
using namespace hvac::ppo;

namespace {

class BanditEnv final : public RlEnv {
 public:
  explicit BanditEnv(int nan_after = -1) : nan_after_(nan_after) {}
  std::size_t obs_size() const override { return 1; }
  std::vector<bool> obs_mask() const override { return {true}; }
  std::vector<double> reset(Rng&) override { return {1.0}; }
  Step step(int action, Rng&) override {
    ++steps_;
    Step s;
    s.obs = {1.0};
    s.reward = (nan_after_ >= 0 && steps_ > nan_after_) ? std::nan("") : action;
    s.cost = -s.reward;
    s.done = true;
    return s;
  }

 private:
  int nan_after_;
  int steps_ = 0;
};

struct HvacFixture {
  std::shared_ptr<const ExogenousTraces> traces;
  SimConfig config;
  HvacFixture() {
    traces = std::make_shared<const ExogenousTraces>(ingest::synth_traces(6, 3));
    config.scenario = ScenarioSpec::make(ScenarioId::kS1);
  }
  std::unique_ptr<RlEnv> make() const {
    return std::make_unique<HvacRlEnv>(traces, config, nullptr, 0, 6);
  }
};

}  // namespace

TEST(Gae, SingleTerminalStep) {
  const std::vector<double> r{1.0}, v{0.0, 0.0};
  const std::vector<std::uint8_t> d{1};
  const GaeResult g = gae(r, v, d, 0.99, 0.95);
  EXPECT_EQ(g.advantages[0], 1.0);
  EXPECT_EQ(g.returns[0], 1.0);
}

TEST(Gae, LambdaZeroIsTdError) {
  Rng rng(1);
  std::vector<double> r(8), v(9);
  std::vector<std::uint8_t> d(8, 0);
  for (double& x : r) x = rng.normal();
  for (double& x : v) x = rng.normal();
  d[3] = 1;
  const GaeResult g = gae(r, v, d, 0.9, 0.0);
  for (std::size_t t = 0; t < 8; ++t) {
    const double delta = r[t] + (d[t] ? 0.0 : 0.9 * v[t + 1]) - v[t];
    EXPECT_EQ(g.advantages[t], delta);
    EXPECT_EQ(g.returns[t], delta + v[t]);
  }
}

TEST(Gae, MatchesUnrolledSumOracle) {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(10), v(11);
    std::vector<std::uint8_t> d(10);
    for (double& x : r) x = rng.normal(0.0, 2.0);
    for (double& x : v) x = rng.normal();
    for (auto& x : d) x = rng.bernoulli(0.15) ? 1 : 0;
    const double g = rng.uniform(0.5, 1.0), l = rng.uniform(0.0, 1.0);
    const GaeResult got = gae(r, v, d, g, l);
    const auto want = unrolled_gae(r, v, d, g, l);
    for (std::size_t t = 0; t < 10; ++t) {
      worst = std::max(worst, std::abs(got.advantages[t] - want[t]));
      EXPECT_NEAR(got.returns[t], got.advantages[t] + v[t], 1e-15);
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Gae, LengthMismatchRejected) {
  const std::vector<double> r{1.0, 2.0}, v{0.0, 0.0};
  const std::vector<std::uint8_t> d{0, 1};
  EXPECT_THROW(gae(r, v, d, 0.99, 0.95), std::invalid_argument);
}

TEST(Advantages, NormalizedMoments) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(2 + rng.below(300));
    const double scale = rng.uniform(0.01, 50.0), shift = rng.uniform(-10, 10);
    for (double& x : a) x = shift + scale * rng.normal();
    normalize_advantages(a);
    double m = 0.0;
    for (double x : a) m += x;
    m /= static_cast<double>(a.size());
    double var = 0.0;
    for (double x : a) var += (x - m) * (x - m);
    EXPECT_LT(std::abs(m), 1e-9);
    EXPECT_LT(std::abs(std::sqrt(var / static_cast<double>(a.size())) - 1.0), 1e-9);
  }
}

TEST(RunningNormTest, MatchesPooledStatistics) {
  Rng rng(4);
  RunningNorm norm(3, {true, false, true});
  std::vector<double> all;
  for (int chunk = 0; chunk < 5; ++chunk) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> rows(n * 3);
    for (double& x : rows) x = rng.normal(2.0, 3.0);
    norm.update(rows, n);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  const std::size_t n = all.size() / 3;
  for (std::size_t j : {0u, 2u}) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += all[i * 3 + j];
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (all[i * 3 + j] - m) * (all[i * 3 + j] - m);
    v /= static_cast<double>(n);
    EXPECT_NEAR(norm.mean()[j], m, 1e-12);
    EXPECT_NEAR(norm.var()[j], v, 1e-10);
  }
  EXPECT_EQ(norm.mean()[1], 0.0);
  std::vector<double> out(3);
  norm.normalize(std::vector<double>{1.0, 5.0, 2.0}, out);
  EXPECT_EQ(out[1], 0.0);
}

TEST(Losses, IdentityRatioGivesMeanAdvantage) {
  PolicyNet net = small_net(4, 5);
  Rng rng(5);
  Minibatch b = random_batch(net, 16, rng);
  const nn::Tensor lp = net.log_probs(b.obs);
  for (std::size_t i = 0; i < 16; ++i) b.old_log_probs[i] = lp(i, static_cast<std::size_t>(b.actions[i]));
  nn::Tape tape;
  const LossTerms t = ppo_losses(tape, b, net, PpoConfig{});
  const double mean_adv = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / 16.0;
  EXPECT_NEAR(t.policy.value().data[0], mean_adv, 1e-15);
}

TEST(Losses, UniformPolicyEntropyIsLn2) {
  PolicyNet net = small_net(4, 6, 0.0);
  Rng rng(6);
  const Minibatch b = random_batch(net, 10, rng);
  nn::Tape tape;
  const LossTerms t = ppo_losses(tape, b, net, PpoConfig{});
  EXPECT_NEAR(t.entropy.value().data[0], std::log(2.0), 1e-15);
}

TEST(Losses, HandBuiltClippedContribution) {
  PolicyNet net = small_net(2, 7, 0.0);  // uniform: log pi = ln 0.5
  Minibatch b;
  b.obs = nn::Tensor(1, 2, 0.3);
  b.actions = {1};
  b.old_log_probs = {std::log(0.5) - std::log(1.3)};
  b.advantages = {1.0};
  b.returns = {0.0};
  PpoConfig c;
  c.clip = 0.2;
  nn::Tape tape;
  const LossTerms t = ppo_losses(tape, b, net, c);
  EXPECT_NEAR(t.policy.value().data[0], 1.2, 1e-12);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = policy_gradcheck_trial(rng, 100 + static_cast<std::uint64_t>(trial));
    ASSERT_LT(r.max_rel_error, 1e-4) << "trial " << trial << " " << r.worst_param;
  }
}

TEST(Losses, ZeroAdvantageGivesNoPolicyGradient) {
  PolicyNet net = small_net(4, 9);
  Rng rng(9);
  Minibatch b = random_batch(net, 12, rng);
  std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
  nn::zero_grads(net.params());
  nn::Tape tape;
  tape.backward(ppo_losses(tape, b, net, PpoConfig{}).policy);
  for (nn::Parameter* p : net.pi().params()) {
    for (double g : p->grad.data) EXPECT_EQ(g, 0.0);
  }
}

TEST(Losses, ValueLossIgnoresActionLabels) {
  PolicyNet net = small_net(4, 10);
  Rng rng(10);
  Minibatch b = random_batch(net, 12, rng);
  nn::Tape t1;
  const double v1 = ppo_losses(t1, b, net, PpoConfig{}).value.value().data[0];
  for (int& a : b.actions) a = 1 - a;
  nn::Tape t2;
  EXPECT_EQ(ppo_losses(t2, b, net, PpoConfig{}).value.value().data[0], v1);
}

TEST(Rollout, CountsDeterminismAndLogProbConsistency) {
  HvacFixture fx;
  auto collect = [&] {
    std::vector<std::unique_ptr<RlEnv>> envs;
    for (int i = 0; i < 3; ++i) envs.push_back(fx.make());
    Rng rng(11);
    PolicyNet net(envs[0]->obs_size(), {8}, envs[0]->obs_mask(), rng);
    RolloutCollector c(std::move(envs), 42);
    RolloutBuffer b = c.collect(net, 150);
    return std::make_pair(std::move(b), net);
  };
  auto [a, net] = collect();
  auto [b, net2] = collect();
  EXPECT_EQ(a.size(), 450u);
  EXPECT_EQ(a.actions.size(), 450u);
  EXPECT_EQ(a.values.size(), 3u * 151);
  EXPECT_EQ(a.obs, b.obs);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.rewards, b.rewards);
  EXPECT_EQ(a.log_probs, b.log_probs);
  // Each env finishes one 96-step episode within 150 steps.
  EXPECT_EQ(a.finished_costs.size(), 3u);
  EXPECT_EQ(std::count(a.dones.begin(), a.dones.end(), 1), 3);

  nn::Tensor x(a.size(), a.obs_size);
  x.data = a.obs;
  const nn::Tensor lp = net.log_probs(x);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(lp(k, static_cast<std::size_t>(a.actions[k])), a.log_probs[k]);
  }
}

TEST(Train, BanditConverges) {
  PpoConfig c;
  c.num_envs = 2;
  c.rollout_steps = 64;
  c.minibatch = 32;
  c.total_updates = 200;
  c.hidden = {8};
  c.lr = 3e-3;
  c.validate_every = 0;
  c.seed = 1;
  const TrainResult r = train(c, [](std::size_t) { return std::make_unique<BanditEnv>(); });
  ASSERT_FALSE(r.aborted);
  const nn::Tensor lp = r.best.log_probs(r.best.normalize(std::vector<double>{1.0}, 1));
  EXPECT_GT(std::exp(lp(0, 1)), 0.95);
}

TEST(Train, ClippedUpdateBound) {
  HvacFixture fx;
  std::vector<std::unique_ptr<RlEnv>> envs;
  for (int i = 0; i < 8; ++i) envs.push_back(fx.make());
  PpoConfig c;
  Rng rng(12);
  PolicyNet net(envs[0]->obs_size(), c.hidden, envs[0]->obs_mask(), rng);
  nn::Adam adam(net.params(), {.lr = c.lr, .max_grad_norm = c.max_grad_norm});
  RolloutCollector collector(std::move(envs), 7);
  Rng shuffle(13);
  std::size_t outside = 0, total = 0;
  for (int u = 0; u < 5; ++u) {
    RolloutBuffer buf = collector.collect(net, 256);
    compute_advantages(buf, c.gamma, c.lambda);
    update_policy(net, adam, buf, c, shuffle);
    nn::Tensor x(buf.size(), buf.obs_size);
    x.data = buf.obs;
    const nn::Tensor lp = net.log_probs(x);
    for (std::size_t k = 0; k < buf.size(); ++k) {
      const double ratio = std::exp(lp(k, static_cast<std::size_t>(buf.actions[k])) - buf.log_probs[k]);
      if (ratio < 1.0 - c.clip - 0.05 || ratio > 1.0 + c.clip + 0.05) ++outside;
      ++total;
    }
    net.norm().update(buf.raw_obs, buf.size());
  }
  EXPECT_LT(static_cast<double>(outside) / static_cast<double>(total), 0.05);
}

TEST(Train, SeededCurveIsReproducible) {
  HvacFixture fx;
  PpoConfig c;
  c.num_envs = 2;
  c.rollout_steps = 256;
  c.minibatch = 64;
  c.total_updates = 4;
  c.validate_every = 2;
  c.seed = 3;
  auto run = [&] {
    return train(c, [&](std::size_t) { return fx.make(); },
                 [&](const PolicyNet& n) {
                   return evaluate_days(n, fx.traces, fx.config, nullptr, 4, 2, 5);
                 });
  };
  const TrainResult a = run(), b = run();
  ASSERT_EQ(a.curve.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.curve[i].mean_episode_cost, b.curve[i].mean_episode_cost);
    EXPECT_EQ(std::isnan(a.curve[i].validation_cost), std::isnan(b.curve[i].validation_cost));
    if (!std::isnan(a.curve[i].validation_cost)) {
      EXPECT_EQ(a.curve[i].validation_cost, b.curve[i].validation_cost);
    }
    EXPECT_EQ(a.curve[i].stats.policy, b.curve[i].stats.policy);
  }
  EXPECT_EQ(a.best_update, b.best_update);
  EXPECT_TRUE(std::isnan(a.curve[0].validation_cost));
  EXPECT_FALSE(std::isnan(a.curve[1].validation_cost));
}

TEST(Train, NanLossAbortsWithLastGoodPolicy) {
  PpoConfig c;
  c.num_envs = 1;
  c.rollout_steps = 16;
  c.minibatch = 16;
  c.total_updates = 10;
  c.hidden = {4};
  c.validate_every = 0;
  const TrainResult r = train(c, [](std::size_t) { return std::make_unique<BanditEnv>(40); });
  EXPECT_TRUE(r.aborted);
  EXPECT_NE(r.abort_reason.find("non-finite"), std::string::npos);
  EXPECT_EQ(r.best_update, 2);
  PolicyNet best = r.best;
  for (nn::Parameter* p : best.params()) EXPECT_TRUE(p->value.all_finite());
}

TEST(Checkpoint, PolicyRoundTrip) {
  HvacFixture fx;
  auto e = fx.make();
  Rng rng(14);
  PolicyNet net(e->obs_size(), {16, 16}, e->obs_mask(), rng);
  std::vector<double> rows;
  Rng er(15);
  for (int i = 0; i < 50; ++i) {
    auto s = e->step(i % 3 == 0, er);
    rows.insert(rows.end(), s.obs.begin(), s.obs.end());
  }
  net.norm().update(rows, 50);
  const auto ck = nn::decode_checkpoint(nn::encode_checkpoint(net.to_checkpoint({{"scenario", "S1"}})));
  EXPECT_EQ(nlohmann::json::parse(ck.meta.at("meta"))["scenario"], "S1");
  const PolicyNet back = PolicyNet::from_checkpoint(ck);
  EXPECT_EQ(back.norm().mean(), net.norm().mean());
  EXPECT_EQ(back.norm().mask(), net.norm().mask());
  for (std::size_t i = 0; i < 50; ++i) {
    const std::span<const double> row(&rows[i * net.obs_size()], net.obs_size());
    EXPECT_EQ(back.greedy(row), net.greedy(row));
  }
}

TEST(Config, ValidationAndJson) {
  PpoConfig c;
  c.clip = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PpoConfig{};
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  const PpoConfig d = ppo_config_from_json(to_json(PpoConfig{}));
  EXPECT_EQ(to_json(d), to_json(PpoConfig{}));
  EXPECT_THROW(ppo_config_from_json({{"bogus", 1}}), std::invalid_argument);
}
