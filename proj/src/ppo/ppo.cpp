#include "hvac/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hvac/nn/tape.hpp"

namespace hvac::ppo {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clip must be in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in [0, 1]");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  if (num_envs < 1) throw std::invalid_argument("num_envs must be >= 1");
  if (rollout_steps < num_envs) throw std::invalid_argument("rollout_steps must be >= num_envs");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (total_updates < 0) throw std::invalid_argument("total_updates must be >= 0");
  if (hidden.empty()) throw std::invalid_argument("hidden must list at least one layer");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden sizes must be >= 1");
  }
  if (validate_every < 0) throw std::invalid_argument("validate_every must be >= 0");
}

nlohmann::json to_json(const PpoConfig& c) {
  return {{"clip", c.clip},
          {"gamma", c.gamma},
          {"lambda", c.lambda},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"rollout_steps", c.rollout_steps},
          {"num_envs", c.num_envs},
          {"lr", c.lr},
          {"c1", c.c1},
          {"c2", c.c2},
          {"max_grad_norm", c.max_grad_norm},
          {"total_updates", c.total_updates},
          {"hidden", c.hidden},
          {"normalize_obs", c.normalize_obs},
          {"validate_every", c.validate_every},
          {"seed", c.seed}};
}

PpoConfig ppo_config_from_json(const nlohmann::json& j) {
  PpoConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "clip") c.clip = v.get<double>();
    else if (key == "gamma") c.gamma = v.get<double>();
    else if (key == "lambda") c.lambda = v.get<double>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "minibatch") c.minibatch = v.get<int>();
    else if (key == "rollout_steps") c.rollout_steps = v.get<int>();
    else if (key == "num_envs") c.num_envs = v.get<int>();
    else if (key == "lr") c.lr = v.get<double>();
    else if (key == "c1") c.c1 = v.get<double>();
    else if (key == "c2") c.c2 = v.get<double>();
    else if (key == "max_grad_norm") c.max_grad_norm = v.get<double>();
    else if (key == "total_updates") c.total_updates = v.get<int>();
    else if (key == "hidden") c.hidden = v.get<std::vector<int>>();
    else if (key == "normalize_obs") c.normalize_obs = v.get<bool>();
    else if (key == "validate_every") c.validate_every = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("unknown ppo key: " + key);
  }
  c.validate();
  return c;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) {
    throw std::invalid_argument("gae: " + std::to_string(n) + " rewards need " +
                                std::to_string(n + 1) + " values and " + std::to_string(n) +
                                " done flags, got " + std::to_string(values.size()) +
                                " and " + std::to_string(dones.size()));
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * values[t + 1] * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
  }
  return out;
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = sd > 1e-12 ? (a - mean) / sd : a - mean;
}

// ---------------------------------------------------------------------------

RunningNorm::RunningNorm(std::size_t size, std::vector<bool> mask)
    : mean_(size, 0.0), var_(size, 1.0), mask_(std::move(mask)) {
  if (mask_.size() != size) throw std::invalid_argument("normalizer mask size mismatch");
}

void RunningNorm::update(std::span<const double> rows, std::size_t count) {
  const std::size_t d = mean_.size();
  if (rows.size() != count * d) throw std::invalid_argument("normalizer batch size mismatch");
  if (count == 0) return;
  const double n = static_cast<double>(count);
  const double tot = count_ + n;
  for (std::size_t j = 0; j < d; ++j) {
    if (!mask_[j]) continue;
    double bm = 0.0;
    for (std::size_t i = 0; i < count; ++i) bm += rows[i * d + j];
    bm /= n;
    double bv = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double e = rows[i * d + j] - bm;
      bv += e * e;
    }
    bv /= n;
    const double delta = bm - mean_[j];
    const double m2 = var_[j] * count_ + bv * n + delta * delta * count_ * n / tot;
    mean_[j] += delta * n / tot;
    var_[j] = m2 / tot;
  }
  count_ = tot;
}

void RunningNorm::normalize(std::span<const double> x, std::span<double> out) const {
  const std::size_t d = mean_.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t j = i % d;
    out[i] = mask_[j]
                 ? std::clamp((x[i] - mean_[j]) / std::sqrt(var_[j] + 1e-8), -10.0, 10.0)
                 : 0.0;
  }
}

void RunningNorm::save(nn::Checkpoint& ck) const {
  const std::size_t d = mean_.size();
  Tensor m = Tensor::from(1, d, mean_), v = Tensor::from(1, d, var_), k(1, d);
  for (std::size_t j = 0; j < d; ++j) k.data[j] = mask_[j] ? 1.0 : 0.0;
  ck.add("norm.mean", m);
  ck.add("norm.var", v);
  ck.add("norm.mask", k);
  ck.add("norm.count", Tensor::scalar(count_));
}

RunningNorm RunningNorm::load(const nn::Checkpoint& ck) {
  const Tensor& m = ck.get("norm.mean");
  const Tensor& v = ck.get("norm.var");
  const Tensor& k = ck.get("norm.mask");
  if (!m.same_shape(v) || !m.same_shape(k)) {
    throw nn::CheckpointError("normalizer tensors disagree in shape");
  }
  std::vector<bool> mask(k.size());
  for (std::size_t j = 0; j < k.size(); ++j) mask[j] = k.data[j] != 0.0;
  RunningNorm r(m.size(), std::move(mask));
  r.mean_ = m.data;
  r.var_ = v.data;
  r.count_ = ck.get("norm.count").data[0];
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<int>& hidden,
                                     std::size_t out) {
  std::vector<std::size_t> s{in};
  for (int h : hidden) s.push_back(static_cast<std::size_t>(h));
  s.push_back(out);
  return s;
}

}  // namespace

PolicyNet::PolicyNet(std::size_t obs_size, const std::vector<int>& hidden,
                     std::vector<bool> mask, Rng& rng)
    : pi_(layer_sizes(obs_size, hidden, 2), "pi", rng),
      v_(layer_sizes(obs_size, hidden, 1), "v", rng),
      norm_(obs_size, std::move(mask)),
      hidden_(hidden) {
  // Start close to the uniform policy.
  nn::Linear& last = pi_.layers().back();
  for (double& w : last.weight().value.data) w *= 0.01;
  last.bias().value.fill(0.0);
}

nn::ParamList PolicyNet::params() {
  nn::ParamList out = pi_.params();
  for (nn::Parameter* p : v_.params()) out.push_back(p);
  return out;
}

Tensor PolicyNet::normalize(std::span<const double> raw, std::size_t rows) const {
  Tensor x(rows, obs_size());
  if (raw.size() != x.size()) {
    throw nn::ShapeError("policy input has " + std::to_string(raw.size()) +
                         " values, expected " + x.shape_string());
  }
  norm_.normalize(raw, x.data);
  return x;
}

Tensor PolicyNet::log_probs(const Tensor& x) const {
  return nn::log_softmax_rows(pi_.infer(x));
}

Tensor PolicyNet::values(const Tensor& x) const { return v_.infer(x); }

int PolicyNet::greedy(std::span<const double> raw_obs) const {
  const Tensor lp = log_probs(normalize(raw_obs, 1));
  return lp.data[1] > lp.data[0] ? 1 : 0;
}

nn::Checkpoint PolicyNet::to_checkpoint(const nlohmann::json& meta) const {
  nn::Checkpoint ck;
  ck.meta["kind"] = "ppo-policy";
  ck.meta["hidden"] = nlohmann::json(hidden_).dump();
  ck.meta["meta"] = meta.dump();
  PolicyNet& self = const_cast<PolicyNet&>(*this);
  ck.add(self.params());
  norm_.save(ck);
  return ck;
}

PolicyNet PolicyNet::from_checkpoint(const nn::Checkpoint& ck) {
  const auto kind = ck.meta.find("kind");
  if (kind == ck.meta.end() || kind->second != "ppo-policy") {
    throw nn::CheckpointError("checkpoint is not a PPO policy");
  }
  const auto hidden = nlohmann::json::parse(ck.meta.at("hidden")).get<std::vector<int>>();
  RunningNorm norm = RunningNorm::load(ck);
  Rng rng(0);
  PolicyNet net(norm.size(), hidden, norm.mask(), rng);
  ck.load_into(net.params());
  net.norm_ = std::move(norm);
  return net;
}

// ---------------------------------------------------------------------------

HvacRlEnv::HvacRlEnv(std::shared_ptr<const ExogenousTraces> traces, SimConfig config,
                     std::shared_ptr<const env::OccupancyForecasts> forecasts, int first_day,
                     int days)
    : env_(std::move(traces), std::move(config), std::move(forecasts)),
      first_day_(first_day),
      days_(days) {
  const std::size_t needed =
      static_cast<std::size_t>(first_day + days) * static_cast<std::size_t>(env_.config().episode_steps);
  if (days < 1 || first_day < 0 || needed > env_.traces().size()) {
    throw std::invalid_argument("training days [" + std::to_string(first_day) + ", " +
                                std::to_string(first_day + days) + ") exceed the trace");
  }
}

std::size_t HvacRlEnv::obs_size() const { return env_.observe().flatten().size(); }

std::vector<bool> HvacRlEnv::obs_mask() const { return env_.observe().mask(); }

std::vector<double> HvacRlEnv::reset(Rng& rng) {
  const std::size_t day = static_cast<std::size_t>(first_day_) +
                          rng.below(static_cast<std::uint64_t>(days_));
  return env_.reset(day * static_cast<std::size_t>(env_.config().episode_steps)).flatten();
}

RlEnv::Step HvacRlEnv::step(int action, Rng& rng) {
  const env::StepOutcome o = env_.step(action, feedback_, rng);
  Step s;
  s.reward = o.costs.reward;
  s.cost = o.costs.total;
  s.done = o.done;
  s.obs = o.done ? reset(rng) : o.observation.flatten();
  return s;
}

// ---------------------------------------------------------------------------

LossTerms ppo_losses(Tape& tape, const Minibatch& b, PolicyNet& net, const PpoConfig& c) {
  const std::size_t n = b.actions.size();
  Var x = tape.constant(b.obs);
  Var lp = nn::log_softmax_rows(net.pi()(tape, x));
  Var lp_a = nn::pick(lp, b.actions);
  Var old = tape.constant(Tensor::from(n, 1, b.old_log_probs));
  Var adv = tape.constant(Tensor::from(n, 1, b.advantages));
  Var ret = tape.constant(Tensor::from(n, 1, b.returns));

  Var ratio = nn::exp(nn::sub(lp_a, old));
  Var unclipped = nn::mul(ratio, adv);
  Var clipped = nn::mul(nn::clip(ratio, 1.0 - c.clip, 1.0 + c.clip), adv);
  LossTerms t;
  t.policy = nn::mean(nn::minimum(unclipped, clipped));
  t.value = nn::mean(nn::square(nn::sub(net.v()(tape, x), ret)));
  // Mean over rows of -sum_a p log p; the column mean folds in 1 / |A|.
  t.entropy = nn::scale(nn::mean(nn::mul(nn::exp(lp), lp)), -static_cast<double>(lp.cols()));
  t.total = nn::add(nn::add(nn::neg(t.policy), nn::scale(t.value, c.c1)),
                    nn::scale(t.entropy, -c.c2));
  return t;
}

// ---------------------------------------------------------------------------

RolloutCollector::RolloutCollector(std::vector<std::unique_ptr<RlEnv>> envs,
                                   std::uint64_t seed)
    : envs_(std::move(envs)) {
  if (envs_.empty()) throw std::invalid_argument("rollout needs at least one env");
  const Rng root(seed);
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    env_rngs_.push_back(root.substream("ppo.env", i));
    action_rngs_.push_back(root.substream("ppo.action", i));
    current_obs_.push_back(envs_[i]->reset(env_rngs_[i]));
  }
  running_cost_.assign(envs_.size(), 0.0);
}

RolloutBuffer RolloutCollector::collect(const PolicyNet& net, std::size_t T) {
  const std::size_t n = envs_.size();
  const std::size_t d = net.obs_size();
  RolloutBuffer buf;
  buf.num_envs = n;
  buf.steps = T;
  buf.obs_size = d;
  buf.raw_obs.resize(n * T * d);
  buf.obs.resize(n * T * d);
  buf.actions.resize(n * T);
  buf.log_probs.resize(n * T);
  buf.rewards.resize(n * T);
  buf.values.resize(n * (T + 1));
  buf.dones.resize(n * T);

  std::vector<double> raw(n * d);
  auto gather = [&] {
    for (std::size_t e = 0; e < n; ++e) {
      if (current_obs_[e].size() != d) {
        throw nn::ShapeError("env observation has " + std::to_string(current_obs_[e].size()) +
                             " values, policy expects " + std::to_string(d));
      }
      std::copy(current_obs_[e].begin(), current_obs_[e].end(), raw.begin() + e * d);
    }
    return net.normalize(raw, n);
  };

  for (std::size_t t = 0; t < T; ++t) {
    const Tensor x = gather();
    const Tensor lp = net.log_probs(x);
    const Tensor v = net.values(x);
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t k = e * T + t;
      std::copy_n(&raw[e * d], d, &buf.raw_obs[k * d]);
      std::copy_n(&x.data[e * d], d, &buf.obs[k * d]);
      const int a = action_rngs_[e].uniform() < std::exp(lp(e, 1)) ? 1 : 0;
      buf.actions[k] = a;
      buf.log_probs[k] = lp(e, static_cast<std::size_t>(a));
      buf.values[e * (T + 1) + t] = v.data[e];
      RlEnv::Step s = envs_[e]->step(a, env_rngs_[e]);
      buf.rewards[k] = s.reward;
      buf.dones[k] = s.done ? 1 : 0;
      running_cost_[e] += s.cost;
      if (s.done) {
        buf.finished_costs.push_back(running_cost_[e]);
        running_cost_[e] = 0.0;
      }
      current_obs_[e] = std::move(s.obs);
    }
  }
  const Tensor v = net.values(gather());
  for (std::size_t e = 0; e < n; ++e) buf.values[e * (T + 1) + T] = v.data[e];
  return buf;
}

void compute_advantages(RolloutBuffer& buf, double gamma, double lambda) {
  const std::size_t T = buf.steps;
  buf.advantages.resize(buf.size());
  buf.returns.resize(buf.size());
  for (std::size_t e = 0; e < buf.num_envs; ++e) {
    const GaeResult g =
        gae(std::span(buf.rewards).subspan(e * T, T), std::span(buf.values).subspan(e * (T + 1), T + 1),
            std::span(buf.dones).subspan(e * T, T), gamma, lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), buf.advantages.begin() + e * T);
    std::copy(g.returns.begin(), g.returns.end(), buf.returns.begin() + e * T);
  }
}

UpdateStats update_policy(PolicyNet& net, nn::Adam& opt, const RolloutBuffer& buf,
                          const PpoConfig& c, Rng& rng) {
  const std::size_t n = buf.size();
  const std::size_t d = buf.obs_size;
  const auto mb = static_cast<std::size_t>(c.minibatch);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  UpdateStats stats;
  int batches = 0;
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t begin = 0; begin < n; begin += mb) {
      const std::size_t m = std::min(mb, n - begin);
      Minibatch b;
      b.obs = Tensor(m, d);
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t k = order[begin + r];
        std::copy_n(&buf.obs[k * d], d, &b.obs.data[r * d]);
        b.actions.push_back(buf.actions[k]);
        b.old_log_probs.push_back(buf.log_probs[k]);
        b.advantages.push_back(buf.advantages[k]);
        b.returns.push_back(buf.returns[k]);
      }
      normalize_advantages(b.advantages);
      opt.zero_grad();
      Tape tape;
      const LossTerms t = ppo_losses(tape, b, net, c);
      const double total = t.total.value().data[0];
      if (!std::isfinite(total)) {
        throw PpoDiverged("non-finite PPO loss in epoch " + std::to_string(epoch + 1));
      }
      tape.backward(t.total);
      stats.grad_norm += opt.step();
      stats.policy += t.policy.value().data[0];
      stats.value += t.value.value().data[0];
      stats.entropy += t.entropy.value().data[0];
      ++batches;
    }
  }
  if (batches > 0) {
    stats.policy /= batches;
    stats.value /= batches;
    stats.entropy /= batches;
    stats.grad_norm /= batches;
  }
  return stats;
}

TrainResult train(const PpoConfig& c,
                  std::function<std::unique_ptr<RlEnv>(std::size_t)> make_env,
                  const Validator& validator) {
  c.validate();
  const Rng root(c.seed);
  std::vector<std::unique_ptr<RlEnv>> envs;
  for (int i = 0; i < c.num_envs; ++i) envs.push_back(make_env(static_cast<std::size_t>(i)));
  const std::size_t obs_size = envs.front()->obs_size();
  Rng init = root.substream("ppo.init");
  PolicyNet net(obs_size, c.hidden, envs.front()->obs_mask(), init);
  nn::Adam adam(net.params(), {.lr = c.lr, .max_grad_norm = c.max_grad_norm});
  RolloutCollector collector(std::move(envs), root.substream("ppo.rollout").next_u64());
  Rng shuffle = root.substream("ppo.shuffle");
  const std::size_t steps_per_env =
      static_cast<std::size_t>((c.rollout_steps + c.num_envs - 1) / c.num_envs);

  TrainResult result;
  result.best = net;
  result.best_validation_cost = std::numeric_limits<double>::infinity();
  for (int u = 1; u <= c.total_updates; ++u) {
    TrainCurvePoint point;
    point.update = u;
    try {
      RolloutBuffer buf = collector.collect(net, steps_per_env);
      compute_advantages(buf, c.gamma, c.lambda);
      point.stats = update_policy(net, adam, buf, c, shuffle);
      if (c.normalize_obs) net.norm().update(buf.raw_obs, buf.size());
      double sum = 0.0;
      for (double v : buf.finished_costs) sum += v;
      point.mean_episode_cost = buf.finished_costs.empty()
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : sum / static_cast<double>(buf.finished_costs.size());
    } catch (const PpoDiverged& e) {
      result.aborted = true;
      result.abort_reason = std::string(e.what()) + " at update " + std::to_string(u);
      if (!validator) result.best_update = u - 1;
      return result;
    }
    point.validation_cost = std::numeric_limits<double>::quiet_NaN();
    if (validator && c.validate_every > 0 && (u % c.validate_every == 0 || u == c.total_updates)) {
      point.validation_cost = validator(net);
      if (point.validation_cost < result.best_validation_cost) {
        result.best_validation_cost = point.validation_cost;
        result.best = net;
        result.best_update = u;
      }
    }
    if (!validator) {
      result.best = net;
      result.best_update = u;
    }
    result.curve.push_back(point);
  }
  return result;
}

int GreedyPolicy::act(const Observation& obs, const env::HvacEnv&, Rng&) {
  return net_->greedy(obs.flatten());
}

double evaluate_days(const PolicyNet& net, std::shared_ptr<const ExogenousTraces> traces,
                     const SimConfig& config,
                     std::shared_ptr<const env::OccupancyForecasts> forecasts, int first_day,
                     int days, std::uint64_t seed) {
  env::HvacEnv e(std::move(traces), config, std::move(forecasts));
  GreedyPolicy policy(std::make_shared<const PolicyNet>(net));
  env::SimulatedFeedback source;
  double total = 0.0;
  for (int d = 0; d < days; ++d) {
    Rng fb = Rng(seed).substream("eval.feedback", static_cast<std::uint64_t>(first_day + d));
    Rng pol = Rng(seed).substream("eval.policy", static_cast<std::uint64_t>(first_day + d));
    const std::size_t start =
        static_cast<std::size_t>(first_day + d) * static_cast<std::size_t>(config.episode_steps);
    total += env::run_episode(policy, e, start, source, fb, pol).total_cost();
  }
  return total / static_cast<double>(days);
}

}  // namespace hvac::ppo
