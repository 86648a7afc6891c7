#include "hvac/predictor/predictor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "hvac/nn/optim.hpp"
#include "hvac/rng.hpp"

namespace hvac::predictor {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void PredictorConfig::validate() const {
  if (past_horizon < 1) throw std::invalid_argument("past_horizon must be >= 1");
  if (future_horizon < 1) throw std::invalid_argument("future_horizon must be >= 1");
  if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cycle_steps < 1) throw std::invalid_argument("cycle_steps must be >= 1");
}

nlohmann::json to_json(const PredictorConfig& c) {
  return {{"past_horizon", c.past_horizon}, {"future_horizon", c.future_horizon},
          {"hidden", c.hidden},             {"lr", c.lr},
          {"epochs", c.epochs},             {"batch_size", c.batch_size},
          {"seed", c.seed},                 {"cycle_steps", c.cycle_steps}};
}

PredictorConfig predictor_config_from_json(const nlohmann::json& j) {
  PredictorConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "past_horizon") c.past_horizon = value.get<int>();
    else if (key == "future_horizon") c.future_horizon = value.get<int>();
    else if (key == "hidden") c.hidden = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "cycle_steps") c.cycle_steps = value.get<int>();
    else throw std::invalid_argument("unknown predictor key: " + key);
  }
  c.validate();
  return c;
}

namespace {

// Time features for an index that may precede the series start.
std::pair<double, double> tau_at(std::int64_t index, int cycle_steps) {
  const std::int64_t c = cycle_steps;
  return cyclic_encode(((index % c) + c) % c, c);
}

// Appends one window anchored at `t` (in series coordinates) reading
// occupancy through `occ_at`.
template <typename OccAt>
void append_window(WindowSet& w, OccAt occ_at, std::int64_t t, std::int64_t index_offset,
                   int cycle_steps, bool with_targets) {
  const auto hp = static_cast<std::int64_t>(w.past_len) - 1;
  for (std::int64_t s = t - hp; s <= t; ++s) {
    const auto [sn, cs] = tau_at(s + index_offset, cycle_steps);
    w.past.push_back(occ_at(s));
    w.past.push_back(sn);
    w.past.push_back(cs);
  }
  for (std::int64_t j = 1; j <= static_cast<std::int64_t>(w.future_len); ++j) {
    const auto [sn, cs] = tau_at(t + j + index_offset, cycle_steps);
    w.future_tau.push_back(sn);
    w.future_tau.push_back(cs);
    w.targets.push_back(with_targets ? occ_at(t + j) : 0.0);
  }
}

Tensor gather_past_step(const WindowSet& w, std::span<const std::size_t> samples,
                        std::size_t step) {
  Tensor x(samples.size(), 3);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const double* row = &w.past[(samples[b] * w.past_len + step) * 3];
    std::copy(row, row + 3, &x.data[b * 3]);
  }
  return x;
}

Tensor gather_future_tau(const WindowSet& w, std::span<const std::size_t> samples,
                         std::size_t j) {
  Tensor x(samples.size(), 2);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const double* row = &w.future_tau[(samples[b] * w.future_len + j) * 2];
    std::copy(row, row + 2, &x.data[b * 2]);
  }
  return x;
}

Tensor gather_targets(const WindowSet& w, std::span<const std::size_t> samples) {
  Tensor y(samples.size(), w.future_len);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    std::copy_n(&w.targets[samples[b] * w.future_len], w.future_len, &y.data[b * w.future_len]);
  }
  return y;
}

// Mean BCE from logits: softplus(z) - y z.
Var bce_from_logits(Tape& tape, Var logits, const Tensor& targets) {
  Var y = tape.constant(targets);
  return nn::mean(nn::sub(nn::softplus(logits), nn::mul(y, logits)));
}

WindowSet single_window(const PredictorConfig& c, std::span<const double> past,
                        std::span<const double> future_tau) {
  const auto past_len = static_cast<std::size_t>(c.past_horizon) + 1;
  const auto future_len = static_cast<std::size_t>(c.future_horizon);
  if (past.size() != past_len * 3 || future_tau.size() != future_len * 2) {
    throw nn::ShapeError("predict: past has " + std::to_string(past.size()) +
                         " values (expected " + std::to_string(past_len * 3) +
                         "), future tau has " + std::to_string(future_tau.size()) +
                         " (expected " + std::to_string(future_len * 2) + ")");
  }
  WindowSet w;
  w.past_len = past_len;
  w.future_len = future_len;
  w.past.assign(past.begin(), past.end());
  w.future_tau.assign(future_tau.begin(), future_tau.end());
  w.targets.assign(future_len, 0.0);
  return w;
}

}  // namespace

WindowSet build_training_windows(std::span<const std::uint8_t> occupancy, int cycle_steps,
                                 const PredictorConfig& config,
                                 std::int64_t index_offset) {
  config.validate();
  const std::size_t hp = static_cast<std::size_t>(config.past_horizon);
  const std::size_t ho = static_cast<std::size_t>(config.future_horizon);
  if (occupancy.size() <= hp + ho) {
    throw std::invalid_argument("occupancy series of length " +
                                std::to_string(occupancy.size()) + " too short for h^p=" +
                                std::to_string(hp) + " and h^O=" + std::to_string(ho));
  }
  WindowSet w;
  w.past_len = hp + 1;
  w.future_len = ho;
  const std::size_t n = occupancy.size() - hp - ho;
  w.past.reserve(n * w.past_len * 3);
  auto occ_at = [&](std::int64_t s) { return static_cast<double>(occupancy[s]); };
  for (std::size_t i = 0; i < n; ++i) {
    append_window(w, occ_at, static_cast<std::int64_t>(hp + i), index_offset, cycle_steps,
                  true);
  }
  return w;
}

OccupancyPredictor::OccupancyPredictor(const PredictorConfig& config) : config_(config) {
  config_.validate();
  Rng rng = Rng(config_.seed).substream("predictor.init");
  const auto h = static_cast<std::size_t>(config_.hidden);
  l1f_ = nn::LstmCell(3, h, "l1f", rng);
  l1b_ = nn::LstmCell(3, h, "l1b", rng);
  l2f_ = nn::LstmCell(2 * h + 2, h, "l2f", rng);
  l2b_ = nn::LstmCell(2 * h + 2, h, "l2b", rng);
  head_ = nn::Linear(2 * h, 1, "head", rng);
}

nn::ParamList OccupancyPredictor::params() {
  nn::ParamList out;
  for (nn::LstmCell* c : {&l1f_, &l1b_, &l2f_, &l2b_}) {
    for (nn::Parameter* p : c->params()) out.push_back(p);
  }
  for (nn::Parameter* p : head_.params()) out.push_back(p);
  return out;
}

Var OccupancyPredictor::encode(Tape& tape, const WindowSet& w,
                               std::span<const std::size_t> samples) {
  if (w.past_len != static_cast<std::size_t>(config_.past_horizon) + 1 ||
      w.future_len != static_cast<std::size_t>(config_.future_horizon)) {
    throw nn::ShapeError("windows are " + std::to_string(w.past_len) + "+" +
                         std::to_string(w.future_len) + " steps, model expects " +
                         std::to_string(config_.past_horizon + 1) + "+" +
                         std::to_string(config_.future_horizon));
  }
  std::vector<Var> xs;
  xs.reserve(w.past_len);
  for (std::size_t s = 0; s < w.past_len; ++s) {
    xs.push_back(tape.constant(gather_past_step(w, samples, s)));
  }
  nn::LstmState fwd = l1f_.zero_state(tape, samples.size());
  for (std::size_t s = 0; s < w.past_len; ++s) fwd = l1f_(tape, xs[s], fwd);
  nn::LstmState bwd = l1b_.zero_state(tape, samples.size());
  for (std::size_t s = w.past_len; s-- > 0;) bwd = l1b_(tape, xs[s], bwd);
  const std::array<Var, 2> ctx{fwd.h, bwd.h};
  return nn::concat_cols(ctx);
}

Var OccupancyPredictor::logits(Tape& tape, const WindowSet& w,
                               std::span<const std::size_t> samples) {
  Var ctx = encode(tape, w, samples);
  const std::size_t ho = w.future_len;
  std::vector<Var> z;
  z.reserve(ho);
  for (std::size_t j = 0; j < ho; ++j) {
    const std::array<Var, 2> parts{ctx, tape.constant(gather_future_tau(w, samples, j))};
    z.push_back(nn::concat_cols(parts));
  }
  std::vector<Var> hf(ho), hb(ho);
  nn::LstmState s = l2f_.zero_state(tape, samples.size());
  for (std::size_t j = 0; j < ho; ++j) hf[j] = (s = l2f_(tape, z[j], s)).h;
  s = l2b_.zero_state(tape, samples.size());
  for (std::size_t j = ho; j-- > 0;) hb[j] = (s = l2b_(tape, z[j], s)).h;
  std::vector<Var> out;
  out.reserve(ho);
  for (std::size_t j = 0; j < ho; ++j) {
    const std::array<Var, 2> parts{hf[j], hb[j]};
    out.push_back(head_(tape, nn::concat_cols(parts)));
  }
  return nn::concat_cols(out);
}

std::vector<double> OccupancyPredictor::predict(std::span<const double> past,
                                                std::span<const double> future_tau) {
  const WindowSet w = single_window(config_, past, future_tau);
  return predict_all(w);
}

std::vector<double> OccupancyPredictor::context(std::span<const double> past) {
  const std::vector<double> tau(static_cast<std::size_t>(config_.future_horizon) * 2, 0.0);
  const WindowSet w = single_window(config_, past, tau);
  Tape tape;
  const std::size_t idx = 0;
  return encode(tape, w, std::span(&idx, 1)).value().data;
}

std::vector<double> OccupancyPredictor::predict_all(const WindowSet& w, std::size_t batch) {
  std::vector<double> out;
  out.reserve(w.targets.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < w.size(); begin += batch) {
    const std::size_t end = std::min(w.size(), begin + batch);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    Tape tape;
    Var p = nn::sigmoid(logits(tape, w, idx));
    out.insert(out.end(), p.value().data.begin(), p.value().data.end());
  }
  return out;
}

nn::Checkpoint OccupancyPredictor::to_checkpoint() {
  nn::Checkpoint ck;
  ck.meta["kind"] = "occupancy-predictor";
  ck.meta["config"] = to_json(config_).dump();
  ck.add(params());
  return ck;
}

OccupancyPredictor OccupancyPredictor::from_checkpoint(const nn::Checkpoint& ck) {
  const auto kind = ck.meta.find("kind");
  if (kind == ck.meta.end() || kind->second != "occupancy-predictor") {
    throw nn::CheckpointError("checkpoint is not an occupancy predictor");
  }
  OccupancyPredictor m(predictor_config_from_json(nlohmann::json::parse(ck.meta.at("config"))));
  ck.load_into(m.params());
  return m;
}

double dataset_loss(OccupancyPredictor& model, const WindowSet& w, std::size_t batch) {
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < w.size(); begin += batch) {
    const std::size_t end = std::min(w.size(), begin + batch);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    Tape tape;
    Var loss = bce_from_logits(tape, model.logits(tape, w, idx), gather_targets(w, idx));
    total += loss.value().data[0] * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(w.size());
}

TrainResult train(OccupancyPredictor& model, const WindowSet& w) {
  if (w.size() == 0) throw std::invalid_argument("training set is empty");
  const PredictorConfig& c = model.config();
  nn::Adam adam(model.params(), {.lr = c.lr});
  Rng rng = Rng(c.seed).substream("predictor.shuffle");
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.initial_loss = dataset_loss(model, w);
  const auto bs = static_cast<std::size_t>(c.batch_size);
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const std::span<const std::size_t> idx(order.data() + begin,
                                             std::min(bs, order.size() - begin));
      adam.zero_grad();
      Tape tape;
      Var loss = bce_from_logits(tape, model.logits(tape, w, idx), gather_targets(w, idx));
      if (!std::isfinite(loss.value().data[0])) {
        throw PredictorDiverged("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                ", batch starting at " + std::to_string(begin));
      }
      tape.backward(loss);
      adam.step();
    }
    result.epoch_losses.push_back(dataset_loss(model, w));
    if (!std::isfinite(result.epoch_losses.back())) {
      throw PredictorDiverged("non-finite loss after epoch " + std::to_string(epoch + 1));
    }
  }
  return result;
}

double accuracy(std::span<const double> probabilities, std::span<const double> targets,
                double threshold) {
  if (probabilities.size() != targets.size() || targets.empty()) {
    throw std::invalid_argument("accuracy needs equal, non-empty inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    hits += ((probabilities[i] > threshold) == (targets[i] > 0.5)) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

double accuracy(OccupancyPredictor& model, const WindowSet& w, double threshold) {
  return accuracy(model.predict_all(w), w.targets, threshold);
}

env::OccupancyForecasts forecast_trace(OccupancyPredictor& model,
                                       const ExogenousTraces& traces,
                                       std::span<const std::uint8_t> history) {
  const PredictorConfig& c = model.config();
  const auto hist = static_cast<std::int64_t>(history.size());
  const auto n = static_cast<std::int64_t>(traces.size());
  auto occ_at = [&](std::int64_t s) {
    // Relative to the trace start; negative indices reach into history and
    // anything older holds the earliest known value.
    s = std::max(s, -hist);
    if (s < 0) return static_cast<double>(history[static_cast<std::size_t>(hist + s)]);
    return static_cast<double>(traces.occupancy[static_cast<std::size_t>(std::min(s, n - 1))]);
  };
  WindowSet w;
  w.past_len = static_cast<std::size_t>(c.past_horizon) + 1;
  w.future_len = static_cast<std::size_t>(c.future_horizon);
  for (std::int64_t t = 0; t < n; ++t) append_window(w, occ_at, t, 0, traces.cycle_steps, false);
  env::OccupancyForecasts out;
  out.horizon = w.future_len;
  out.probabilities = model.predict_all(w);
  return out;
}

}  // namespace hvac::predictor
