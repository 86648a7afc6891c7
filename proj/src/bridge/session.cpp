#include "hvac/bridge/session.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hvac/harness/experiment.hpp"

namespace hvac::bridge {

using nlohmann::json;

namespace {

std::string to_string(PaceMode m) { return m == PaceMode::kAuto ? "auto" : "manual"; }
std::string to_string(FeedbackMode m) { return m == FeedbackMode::kHybrid ? "hybrid" : "manual"; }

PaceMode parse_pace(const std::string& s) {
  if (s == "manual") return PaceMode::kManual;
  if (s == "auto") return PaceMode::kAuto;
  throw ProtocolError("pace must be manual or auto, got '" + s + "'");
}

FeedbackMode parse_feedback_mode(const std::string& s) {
  if (s == "manual") return FeedbackMode::kManual;
  if (s == "hybrid") return FeedbackMode::kHybrid;
  throw ProtocolError("feedback_mode must be manual or hybrid, got '" + s + "'");
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string("field '") + key + "' has the wrong type");
  }
}

harness::CellSpec cell_of(const SessionParams& p) {
  harness::CellSpec c;
  c.controller = p.controller;
  c.scenario = p.scenario;
  c.beta = p.beta;
  c.p_max = p.p_max;
  c.seed = p.seed;
  c.checkpoint = p.checkpoint;
  return c;
}

}  // namespace

SessionParams session_params_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("session parameters must be a JSON object");
  static const std::set<std::string> known = {
      "version", "scenario", "controller", "checkpoint", "seed", "beta", "p_max",
      "day", "days", "feedback_mode", "pace", "steps_per_second"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ProtocolError("unknown session field '" + key + "'");
  }
  SessionParams p;
  try {
    p.scenario = parse_scenario(field<std::string>(j, "scenario", "S1"));
  } catch (const ConfigError& e) {
    throw ProtocolError(e.what());
  }
  p.controller = field<std::string>(j, "controller", p.controller);
  p.checkpoint = field<std::string>(j, "checkpoint", "");
  p.seed = field<std::uint64_t>(j, "seed", p.seed);
  p.beta = field<double>(j, "beta", p.beta);
  p.p_max = field<double>(j, "p_max", p.p_max);
  p.day = field<int>(j, "day", p.day);
  p.days = field<int>(j, "days", p.days);
  p.feedback_mode = parse_feedback_mode(field<std::string>(j, "feedback_mode", "manual"));
  p.pace = parse_pace(field<std::string>(j, "pace", "manual"));
  p.steps_per_second = field<double>(j, "steps_per_second", p.steps_per_second);
  if (p.day < 0 || p.days < 1) throw ProtocolError("day must be >= 0 and days >= 1");
  if (!(p.steps_per_second > 0.0)) throw ProtocolError("steps_per_second must be positive");
  try {
    cell_of(p).validate();
  } catch (const ConfigError& e) {
    throw ProtocolError(e.what());
  }
  return p;
}

json to_json(const SessionParams& p) {
  return {{"scenario", hvac::to_string(p.scenario)},
          {"controller", p.controller},
          {"checkpoint", p.checkpoint.generic_string()},
          {"seed", p.seed},
          {"beta", p.beta},
          {"p_max", p.p_max},
          {"day", p.day},
          {"days", p.days},
          {"feedback_mode", to_string(p.feedback_mode)},
          {"pace", to_string(p.pace)},
          {"steps_per_second", p.steps_per_second}};
}

Session::Session(std::string id, SessionParams params, const SessionInputs& inputs)
    : id_(std::move(id)),
      params_(std::move(params)),
      feedback_(params_.feedback_mode == FeedbackMode::kHybrid
                    ? env::HumanFeedback::Fallback::kSimulated
                    : env::HumanFeedback::Fallback::kNone),
      pace_(params_.pace),
      steps_per_second_(params_.steps_per_second) {
  if (!inputs.traces) throw ConfigError("session needs traces");
  const harness::CellSpec cell = cell_of(params_);
  config_ = harness::cell_config(cell, inputs.base);
  const std::size_t steps = static_cast<std::size_t>(config_.episode_steps);
  const std::size_t last = static_cast<std::size_t>(params_.day + params_.days) * steps;
  if (last > inputs.traces->size()) {
    throw ProtocolError("days " + std::to_string(params_.day) + ".." +
                        std::to_string(params_.day + params_.days - 1) +
                        " exceed the trace (" + std::to_string(inputs.traces->size() / steps) +
                        " days)");
  }
  std::shared_ptr<const env::OccupancyForecasts> forecasts;
  if (config_.scenario.occupancy_forecast_source == OccupancyForecastSource::kPredictor) {
    if (!inputs.forecasts) throw ProtocolError("S4 sessions need a predictor checkpoint");
    forecasts = inputs.forecasts;
  }
  policy_ = harness::make_policy(cell);
  env_ = std::make_unique<env::HvacEnv>(inputs.traces, config_, forecasts);
  start_day_locked();
  pacer_ = std::thread([this] { pace_loop(); });
}

Session::~Session() {
  close();
  if (pacer_.joinable()) pacer_.join();
}

// Streams match the headless evaluation of the same day, so a session fed the
// simulator's feedback reproduces the harness record.
void Session::start_day_locked() {
  const std::uint64_t day = static_cast<std::uint64_t>(params_.day + day_offset_);
  const Rng root(params_.seed);
  feedback_rng_ = root.substream("harness.feedback", day);
  policy_rng_ = root.substream("harness.policy", day);
  const std::size_t start = day * static_cast<std::size_t>(config_.episode_steps);
  obs_ = env_->reset(start);
  policy_->reset(*env_);
  current_ = env::EpisodeRecord{};
  current_.start_step = start;
}

FeedbackAck Session::submit_feedback(int value) {
  if (value < -1 || value > 1) {
    throw ProtocolError("feedback must be -1, 0 or +1, got " + std::to_string(value));
  }
  std::lock_guard lock(mu_);
  if (closed_ || finished_) throw StateError("session " + id_ + " is not running");
  if (value != 0 && !env_->occupied_now()) {
    throw StateError("feedback rejected: the home is unoccupied at step " +
                     std::to_string(seq_ + 1));
  }
  FeedbackAck ack;
  ack.step = seq_ + 1;
  ack.value = value;
  ack.replaced = feedback_.has_pending() && pending_for_ == ack.step;
  feedback_.submit(value);
  pending_for_ = ack.step;
  return ack;
}

json Session::step_locked() {
  const int action = policy_->act(obs_, *env_, policy_rng_);
  env::StepOutcome out = env_->step(action, feedback_, feedback_rng_);
  pending_for_.reset();
  current_.append(out, config_.gamma);
  cum_energy_ += out.costs.energy;
  cum_discomfort_ += out.costs.discomfort;
  cum_total_ += out.costs.total;
  obs_ = std::move(out.observation);
  ++seq_;
  const env::StepRecord r = env::StepRecord::from(out);
  json ev = {{"version", kProtocolVersion},
             {"type", "step"},
             {"session", id_},
             {"seq", seq_},
             {"day", params_.day + day_offset_},
             {"step", r.step},
             {"t_in", r.t_in},
             {"t_out", r.t_out},
             {"rho", r.rho},
             {"occupied", r.occupied},
             {"action", r.action},
             {"feedback", r.feedback},
             {"controlled_action", r.controlled_action},
             {"discomfort", r.discomfort},
             {"energy", r.energy},
             {"total", r.total},
             {"reward", r.reward},
             {"next_t_in", r.next_t_in},
             {"feedback_origin", env::to_string(out.origin)},
             {"feedback_rejected", out.feedback_rejected},
             {"cumulative", {{"energy", cum_energy_},
                             {"discomfort", cum_discomfort_},
                             {"total", cum_total_}}},
             {"episode_done", out.done}};
  if (out.done) {
    done_records_.push_back(std::move(current_));
    current_ = env::EpisodeRecord{};
    ++day_offset_;
    if (day_offset_ >= params_.days) {
      finished_ = true;
    } else {
      start_day_locked();
    }
  }
  ev["finished"] = finished_;
  events_.push_back(ev);
  return ev;
}

std::vector<json> Session::step(int count) {
  if (count < 1) throw ProtocolError("step count must be at least 1");
  std::vector<json> out;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw StateError("session " + id_ + " is closed");
    if (finished_) throw StateError("session " + id_ + " has finished");
    for (int i = 0; i < count && !finished_; ++i) out.push_back(step_locked());
  }
  cv_.notify_all();
  return out;
}

std::vector<json> Session::events_after(std::uint64_t after) const {
  std::lock_guard lock(mu_);
  // seq n lives at index n - 1.
  const std::size_t from = std::min<std::size_t>(after, events_.size());
  return {events_.begin() + static_cast<std::ptrdiff_t>(from), events_.end()};
}

bool Session::wait_for_events(std::uint64_t after, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return seq_ > after || closed_ || finished_; });
  return seq_ > after;
}

json Session::state() const {
  std::lock_guard lock(mu_);
  return {{"version", kProtocolVersion},
          {"session", id_},
          {"params", to_json(params_)},
          {"seq", seq_},
          {"day", params_.day + std::min(day_offset_, params_.days - 1)},
          {"step", env_->state().step_index},
          {"t_in", env_->state().t_in},
          {"occupied_now", !finished_ && env_->occupied_now()},
          {"pending_feedback", feedback_.has_pending()},
          {"pace", to_string(pace_)},
          {"steps_per_second", steps_per_second_},
          {"cumulative", {{"energy", cum_energy_},
                          {"discomfort", cum_discomfort_},
                          {"total", cum_total_}}},
          {"finished", finished_},
          {"closed", closed_}};
}

bool Session::finished() const {
  std::lock_guard lock(mu_);
  return finished_;
}

std::uint64_t Session::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

PaceMode Session::pace() const {
  std::lock_guard lock(mu_);
  return pace_;
}

void Session::set_pace(PaceMode mode, double steps_per_second) {
  if (!(steps_per_second > 0.0)) throw ProtocolError("steps_per_second must be positive");
  {
    std::lock_guard lock(mu_);
    pace_ = mode;
    steps_per_second_ = steps_per_second;
  }
  cv_.notify_all();
}

void Session::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Session::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

void Session::pace_loop() {
  std::unique_lock lock(mu_);
  while (!closed_) {
    if (pace_ == PaceMode::kAuto && !finished_) {
      step_locked();
      cv_.notify_all();
      const auto period = std::chrono::duration<double>(1.0 / steps_per_second_);
      cv_.wait_for(lock, period, [&] { return closed_ || pace_ != PaceMode::kAuto; });
    } else {
      cv_.wait(lock, [&] { return closed_ || (pace_ == PaceMode::kAuto && !finished_); });
    }
  }
}

std::vector<env::EpisodeRecord> Session::records() const {
  std::lock_guard lock(mu_);
  std::vector<env::EpisodeRecord> out = done_records_;
  if (!current_.steps.empty()) out.push_back(current_);
  return out;
}

std::string Session::records_text() const {
  std::ostringstream out;
  env::write_records(out, records());
  return out.str();
}

void Session::flush_records(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write session records to " + path.string());
  out << records_text();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace hvac::bridge
