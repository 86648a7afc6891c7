#include "hvac/env/episode.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hvac::env {

const char* const kRecordHeader =
    "episode,step,t_in,t_out,rho,occupied,action,feedback,controlled_action,"
    "discomfort,energy,total,reward,next_t_in";

namespace {
constexpr const char* kVersionLine = "# hvacsim-record v1";
}

StepRecord StepRecord::from(const StepOutcome& o) {
  StepRecord r;
  r.step = o.step_index;
  r.t_in = o.t_in;
  r.t_out = o.t_out;
  r.rho = o.rho;
  r.occupied = o.occupied;
  r.action = o.action;
  r.feedback = o.feedback;
  r.controlled_action = o.controlled_action;
  r.discomfort = o.costs.discomfort;
  r.energy = o.costs.energy;
  r.total = o.costs.total;
  r.reward = o.costs.reward;
  r.next_t_in = o.next_t_in;
  return r;
}

void EpisodeRecord::append(const StepOutcome& o, double gamma) {
  const double discount =
      std::pow(gamma, static_cast<double>(steps.size()));
  steps.push_back(StepRecord::from(o));
  undiscounted_return += o.costs.reward;
  discounted_return += discount * o.costs.reward;
  if (o.feedback != 0) ++override_count;
  if (o.occupied) ++occupied_steps;
}

double EpisodeRecord::total_cost() const {
  double s = 0.0;
  for (const auto& r : steps) s += r.total;
  return s;
}

double EpisodeRecord::energy_cost() const {
  double s = 0.0;
  for (const auto& r : steps) s += r.energy;
  return s;
}

double EpisodeRecord::discomfort_cost() const {
  double s = 0.0;
  for (const auto& r : steps) s += r.discomfort;
  return s;
}

EpisodeRecord run_episode(Policy& policy, HvacEnv& env, std::size_t start_step,
                          FeedbackSource& source, Rng& feedback_rng,
                          Rng& policy_rng) {
  EpisodeRecord rec;
  rec.start_step = start_step;
  Observation obs = env.reset(start_step);
  policy.reset(env);
  while (!env.done()) {
    const int action = policy.act(obs, env, policy_rng);
    StepOutcome out = env.step(action, source, feedback_rng);
    rec.append(out, env.config().gamma);
    obs = std::move(out.observation);
  }
  return rec;
}

std::string format_step_line(std::size_t episode, const StepRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%zu,%zu,%.17g,%.17g,%.17g,%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%"
                ".17g",
                episode, r.step, r.t_in, r.t_out, r.rho, r.occupied, r.action,
                r.feedback, r.controlled_action, r.discomfort, r.energy,
                r.total, r.reward, r.next_t_in);
  return buf;
}

void write_records(std::ostream& out, std::span<const EpisodeRecord> records) {
  out << kVersionLine << '\n' << kRecordHeader << '\n';
  for (std::size_t e = 0; e < records.size(); ++e) {
    for (const auto& r : records[e].steps) out << format_step_line(e, r) << '\n';
  }
}

void write_records(const std::filesystem::path& path,
                   std::span<const EpisodeRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_records(out, records);
}

std::vector<EpisodeRecord> read_records(std::istream& in, double gamma) {
  std::string line;
  if (!std::getline(in, line) || line != kVersionLine) {
    throw std::runtime_error("record file: missing version line");
  }
  if (!std::getline(in, line) || line != kRecordHeader) {
    throw std::runtime_error("record file: unexpected header");
  }
  std::vector<EpisodeRecord> out;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t episode = 0;
    StepRecord r;
    const int n = std::sscanf(
        line.c_str(), "%zu,%zu,%lg,%lg,%lg,%d,%d,%d,%d,%lg,%lg,%lg,%lg,%lg",
        &episode, &r.step, &r.t_in, &r.t_out, &r.rho, &r.occupied, &r.action,
        &r.feedback, &r.controlled_action, &r.discomfort, &r.energy, &r.total,
        &r.reward, &r.next_t_in);
    if (n != 14) {
      throw std::runtime_error("record file line " + std::to_string(lineno) +
                               ": expected 14 fields");
    }
    if (episode >= out.size()) {
      out.resize(episode + 1);
      out[episode].start_step = r.step;
    }
    EpisodeRecord& rec = out[episode];
    rec.steps.push_back(r);
  }
  // Returns and counters are not stored per line; rebuild them.
  for (auto& rec : out) {
    std::vector<StepRecord> steps = std::move(rec.steps);
    const std::size_t start = rec.start_step;
    rec = EpisodeRecord{};
    rec.start_step = start;
    for (const auto& r : steps) {
      rec.discounted_return +=
          std::pow(gamma, static_cast<double>(rec.steps.size())) * r.reward;
      rec.steps.push_back(r);
      rec.undiscounted_return += r.reward;
      if (r.feedback != 0) ++rec.override_count;
      if (r.occupied) ++rec.occupied_steps;
    }
  }
  return out;
}

}  // namespace hvac::env
