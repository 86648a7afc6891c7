#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hvac/env/environment.hpp"

namespace hvac::env {

/// Controller interface shared by learned and benchmark policies. Benchmark
/// controllers may read the privileged environment view; learned policies
/// only look at the observation.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Called at the start of every episode.
  virtual void reset(const HvacEnv& env) {}
  virtual int act(const Observation& obs, const HvacEnv& env, Rng& rng) = 0;
};

/// One logged step. Field order matches the record file columns.
struct StepRecord {
  std::size_t step = 0;
  double t_in = 0.0;
  double t_out = 0.0;
  double rho = 0.0;
  int occupied = 0;
  int action = 0;
  int feedback = 0;
  int controlled_action = 0;
  double discomfort = 0.0;
  double energy = 0.0;
  double total = 0.0;
  double reward = 0.0;
  double next_t_in = 0.0;

  static StepRecord from(const StepOutcome& o);
  bool operator==(const StepRecord&) const = default;
};

struct EpisodeRecord {
  std::size_t start_step = 0;
  std::vector<StepRecord> steps;
  double undiscounted_return = 0.0;
  double discounted_return = 0.0;
  int override_count = 0;
  int occupied_steps = 0;

  void append(const StepOutcome& o, double gamma);
  double total_cost() const;
  double energy_cost() const;
  double discomfort_cost() const;
  bool operator==(const EpisodeRecord&) const = default;
};

EpisodeRecord run_episode(Policy& policy, HvacEnv& env, std::size_t start_step,
                          FeedbackSource& source, Rng& feedback_rng,
                          Rng& policy_rng);

/// Line-delimited record file: a version line, a header line, then one
/// comma-separated line per step (docs/formats.md).
void write_records(std::ostream& out, std::span<const EpisodeRecord> records);
void write_records(const std::filesystem::path& path,
                   std::span<const EpisodeRecord> records);
std::vector<EpisodeRecord> read_records(std::istream& in, double gamma = 0.99);
std::string format_step_line(std::size_t episode, const StepRecord& r);

extern const char* const kRecordHeader;

}  // namespace hvac::env
