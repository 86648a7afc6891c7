#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "hvac/config.hpp"
#include "hvac/env/episode.hpp"
#include "json.hpp"

namespace hvac::bridge {

/// Protocol version carried on every message.
inline constexpr int kProtocolVersion = 1;
inline constexpr const char* kServiceVersion = "0.1.0";

/// Malformed request or value outside the protocol (HTTP 400).
class ProtocolError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Request that is valid but not allowed in the session's current state
/// (HTTP 409), such as feedback during an unoccupied step.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PaceMode { kManual, kAuto };
/// Without human input: `kManual` applies no override, `kHybrid` falls back
/// to the simulated occupant.
enum class FeedbackMode { kManual, kHybrid };

struct SessionParams {
  ScenarioId scenario = ScenarioId::kS1;
  std::string controller = "rule";  // rule | mpc | rl
  std::filesystem::path checkpoint;
  std::uint64_t seed = 0;
  double beta = 0.5;
  double p_max = 1.0;
  int day = 0;   // first day of the trace to simulate
  int days = 1;  // consecutive days in the session
  FeedbackMode feedback_mode = FeedbackMode::kManual;
  PaceMode pace = PaceMode::kManual;
  double steps_per_second = 4.0;
};

/// Parses a create-session body. Unknown keys and bad values throw
/// ProtocolError.
SessionParams session_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SessionParams& p);

/// Inputs shared by every session of a service.
struct SessionInputs {
  std::shared_ptr<const ExogenousTraces> traces;
  SimConfig base;
  std::shared_ptr<const env::OccupancyForecasts> forecasts;  // S4 only
};

struct FeedbackAck {
  std::uint64_t step = 0;  // seq of the step the value will apply to
  int value = 0;
  bool replaced = false;   // an earlier value for the same step was dropped
};

/// One live simulated home. All mutation happens under the session lock, so
/// steps are serialized and a pending feedback value is consumed by exactly
/// one step.
class Session {
 public:
  Session(std::string id, SessionParams params, const SessionInputs& inputs);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const SessionParams& params() const { return params_; }

  /// Queues an override for the next step; the latest value wins.
  FeedbackAck submit_feedback(int value);
  /// Advances up to `count` steps and returns their events.
  std::vector<nlohmann::json> step(int count = 1);
  /// Events with seq greater than `after`, oldest first.
  std::vector<nlohmann::json> events_after(std::uint64_t after) const;
  /// Blocks until an event newer than `after` exists, the session ends or
  /// the timeout expires. Returns true when new events are available.
  bool wait_for_events(std::uint64_t after, std::chrono::milliseconds timeout) const;
  nlohmann::json state() const;
  bool finished() const;
  std::uint64_t last_seq() const;

  void set_pace(PaceMode mode, double steps_per_second);
  /// Stops auto-advance and wakes waiting readers.
  void close();
  bool closed() const;
  PaceMode pace() const;

  /// Completed episodes plus the one in progress.
  std::vector<env::EpisodeRecord> records() const;
  std::string records_text() const;
  void flush_records(const std::filesystem::path& path) const;

 private:
  void start_day_locked();
  nlohmann::json step_locked();
  void pace_loop();

  std::string id_;
  SessionParams params_;
  SimConfig config_;
  std::unique_ptr<env::HvacEnv> env_;
  std::unique_ptr<env::Policy> policy_;
  env::HumanFeedback feedback_;
  Rng feedback_rng_, policy_rng_;
  Observation obs_;
  int day_offset_ = 0;
  bool finished_ = false;
  bool closed_ = false;
  std::uint64_t seq_ = 0;
  std::optional<std::uint64_t> pending_for_;
  PaceMode pace_ = PaceMode::kManual;
  double steps_per_second_ = 4.0;
  double cum_energy_ = 0.0, cum_discomfort_ = 0.0, cum_total_ = 0.0;
  std::vector<env::EpisodeRecord> done_records_;
  env::EpisodeRecord current_;
  std::vector<nlohmann::json> events_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::thread pacer_;
};

}  // namespace hvac::bridge
