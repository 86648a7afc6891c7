#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "hvac/bridge/session.hpp"

namespace httplib {
class Server;
}

namespace hvac::bridge {

class StartupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServiceConfig {
  SessionInputs inputs;
  std::string host = "127.0.0.1";
  int port = 8765;  // 0 picks a free port
  std::filesystem::path records_dir = "sessions";
  std::filesystem::path static_dir;  // optional dashboard bundle
};

/// HTTP front end over a set of sessions. Endpoints and payloads are
/// documented in docs/protocol.md.
class BridgeService {
 public:
  explicit BridgeService(ServiceConfig config);
  ~BridgeService();
  BridgeService(const BridgeService&) = delete;
  BridgeService& operator=(const BridgeService&) = delete;

  /// Binds and serves on a background thread. Throws StartupError when the
  /// port cannot be bound.
  void start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  /// Stops serving, closes every session and writes its records to
  /// `records_dir/<id>.records`.
  void stop();
  int port() const { return port_; }

  std::shared_ptr<Session> create_session(const SessionParams& params);
  std::shared_ptr<Session> find(const std::string& id) const;
  /// Closes the session and flushes its records. Returns the record path.
  std::filesystem::path close_session(const std::string& id);

 private:
  void routes();

  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<bool> stopped_{false};
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace hvac::bridge
