#include "hvac/bridge/service.hpp"

#include "httplib.h"

namespace hvac::bridge {

using nlohmann::json;

namespace {

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void reply(httplib::Response& res, int status, json body) {
  body["version"] = kProtocolVersion;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& kind,
                 const std::string& message) {
  reply(res, status, {{"error", message}, {"kind", kind}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw ProtocolError("request body must be a JSON object");
    if (j.contains("version") && j.at("version") != kProtocolVersion) {
      throw ProtocolError("unsupported protocol version " + j.at("version").dump());
    }
    return j;
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
}

// Wraps a handler so every failure maps to a status code with a JSON body.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ProtocolError& e) {
      reply_error(res, 400, "protocol", e.what());
    } catch (const NotFound& e) {
      reply_error(res, 404, "not_found", e.what());
    } catch (const StateError& e) {
      reply_error(res, 409, "rejected", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "internal", e.what());
    }
  };
}

int int_field(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) {
    throw ProtocolError(std::string("field '") + key + "' must be an integer");
  }
  return j.at(key).get<int>();
}

}  // namespace

BridgeService::BridgeService(ServiceConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  if (!config_.inputs.traces) throw StartupError("bridge service needs traces");
  // The library default sets SO_REUSEPORT, which lets a second service bind a
  // port that is already serving. Plain SO_REUSEADDR still allows quick
  // restarts but makes a busy port a startup error.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  routes();
}

BridgeService::~BridgeService() {
  try {
    stop();
  } catch (...) {
  }
}

void BridgeService::start() {
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
    if (port_ <= 0) throw StartupError("cannot bind " + config_.host);
  } else {
    if (!server_->bind_to_port(config_.host, config_.port)) {
      throw StartupError("cannot bind " + config_.host + ":" + std::to_string(config_.port) +
                         " (port in use?)");
    }
    port_ = config_.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void BridgeService::wait() {
  if (thread_.joinable()) thread_.join();
}

void BridgeService::stop() {
  if (stopped_.exchange(true)) return;
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) ids.push_back(id);
  }
  for (const std::string& id : ids) close_session(id);
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::shared_ptr<Session> BridgeService::create_session(const SessionParams& params) {
  std::string id;
  {
    std::lock_guard lock(mu_);
    id = "s" + std::to_string(next_id_++);
  }
  auto session = std::make_shared<Session>(id, params, config_.inputs);
  std::lock_guard lock(mu_);
  sessions_[id] = session;
  return session;
}

std::shared_ptr<Session> BridgeService::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
  return it->second;
}

std::filesystem::path BridgeService::close_session(const std::string& id) {
  std::shared_ptr<Session> s = find(id);
  s->close();
  const std::filesystem::path path = config_.records_dir / (id + ".records");
  s->flush_records(path);
  std::lock_guard lock(mu_);
  sessions_.erase(id);
  return path;
}

void BridgeService::routes() {
  httplib::Server& srv = *server_;

  srv.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}, {"service", "hvacsim-bridge"},
                     {"service_version", kServiceVersion}});
  }));

  srv.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) list.push_back(s->state());
    reply(res, 200, {{"sessions", list}});
  }));

  srv.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (stopped_) throw StateError("service is shutting down");
    const SessionParams params = session_params_from_json(parse_body(req));
    std::shared_ptr<Session> s;
    try {
      s = create_session(params);
    } catch (const ConfigError& e) {
      throw ProtocolError(e.what());
    } catch (const std::runtime_error& e) {
      // Unreadable or mismatched checkpoints are client input problems.
      throw ProtocolError(e.what());
    }
    reply(res, 201, {{"session", s->id()}, {"state", s->state()}});
  }));

  srv.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, find(req.path_params.at("id"))->state());
  }));

  srv.Delete("/sessions/:id",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto path = close_session(req.path_params.at("id"));
    reply(res, 200, {{"closed", req.path_params.at("id")}, {"records", path.string()}});
  }));

  srv.Post("/sessions/:id/step",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto s = find(req.path_params.at("id"));
    const json body = parse_body(req);
    const auto events = s->step(int_field(body, "count", 1));
    reply(res, 200, {{"events", events}});
  }));

  srv.Post("/sessions/:id/feedback",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto s = find(req.path_params.at("id"));
    const json body = parse_body(req);
    if (!body.contains("value")) throw ProtocolError("feedback needs a 'value'");
    const FeedbackAck ack = s->submit_feedback(int_field(body, "value", 0));
    reply(res, 202, {{"accepted", true}, {"step", ack.step}, {"value", ack.value},
                     {"replaced", ack.replaced}});
  }));

  srv.Post("/sessions/:id/pace",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto s = find(req.path_params.at("id"));
    const json body = parse_body(req);
    if (!body.contains("pace")) throw ProtocolError("pace request needs 'pace'");
    const std::string mode = body.at("pace").get<std::string>();
    if (mode != "manual" && mode != "auto") {
      throw ProtocolError("pace must be manual or auto, got '" + mode + "'");
    }
    double sps = s->params().steps_per_second;
    if (body.contains("steps_per_second")) sps = body.at("steps_per_second").get<double>();
    s->set_pace(mode == "auto" ? PaceMode::kAuto : PaceMode::kManual, sps);
    reply(res, 200, s->state());
  }));

  // NDJSON stream of step events newer than `after`. With follow=1 the
  // response stays open and new events are pushed as they happen.
  srv.Get("/sessions/:id/events",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto s = find(req.path_params.at("id"));
    std::uint64_t cursor = 0;
    if (req.has_param("after")) {
      try {
        cursor = std::stoull(req.get_param_value("after"));
      } catch (const std::exception&) {
        throw ProtocolError("after must be a non-negative integer");
      }
    }
    const bool follow = req.get_param_value("follow") == "1";
    res.set_chunked_content_provider(
        "application/x-ndjson",
        [this, s, cursor, follow](std::size_t, httplib::DataSink& sink) mutable {
          for (const json& ev : s->events_after(cursor)) {
            const std::string line = ev.dump() + "\n";
            if (!sink.write(line.data(), line.size())) return false;
            cursor = ev.at("seq").get<std::uint64_t>();
          }
          const bool ended = s->finished() || s->closed() || stopped_;
          if (!follow || (ended && s->last_seq() <= cursor)) {
            sink.done();
            return true;
          }
          s->wait_for_events(cursor, std::chrono::milliseconds(200));
          return sink.is_writable();
        });
  }));

  srv.Get("/sessions/:id/records",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto s = find(req.path_params.at("id"));
    res.set_header("Content-Disposition",
                   "attachment; filename=\"" + s->id() + ".records\"");
    res.set_content(s->records_text(), "text/csv");
  }));

  if (!config_.static_dir.empty()) srv.set_mount_point("/", config_.static_dir.string());
}

}  // namespace hvac::bridge
