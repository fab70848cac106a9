#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "qag/backend.hpp"

namespace qag {

struct ServiceConfig {
  // Loaded models by name.
  std::map<std::string, ModelHandle> models;
  // Longest accepted context, in code points.
  std::size_t max_context_chars = 20000;
  // Contexts longer than this are answered with a job token.
  std::size_t async_threshold_chars = 4000;
  // Requests waiting for or holding one model; more are refused with 429.
  std::size_t queue_depth = 8;
  // When set, every session is mirrored to <dir>/<session id>.json and
  // reloaded from there on demand.
  std::optional<std::string> sessions_dir;
  std::string cors_origin = "*";
};

// HTTP service behind the playground UI:
//   POST /generate                  generate pairs into a session
//   GET  /jobs/{token}              poll an asynchronous generation
//   GET  /session/{id}              session state
//   POST /session/{id}/decision     accept, reject or edit a pair
//   GET  /session/{id}/export       accepted pairs as dataset JSONL
//   GET  /models, GET /spec         loaded models, OpenAPI document
class PlaygroundService {
 public:
  explicit PlaygroundService(ServiceConfig cfg);
  ~PlaygroundService();
  PlaygroundService(const PlaygroundService&) = delete;
  PlaygroundService& operator=(const PlaygroundService&) = delete;

  // Binds to a free port and returns it.
  int bind_to_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  // Serves until stop(). Blocks.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

  static nlohmann::json openapi();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qag
