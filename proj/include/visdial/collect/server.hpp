#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "visdial/collect/coordinator.hpp"

namespace visdial::collect {

struct ServerConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "collect_data";
  CollectConfig collect;
  int threads = 1;
  std::int64_t sweep_interval_ms = 1000;
  std::size_t max_frame_bytes = 64 * 1024;
  bool handle_signals = false;  // SIGINT/SIGTERM stop the server
};

struct ServerState;

/// Websocket chat endpoint at /ws plus the admin HTTP endpoints, on one port.
///   client -> server: join{worker_id}, message{text}, heartbeat, leave
///   server -> client: paired, message, turn_rejected, partner_disconnected,
///                     solo_prompt, session_complete, error{code}
///   GET /healthz, GET /sessions/{id}, POST /images (JSONL manifest)
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Recovers persisted state, binds and starts the worker threads.
  void start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();
  std::uint16_t port() const;

 private:
  std::unique_ptr<ServerState> impl_;
};

/// Converts a coordinator event to the client frame it produces, or null for
/// server-only events. `seq` is the per-connection frame number.
nlohmann::ordered_json event_frame(const SessionEvent& e, std::uint64_t seq);

}  // namespace visdial::collect
