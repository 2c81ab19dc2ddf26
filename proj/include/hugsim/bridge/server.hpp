#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "hugsim/bridge/protocol.hpp"
#include "hugsim/core/error.hpp"
#include "hugsim/sim/environment.hpp"

namespace hugsim::bridge {

/// Shared, read-only inputs of every session.
struct ServerContext {
  sim::ScenarioConfig config;
  std::shared_ptr<const scene::SceneGraph> scene;
  std::shared_ptr<const assets::AssetLibrary> library;
  std::filesystem::path trace_dir;  // per-episode traces when non-empty

  /// Loads the scene and asset library a scenario names.
  static ServerContext from_config(sim::ScenarioConfig config);
};

/// HELLO reply body: protocol version and camera rig.
nlohmann::json hello_reply(const sim::ScenarioConfig& config);

/// OBS or DONE frame for a step result: header {record, images[, report]},
/// payload = row-major u8 RGB per camera in rig order.
Message observation_message(MessageKind kind, const sim::StepResult& r, const nlohmann::json* report);

Message error_message(ErrorCode code, const std::string& what);

/// Runs one session until the peer closes or an ERROR was sent:
/// HELLO -> RESET -> {OBS <- ACTION}* -> DONE. SCORE is accepted any time
/// after HELLO; RESET may be repeated. Returns the number of episodes started.
int run_session(Transport& transport, const ServerContext& context, int session_id = 0);

/// "host:port" (TCP) or "pipe:/path" (FIFO pair /path.c2s, /path.s2c).
struct ListenAddress {
  bool pipe = false;
  std::string host;
  int port = 0;
  std::string path;

  static ListenAddress parse(const std::string& s);
};

struct ServeOptions {
  std::string listen = "127.0.0.1:7450";
  int max_sessions = 0;  // stop after this many sessions; 0 = unlimited
};

/// Accept loop. TCP sessions run concurrently, one thread per connection;
/// the FIFO pair carries one session at a time. The client of a FIFO pair
/// opens /path.s2c for reading first, then /path.c2s for writing.
class Server {
 public:
  Server(std::shared_ptr<const ServerContext> context, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Bound address ("127.0.0.1:port" or "pipe:/path"); the port is resolved
  /// when 0 was requested.
  std::string address() const;
  /// Blocks until max_sessions completed or stop() was called.
  void run();
  void stop() { stop_ = true; }

 private:
  void run_tcp();
  void run_pipe();

  std::shared_ptr<const ServerContext> context_;
  ServeOptions options_;
  ListenAddress listen_;
  int listen_fd_ = -1;
  std::atomic<bool> stop_{false};
};

/// Blocking client used by tests and tools.
class Client {
 public:
  static Client connect_tcp(const std::string& address);
  static Client connect_pipe(const std::string& path);
  explicit Client(std::unique_ptr<Transport> transport);

  /// Sends HELLO and returns the reply header. Throws kVersionMismatch /
  /// kProtocol when the server answers ERROR.
  nlohmann::json hello(int version = kProtocolVersion);
  Message reset(std::optional<std::uint64_t> seed = std::nullopt);
  Message step(const sim::Action& action);
  nlohmann::json score();
  /// Sends an arbitrary frame and returns the reply (nullopt when the server
  /// closed the stream).
  std::optional<Message> exchange(const Message& msg);
  Transport& transport() { return *transport_; }

 private:
  Message expect_reply(const Message& msg);

  std::unique_ptr<Transport> transport_;
};

}  // namespace hugsim::bridge
