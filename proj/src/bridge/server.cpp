#include "hugsim/bridge/server.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <unistd.h>

#include "hugsim/core/error.hpp"
#include "hugsim/render/image_io.hpp"

namespace hugsim::bridge {

using nlohmann::json;

namespace {

std::string errno_text() { return std::strerror(errno); }

[[noreturn]] void io_error(const std::string& what) { fail(ErrorCode::kIo, what + ": " + errno_text()); }

class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& dir, int session, int episode, const json& header) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    const auto p = dir / ("session-" + std::to_string(session) + "-episode-" + std::to_string(episode) + ".jsonl");
    out_.open(p, std::ios::binary | std::ios::trunc);
    require(out_.good(), ErrorCode::kIo, "trace: cannot open " + p.string());
    out_ << header.dump() << '\n';
  }
  void write(const sim::StepResult& r) {
    if (out_.is_open()) out_ << r.to_trace_json().dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

}  // namespace

ServerContext ServerContext::from_config(sim::ScenarioConfig config) {
  ServerContext ctx;
  config.validate();
  ctx.scene = sim::load_scenario_scene(config);
  if (!config.asset_library.empty()) {
    std::filesystem::path p = config.asset_library;
    if (p.is_relative()) p = config.base_dir / p;
    ctx.library = std::make_shared<assets::AssetLibrary>(p);
  }
  ctx.config = std::move(config);
  return ctx;
}

json hello_reply(const sim::ScenarioConfig& config) {
  json cams = json::array(), route = json::array();
  for (const auto& c : config.cameras) cams.push_back(c.to_json());
  for (const auto& p : config.route) route.push_back({p.x(), p.y()});
  return {{"version", kProtocolVersion},
          {"server", "hugsim"},
          {"scenario", config.name},
          {"control_hz", config.control_hz},
          {"horizon", config.horizon},
          {"tier", config.tier},
          {"seed", config.seed},
          {"route", route},
          {"kinematics", config.kinematics.to_json()},
          {"cameras", cams}};
}

Message observation_message(MessageKind kind, const sim::StepResult& r, const json* report) {
  Message m;
  m.kind = kind;
  json images = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < r.observations.size(); ++i) {
    const auto rgb = render::to_rgb8(r.observations[i].color);
    const int w = r.observations[i].color.width, h = r.observations[i].color.height;
    images.push_back({{"index", i}, {"width", w}, {"height", h}, {"channels", 3}, {"offset", offset},
                      {"bytes", rgb.size()}, {"hash", r.observation_hashes.at(i)}});
    offset += rgb.size();
    m.payload.insert(m.payload.end(), rgb.begin(), rgb.end());
  }
  m.header = {{"record", r.to_trace_json()}, {"images", images}};
  if (report) m.header["report"] = *report;
  return m;
}

Message error_message(ErrorCode code, const std::string& what) {
  Message m;
  m.kind = MessageKind::kError;
  m.header = {{"code", to_string(code)}, {"message", what}};
  return m;
}

int run_session(Transport& transport, const ServerContext& context, int session_id) {
  std::unique_ptr<sim::Environment> env;
  std::unique_ptr<TraceWriter> trace;
  bool greeted = false;
  int episodes = 0;
  auto send_error = [&](ErrorCode code, const std::string& what) {
    try {
      send_message(transport, error_message(code, what));
    } catch (const Error&) {
      // peer already gone
    }
  };
  try {
    while (true) {
      std::optional<Message> msg;
      try {
        msg = receive_message(transport);
      } catch (const Error& e) {
        send_error(e.code(), e.what());
        return episodes;
      }
      if (!msg) return episodes;

      if (!greeted) {
        if (msg->kind != MessageKind::kHello) {
          send_error(ErrorCode::kProtocol, std::string("expected HELLO, got ") + to_string(msg->kind));
          return episodes;
        }
        const auto v = msg->header.find("version");
        if (v == msg->header.end() || !v->is_number_integer() || v->get<long long>() != kProtocolVersion) {
          send_error(ErrorCode::kVersionMismatch,
                     "protocol version " + (v == msg->header.end() ? std::string("missing") : v->dump()) +
                         ", server speaks " + std::to_string(kProtocolVersion));
          return episodes;
        }
        greeted = true;
        send_message(transport, {MessageKind::kHello, hello_reply(context.config), {}});
        continue;
      }

      if (!msg->payload.empty()) {
        send_error(ErrorCode::kShapeMismatch, std::string(to_string(msg->kind)) + " carries no payload, got " +
                                                  std::to_string(msg->payload.size()) + " bytes");
        return episodes;
      }

      switch (msg->kind) {
        case MessageKind::kReset: {
          std::optional<std::uint64_t> seed;
          const auto s = msg->header.find("seed");
          if (s != msg->header.end() && !s->is_null()) {
            if (!s->is_number_unsigned()) {
              send_error(ErrorCode::kInvalidArgument, "RESET: seed must be a non-negative integer");
              return episodes;
            }
            seed = s->get<std::uint64_t>();
          }
          if (!env) env = std::make_unique<sim::Environment>(context.config, context.scene, context.library);
          const auto r = env->reset(seed);
          trace = std::make_unique<TraceWriter>(context.trace_dir, session_id, episodes, env->trace_header());
          trace->write(r);
          ++episodes;
          send_message(transport, observation_message(MessageKind::kObs, r, nullptr));
          break;
        }
        case MessageKind::kAction: {
          if (!env || !env->started()) {
            send_error(ErrorCode::kProtocol, "ACTION before RESET");
            return episodes;
          }
          if (env->done()) {
            send_error(ErrorCode::kEpisodeDone, "ACTION after DONE; send RESET to start a new episode");
            return episodes;
          }
          sim::Action action;
          try {
            json body = json::object();
            if (msg->header.contains("action")) {
              body = msg->header["action"];
            } else {
              for (const char* key : {"waypoints", "controls"}) {
                if (msg->header.contains(key)) body[key] = msg->header[key];
              }
            }
            action = sim::Action::from_json(body);
          } catch (const Error& e) {
            send_error(e.code(), std::string("ACTION: ") + e.what());
            return episodes;
          }
          const auto r = env->step(action);
          trace->write(r);
          if (r.done) {
            const auto report = env->score_report();
            send_message(transport, observation_message(MessageKind::kDone, r, &report));
          } else {
            send_message(transport, observation_message(MessageKind::kObs, r, nullptr));
          }
          break;
        }
        case MessageKind::kScore: {
          json report = env && env->started() ? env->score_report() : json(nullptr);
          send_message(transport, {MessageKind::kScore, {{"report", report}}, {}});
          break;
        }
        default:
          send_error(ErrorCode::kProtocol, std::string("unexpected ") + to_string(msg->kind) + " from client");
          return episodes;
      }
    }
  } catch (const Error& e) {
    send_error(e.code(), e.what());
  } catch (const std::exception& e) {
    send_error(ErrorCode::kInvariantViolation, e.what());
  }
  return episodes;
}

ListenAddress ListenAddress::parse(const std::string& s) {
  ListenAddress a;
  if (s.rfind("pipe:", 0) == 0) {
    a.pipe = true;
    a.path = s.substr(5);
    require(!a.path.empty(), ErrorCode::kConfig, "listen: empty pipe path");
    return a;
  }
  const auto colon = s.rfind(':');
  require(colon != std::string::npos && colon + 1 < s.size(), ErrorCode::kConfig,
          "listen: expected host:port or pipe:/path, got '" + s + "'");
  a.host = colon == 0 ? "127.0.0.1" : s.substr(0, colon);
  try {
    std::size_t used = 0;
    a.port = std::stoi(s.substr(colon + 1), &used);
    require(used == s.size() - colon - 1, ErrorCode::kConfig, "listen: bad port in '" + s + "'");
  } catch (const std::logic_error&) {
    fail(ErrorCode::kConfig, "listen: bad port in '" + s + "'");
  }
  require(a.port >= 0 && a.port <= 65535, ErrorCode::kConfig, "listen: port out of range in '" + s + "'");
  return a;
}

namespace {

sockaddr_in resolve_ipv4(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res);
  require(rc == 0 && res != nullptr, ErrorCode::kConfig,
          "cannot resolve host '" + host + "': " + (rc ? ::gai_strerror(rc) : "no address"));
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  return addr;
}

void ensure_fifo(const std::string& path) {
  struct stat st{};
  if (::stat(path.c_str(), &st) == 0) {
    require(S_ISFIFO(st.st_mode), ErrorCode::kIo, path + " exists and is not a FIFO");
    return;
  }
  if (::mkfifo(path.c_str(), 0600) != 0 && errno != EEXIST) io_error("mkfifo " + path);
}

}  // namespace

Server::Server(std::shared_ptr<const ServerContext> context, ServeOptions options)
    : context_(std::move(context)), options_(std::move(options)), listen_(ListenAddress::parse(options_.listen)) {
  if (listen_.pipe) {
    ensure_fifo(listen_.path + ".c2s");
    ensure_fifo(listen_.path + ".s2c");
    return;
  }
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) io_error("socket");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  auto addr = resolve_ipv4(listen_.host, listen_.port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string what = "bind " + options_.listen + ": " + errno_text();
    ::close(listen_fd_);
    fail(ErrorCode::kIo, what);
  }
  if (::listen(listen_fd_, 16) != 0) io_error("listen");
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  listen_.port = ntohs(addr.sin_port);
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof(buf));
  listen_.host = buf;
}

Server::~Server() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

std::string Server::address() const {
  if (listen_.pipe) return "pipe:" + listen_.path;
  return listen_.host + ":" + std::to_string(listen_.port);
}

void Server::run() {
  if (listen_.pipe) {
    run_pipe();
  } else {
    run_tcp();
  }
}

void Server::run_tcp() {
  std::vector<std::thread> sessions;
  int accepted = 0;
  while (!stop_ && (options_.max_sessions == 0 || accepted < options_.max_sessions)) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc < 0 && errno != EINTR) io_error("poll");
    if (rc <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) continue;
      io_error("accept");
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    const int id = accepted++;
    sessions.emplace_back([fd, id, ctx = context_] {
      FdTransport t(fd, fd, true);
      run_session(t, *ctx, id);
    });
  }
  for (auto& t : sessions) t.join();
}

void Server::run_pipe() {
  const std::string c2s = listen_.path + ".c2s", s2c = listen_.path + ".s2c";
  int served = 0;
  while (!stop_ && (options_.max_sessions == 0 || served < options_.max_sessions)) {
    // Non-blocking open for writing fails with ENXIO until a client holds the
    // read end, which keeps the loop responsive to stop().
    const int wfd = ::open(s2c.c_str(), O_WRONLY | O_NONBLOCK | O_CLOEXEC);
    if (wfd < 0) {
      if (errno != ENXIO && errno != EINTR) io_error("open " + s2c);
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      continue;
    }
    ::fcntl(wfd, F_SETFL, ::fcntl(wfd, F_GETFL) & ~O_NONBLOCK);
    const int rfd = ::open(c2s.c_str(), O_RDONLY | O_CLOEXEC);
    if (rfd < 0) {
      ::close(wfd);
      io_error("open " + c2s);
    }
    FdTransport t(rfd, wfd, true);
    run_session(t, *context_, served++);
  }
}

Client Client::connect_tcp(const std::string& address) {
  const auto a = ListenAddress::parse(address);
  require(!a.pipe, ErrorCode::kConfig, "connect_tcp: expected host:port");
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) io_error("socket");
  auto addr = resolve_ipv4(a.host, a.port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string what = "connect " + address + ": " + errno_text();
    ::close(fd);
    fail(ErrorCode::kIo, what);
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Client(std::make_unique<FdTransport>(fd, fd, true));
}

Client Client::connect_pipe(const std::string& path) {
  const int rfd = ::open((path + ".s2c").c_str(), O_RDONLY | O_CLOEXEC);
  if (rfd < 0) io_error("open " + path + ".s2c");
  const int wfd = ::open((path + ".c2s").c_str(), O_WRONLY | O_CLOEXEC);
  if (wfd < 0) {
    ::close(rfd);
    io_error("open " + path + ".c2s");
  }
  return Client(std::make_unique<FdTransport>(rfd, wfd, true));
}

Client::Client(std::unique_ptr<Transport> transport) : transport_(std::move(transport)) {}

std::optional<Message> Client::exchange(const Message& msg) {
  send_message(*transport_, msg);
  return receive_message(*transport_);
}

Message Client::expect_reply(const Message& msg) {
  auto reply = exchange(msg);
  require(reply.has_value(), ErrorCode::kProtocol, "server closed the connection");
  if (reply->kind == MessageKind::kError) {
    const auto code = reply->header.value("code", std::string("protocol"));
    fail(code == "version_mismatch" ? ErrorCode::kVersionMismatch : ErrorCode::kProtocol,
         "server error (" + code + "): " + reply->header.value("message", std::string()));
  }
  if (reply->kind == MessageKind::kObs || reply->kind == MessageKind::kDone) validate_image_table(*reply);
  return std::move(*reply);
}

json Client::hello(int version) {
  return expect_reply({MessageKind::kHello, {{"version", version}}, {}}).header;
}

Message Client::reset(std::optional<std::uint64_t> seed) {
  json h = json::object();
  if (seed) h["seed"] = *seed;
  return expect_reply({MessageKind::kReset, h, {}});
}

Message Client::step(const sim::Action& action) {
  return expect_reply({MessageKind::kAction, {{"action", action.to_json()}}, {}});
}

json Client::score() { return expect_reply({MessageKind::kScore, json::object(), {}}).header.at("report"); }

}  // namespace hugsim::bridge
