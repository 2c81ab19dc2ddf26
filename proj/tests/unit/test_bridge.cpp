#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <sys/socket.h>
#include <unistd.h>

#include "hugsim/bridge/protocol.hpp"
#include "hugsim/bridge/server.hpp"
#include "hugsim/core/error.hpp"
#include "sim_fixtures.hpp"

using namespace hugsim;
using namespace hugsim::bridge;
using nlohmann::json;

namespace {

std::shared_ptr<const ServerContext> make_context(const json& scenario, std::filesystem::path trace_dir = {}) {
  auto ctx = ServerContext::from_config(sim::ScenarioConfig::from_json(scenario));
  ctx.trace_dir = std::move(trace_dir);
  return std::make_shared<const ServerContext>(std::move(ctx));
}

json small_rig() { return testutil::straight_scenario(2, 32); }

std::string fnv1a_hex(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// In-process session over a socketpair; the server side runs on a thread.
struct Loopback {
  explicit Loopback(std::shared_ptr<const ServerContext> ctx) {
    int fds[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    server = std::thread([fd = fds[0], ctx] {
      FdTransport t(fd, fd, true);
      run_session(t, *ctx);
    });
    client_fd = fds[1];
    client = std::make_unique<FdTransport>(fds[1], fds[1], true);
  }
  ~Loopback() {
    client.reset();  // closes the client end so the session returns
    server.join();
  }
  Message roundtrip(const Message& m) {
    send_message(*client, m);
    auto r = receive_message(*client);
    REQUIRE(r.has_value());
    return std::move(*r);
  }
  bool closed() { return !receive_message(*client).has_value(); }

  std::thread server;
  int client_fd = -1;
  std::unique_ptr<FdTransport> client;
};

std::vector<std::uint8_t> raw_frame(const std::string& header, const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out(4);
  const auto n = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(n >> (8 * i));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace

TEST_CASE("framing: encode and decode are inverse for every kind") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 7; ++k) {
    for (std::size_t len : {0u, 1u, 77u, 4096u}) {
      Message m;
      m.kind = static_cast<MessageKind>(k);
      m.header = {{"step", k}, {"nested", {{"a", {1, 2, 3}}, {"s", "ü"}}}};
      m.payload.resize(len);
      for (auto& b : m.payload) b = static_cast<std::uint8_t>(rng());
      const auto bytes = encode(m);
      const auto d = decode(bytes);
      CHECK(d.kind == m.kind);
      CHECK(d.payload == m.payload);
      CHECK(d.header.at("nested") == m.header.at("nested"));
      CHECK(d.header.at("payload_bytes") == len);
      CHECK(encode(d) == bytes);
    }
  }
  CHECK(kind_from_string("OBS") == MessageKind::kObs);
  CHECK(!kind_from_string("obs").has_value());
}

TEST_CASE("framing: a zero-payload RESET is the prefix plus the header") {
  Message m{MessageKind::kReset, json::object(), {}};
  const auto bytes = encode(m);
  const std::string header = R"({"kind":"RESET","payload_bytes":0})";
  CHECK(bytes.size() == 4 + header.size());
  CHECK(std::string(bytes.begin() + 4, bytes.end()) == header);
  CHECK(bytes[0] == header.size());
  CHECK(bytes[1] == 0);
}

TEST_CASE("framing: payload length mismatch names both sizes") {
  const auto frame = raw_frame(R"({"kind":"ACTION","payload_bytes":10})", std::vector<std::uint8_t>(3));
  try {
    decode(frame);
    FAIL("expected a protocol error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocol);
    const std::string what = e.what();
    CHECK(what.find("10") != std::string::npos);
    CHECK(what.find("3") != std::string::npos);
  }
}

TEST_CASE("framing: malformed headers are protocol errors") {
  for (const std::string h : {"", "{", "[]", R"({"kind":"NOPE","payload_bytes":0})", R"({"payload_bytes":0})",
                              R"({"kind":"OBS"})", R"({"kind":"OBS","payload_bytes":-1})",
                              R"({"kind":"OBS","payload_bytes":"4"})", R"({"kind":7,"payload_bytes":0})"}) {
    CAPTURE(h);
    CHECK_THROWS_AS(decode(raw_frame(h, {})), Error);
  }
  CHECK_THROWS_AS(decode({1, 2}), Error);
  CHECK_THROWS_AS(decode({0xff, 0xff, 0xff, 0x7f, '{'}), Error);
}

TEST_CASE("framing: fuzzed input never crashes decode") {
  std::mt19937_64 rng(99);
  const auto valid = encode({MessageKind::kObs, {{"images", json::array()}}, std::vector<std::uint8_t>(16, 7)});
  int ok = 0, rejected = 0;
  for (int i = 0; i < 20000; ++i) {
    std::vector<std::uint8_t> bytes;
    switch (i % 4) {
      case 0:  // random bytes
        bytes.resize(rng() % 64);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
        break;
      case 1:  // bit flips in a valid frame
        bytes = valid;
        for (int f = 0; f < 1 + static_cast<int>(rng() % 4); ++f) bytes[rng() % bytes.size()] ^= 1u << (rng() % 8);
        break;
      case 2:  // truncation or extension
        bytes = valid;
        bytes.resize(rng() % (valid.size() + 8));
        break;
      default: {  // random JSON-ish headers
        static const char* parts[] = {"{", "}", "\"kind\"", ":", "\"OBS\"", "\"RESET\"", ",", "\"payload_bytes\"",
                                      "0", "16", "1e3", "null", "[", "]", "true", "\"\\u0000\""};
        std::string h;
        for (int p = 0; p < 1 + static_cast<int>(rng() % 10); ++p) h += parts[rng() % 16];
        bytes = raw_frame(h, std::vector<std::uint8_t>(rng() % 20));
      }
    }
    try {
      const auto m = decode(bytes);
      CHECK(m.payload.size() == declared_payload_bytes(m.header));
      ++ok;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kProtocol);
      ++rejected;
    }
  }
  CHECK(ok > 0);
  CHECK(rejected > 0);
}

TEST_CASE("framing: image table validation") {
  Message m{MessageKind::kObs, {}, std::vector<std::uint8_t>(2 * 3 * 3 + 1 * 1 * 3)};
  m.header["images"] = {{{"width", 3}, {"height", 2}, {"channels", 3}, {"offset", 0}, {"bytes", 18}},
                        {{"width", 1}, {"height", 1}, {"channels", 3}, {"offset", 18}, {"bytes", 3}}};
  CHECK_NOTHROW(validate_image_table(m));
  m.header["images"][1]["bytes"] = 4;
  CHECK_THROWS_AS(validate_image_table(m), Error);
  m.header["images"][1]["bytes"] = 3;
  m.payload.push_back(0);
  CHECK_THROWS_AS(validate_image_table(m), Error);
}

TEST_CASE("session: version mismatch answers ERROR and closes") {
  Loopback lb(make_context(small_rig()));
  const auto r = lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion + 1}}, {}});
  CHECK(r.kind == MessageKind::kError);
  CHECK(r.header.at("code") == "version_mismatch");
  CHECK(lb.closed());
}

TEST_CASE("session: the first message must be HELLO") {
  Loopback lb(make_context(small_rig()));
  const auto r = lb.roundtrip({MessageKind::kReset, json::object(), {}});
  CHECK(r.kind == MessageKind::kError);
  CHECK(lb.closed());
}

TEST_CASE("session: truncated payload answers ERROR naming expected and received bytes") {
  Loopback lb(make_context(small_rig()));
  CHECK(lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}}).kind == MessageKind::kHello);
  const auto frame = raw_frame(R"({"kind":"ACTION","payload_bytes":100})", std::vector<std::uint8_t>(10));
  lb.client->write_all(frame.data(), frame.size());
  ::shutdown(lb.client_fd, SHUT_WR);  // stream ends inside the payload
  const auto r = receive_message(*lb.client);
  REQUIRE(r.has_value());
  CHECK(r->kind == MessageKind::kError);
  const std::string msg = r->header.at("message");
  CHECK(msg.find("100") != std::string::npos);
  CHECK(msg.find("10") != std::string::npos);
}

TEST_CASE("session: malformed ACTION and stray payloads close the session") {
  {
    Loopback lb(make_context(small_rig()));
    lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}});
    CHECK(lb.roundtrip({MessageKind::kReset, json::object(), {}}).kind == MessageKind::kObs);
    const auto r = lb.roundtrip({MessageKind::kAction, {{"action", {{"waypoints", {{1, 2}}}}}}, {}});
    CHECK(r.kind == MessageKind::kError);
    CHECK(r.header.at("code") == "shape_mismatch");
    CHECK(lb.closed());
  }
  {
    Loopback lb(make_context(small_rig()));
    lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}});
    const auto r = lb.roundtrip({MessageKind::kAction, {{"controls", {{0, 0}}}}, {}});
    CHECK(r.kind == MessageKind::kError);  // before RESET
    CHECK(lb.closed());
  }
  {
    Loopback lb(make_context(small_rig()));
    lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}});
    const auto r = lb.roundtrip({MessageKind::kReset, json::object(), std::vector<std::uint8_t>(5)});
    CHECK(r.kind == MessageKind::kError);
    CHECK(r.header.at("code") == "shape_mismatch");
    CHECK(lb.closed());
  }
}

TEST_CASE("session: fuzzed client frames never crash the server") {
  const auto ctx = make_context(small_rig());
  std::mt19937_64 rng(7);
  for (int i = 0; i < 60; ++i) {
    Loopback lb(ctx);
    if (i % 2) lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}});
    std::vector<std::uint8_t> bytes(4 + rng() % 80);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    bytes[0] = static_cast<std::uint8_t>(bytes.size() - 4);
    bytes[1] = bytes[2] = bytes[3] = 0;
    lb.client->write_all(bytes.data(), bytes.size());
    const auto r = receive_message(*lb.client);
    REQUIRE(r.has_value());
    CHECK(r->kind == MessageKind::kError);
    CHECK(lb.closed());
  }
}

TEST_CASE("session: action after DONE is rejected") {
  auto j = small_rig();
  j["horizon"] = 0.3;
  Loopback lb(make_context(j));
  lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}});
  lb.roundtrip({MessageKind::kReset, json::object(), {}});
  Message last;
  for (int i = 0; i < 3; ++i) last = lb.roundtrip({MessageKind::kAction, {{"controls", {{0, 0}}}}, {}});
  CHECK(last.kind == MessageKind::kDone);
  CHECK(last.header.at("report").contains("hd_score"));
  const auto score = lb.roundtrip({MessageKind::kScore, json::object(), {}});
  CHECK(score.kind == MessageKind::kScore);
  CHECK(score.header.at("report") == last.header.at("report"));
  const auto r = lb.roundtrip({MessageKind::kAction, {{"controls", {{0, 0}}}}, {}});
  CHECK(r.kind == MessageKind::kError);
  CHECK(r.header.at("code") == "episode_done");
  CHECK(lb.closed());
}

TEST_CASE("session: double reset starts a fresh episode") {
  Loopback lb(make_context(small_rig()));
  lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}});
  const auto first = encode(lb.roundtrip({MessageKind::kReset, {{"seed", 4}}, {}}));
  lb.roundtrip({MessageKind::kAction, {{"controls", {{0.2, 1}}}}, {}});
  const auto second = encode(lb.roundtrip({MessageKind::kReset, {{"seed", 4}}, {}}));
  CHECK(first == second);
}

TEST_CASE("end to end: straight waypoints over TCP complete the route") {
  const auto dir = std::filesystem::temp_directory_path() / "hugsim_test_bridge_traces";
  std::filesystem::remove_all(dir);
  Server server(make_context(small_rig(), dir), {"127.0.0.1:0", 1});
  std::thread th([&] { server.run(); });

  auto client = Client::connect_tcp(server.address());
  const auto hello = client.hello();
  CHECK(hello.at("version") == kProtocolVersion);
  REQUIRE(hello.at("cameras").size() == 2);
  CHECK(hello.at("cameras")[0].at("width") == 32);

  auto obs = client.reset();
  CHECK(obs.kind == MessageKind::kObs);
  std::vector<std::string> hashes;
  int actions = 0;
  while (obs.kind == MessageKind::kObs || obs.kind == MessageKind::kDone) {
    const auto& images = obs.header.at("images");
    REQUIRE(images.size() == 2);
    for (const auto& im : images) {
      CHECK(im.at("bytes") == 32 * 32 * 3);
      const std::string h = fnv1a_hex(obs.payload.data() + im.at("offset").get<std::size_t>(), im.at("bytes"));
      CHECK(h == im.at("hash"));
      hashes.push_back(h);
    }
    if (obs.kind == MessageKind::kDone) break;
    const auto& ego = obs.header.at("record").at("ego");
    const sim::EgoState e{ego.at("x"), ego.at("z"), ego.at("theta"), ego.at("v")};
    obs = client.step({testutil::follow_line(e, 5.0), {}});
    ++actions;
  }
  REQUIRE(obs.kind == MessageKind::kDone);
  CHECK(obs.header.at("record").at("reason") == "route_complete");
  CHECK(obs.header.at("report").at("R_c").get<double>() == 1.0);
  CHECK(obs.header.at("report").at("steps").get<int>() == actions + 1);
  client = Client(nullptr);  // drop the connection
  th.join();

  // The server-side trace logs the same observation hashes.
  std::ifstream in(dir / "session-0-episode-0.jsonl");
  std::string line;
  std::getline(in, line);
  CHECK(json::parse(line).at("type") == "header");
  std::vector<std::string> logged;
  while (std::getline(in, line)) {
    const auto rec = json::parse(line);
    for (const auto& h : rec.at("obs")) logged.push_back(h);
  }
  CHECK(logged.size() == hashes.size());
  CHECK(logged == hashes);
}

TEST_CASE("end to end: identical action streams give identical observation bytes") {
  const auto ctx = make_context(testutil::attack_scenario(3, 1.0));
  auto run = [&] {
    Loopback lb(ctx);
    std::vector<std::uint8_t> stream;
    auto take = [&](const Message& m) {
      const auto b = encode(m);
      stream.insert(stream.end(), b.begin(), b.end());
      return m;
    };
    take(lb.roundtrip({MessageKind::kHello, {{"version", kProtocolVersion}}, {}}));
    auto m = take(lb.roundtrip({MessageKind::kReset, {{"seed", 11}}, {}}));
    while (m.kind == MessageKind::kObs) m = take(lb.roundtrip({MessageKind::kAction, {{"controls", {{0.02, 0.5}}}}, {}}));
    CHECK(m.kind == MessageKind::kDone);
    return stream;
  };
  CHECK(run() == run());
}

TEST_CASE("server: concurrent TCP sessions and the FIFO transport") {
  const auto ctx = make_context(small_rig());
  {
    Server server(ctx, {"127.0.0.1:0", 2});
    std::thread th([&] { server.run(); });
    auto drive = [&](double* rc) {
      auto c = Client::connect_tcp(server.address());
      c.hello();
      auto m = c.reset();
      while (m.kind != MessageKind::kDone) m = c.step({{}, {{0, 0}}});
      *rc = m.header.at("report").at("R_c");
    };
    double a = 0, b = 0;
    std::thread t1(drive, &a), t2(drive, &b);
    t1.join();
    t2.join();
    th.join();
    CHECK(a == 1.0);
    CHECK(b == 1.0);
  }
  {
    const auto base = std::filesystem::temp_directory_path() / "hugsim_test_fifo";
    std::filesystem::remove(base.string() + ".c2s");
    std::filesystem::remove(base.string() + ".s2c");
    Server server(ctx, {"pipe:" + base.string(), 1});
    std::thread th([&] { server.run(); });
    {
      auto c = Client::connect_pipe(base.string());
      CHECK(c.hello().at("scenario") == "straight");
      auto m = c.reset();
      for (int i = 0; i < 5; ++i) m = c.step({{}, {{0, 0}}});
      CHECK(m.kind == MessageKind::kObs);
      CHECK(m.header.at("record").at("step") == 5);
    }
    th.join();
  }
  {
    Server server(ctx, {"127.0.0.1:0", 0});
    std::thread th([&] { server.run(); });
    server.stop();
    th.join();  // returns without any client
  }
}

TEST_CASE("listen address parsing") {
  const auto t = ListenAddress::parse("0.0.0.0:7450");
  CHECK(!t.pipe);
  CHECK(t.host == "0.0.0.0");
  CHECK(t.port == 7450);
  const auto p = ListenAddress::parse("pipe:/tmp/x");
  CHECK(p.pipe);
  CHECK(p.path == "/tmp/x");
  CHECK_THROWS_AS(ListenAddress::parse("nohost"), Error);
  CHECK_THROWS_AS(ListenAddress::parse("h:99999"), Error);
  CHECK_THROWS_AS(ListenAddress::parse("h:12ab"), Error);
  CHECK_THROWS_AS(Client::connect_tcp("127.0.0.1:1"), Error);
}
