#include "hugsim/bridge/protocol.hpp"

#include <cerrno>
#include <cstring>

#include <sys/socket.h>
#include <sys/stat.h>
#include <unistd.h>

#include "hugsim/core/error.hpp"

namespace hugsim::bridge {

namespace {

constexpr const char* kKindNames[] = {"HELLO", "RESET", "OBS", "ACTION", "SCORE", "DONE", "ERROR"};

[[noreturn]] void protocol_error(const std::string& what) { fail(ErrorCode::kProtocol, what); }

}  // namespace

const char* to_string(MessageKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<MessageKind> kind_from_string(const std::string& s) {
  for (int i = 0; i < 7; ++i) {
    if (s == kKindNames[i]) return static_cast<MessageKind>(i);
  }
  return std::nullopt;
}

std::vector<std::uint8_t> encode(const Message& msg) {
  nlohmann::json header = msg.header.is_object() ? msg.header : nlohmann::json::object();
  header["kind"] = to_string(msg.kind);
  header["payload_bytes"] = msg.payload.size();
  const std::string text = header.dump();
  require(text.size() <= kMaxHeaderBytes, ErrorCode::kProtocol, "encode: header exceeds the size limit");
  std::vector<std::uint8_t> out(4 + text.size() + msg.payload.size());
  const auto n = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>((n >> (8 * i)) & 0xFF);
  std::memcpy(out.data() + 4, text.data(), text.size());
  if (!msg.payload.empty()) std::memcpy(out.data() + 4 + text.size(), msg.payload.data(), msg.payload.size());
  return out;
}

std::uint64_t declared_payload_bytes(const nlohmann::json& header) {
  const auto it = header.find("payload_bytes");
  if (it == header.end()) protocol_error("header: missing payload_bytes");
  if (!it->is_number_unsigned()) protocol_error("header: payload_bytes must be a non-negative integer");
  const auto n = it->get<std::uint64_t>();
  if (n > kMaxPayloadBytes) protocol_error("header: payload_bytes " + std::to_string(n) + " exceeds the limit");
  return n;
}

Message message_from_parts(const std::string& header_text, std::vector<std::uint8_t> payload) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("header: invalid JSON: ") + e.what());
  }
  if (!header.is_object()) protocol_error("header: expected a JSON object");
  const auto kind = header.find("kind");
  if (kind == header.end() || !kind->is_string()) protocol_error("header: missing kind");
  const auto k = kind_from_string(kind->get<std::string>());
  if (!k) protocol_error("header: unknown kind '" + kind->get<std::string>() + "'");
  const auto expected = declared_payload_bytes(header);
  if (expected != payload.size()) {
    protocol_error("payload length mismatch: header declares " + std::to_string(expected) + " bytes, received " +
                   std::to_string(payload.size()));
  }
  return {*k, std::move(header), std::move(payload)};
}

Message decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) protocol_error("frame: truncated length prefix");
  const std::uint32_t n = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  if (n > kMaxHeaderBytes) protocol_error("frame: header length " + std::to_string(n) + " exceeds the limit");
  if (bytes.size() - 4 < n) protocol_error("frame: truncated header");
  const std::string text(reinterpret_cast<const char*>(bytes.data()) + 4, n);
  return message_from_parts(text, std::vector<std::uint8_t>(bytes.begin() + 4 + n, bytes.end()));
}

void validate_image_table(const Message& msg) {
  const auto it = msg.header.find("images");
  if (it == msg.header.end()) {
    require(msg.payload.empty(), ErrorCode::kShapeMismatch, "images: payload present without an image table");
    return;
  }
  require(it->is_array(), ErrorCode::kShapeMismatch, "images: expected an array");
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const auto& im = (*it)[i];
    const std::string p = "images[" + std::to_string(i) + "]";
    try {
      const auto w = im.at("width").get<std::uint64_t>(), h = im.at("height").get<std::uint64_t>();
      const auto c = im.at("channels").get<std::uint64_t>(), b = im.at("bytes").get<std::uint64_t>();
      const auto o = im.at("offset").get<std::uint64_t>();
      require(w * h * c == b, ErrorCode::kShapeMismatch,
              p + ": shape " + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) +
                  " needs " + std::to_string(w * h * c) + " bytes, table says " + std::to_string(b));
      require(o == offset, ErrorCode::kShapeMismatch,
              p + ": offset " + std::to_string(o) + ", expected " + std::to_string(offset));
      offset += b;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kShapeMismatch, p + ": " + e.what());
    }
  }
  require(offset == msg.payload.size(), ErrorCode::kShapeMismatch,
          "images: table covers " + std::to_string(offset) + " bytes, payload has " +
              std::to_string(msg.payload.size()));
}

FdTransport::FdTransport(int read_fd, int write_fd, bool owns)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}

FdTransport::~FdTransport() {
  if (!owns_) return;
  ::close(read_fd_);
  if (write_fd_ != read_fd_) ::close(write_fd_);
}

void FdTransport::write_all(const std::uint8_t* data, std::size_t n) {
  struct stat st{};
  const bool socket = ::fstat(write_fd_, &st) == 0 && S_ISSOCK(st.st_mode);
  while (n > 0) {
    const ssize_t w = socket ? ::send(write_fd_, data, n, MSG_NOSIGNAL) : ::write(write_fd_, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::kIo, std::string("transport write failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

std::size_t FdTransport::read_up_to(std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::read(read_fd_, data + got, n - got);
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::kIo, std::string("transport read failed: ") + std::strerror(errno));
    }
    if (r == 0) break;
    got += static_cast<std::size_t>(r);
  }
  return got;
}

void send_message(Transport& t, const Message& msg) {
  const auto bytes = encode(msg);
  t.write_all(bytes.data(), bytes.size());
}

std::optional<Message> receive_message(Transport& t) {
  std::uint8_t prefix[4];
  const auto got = t.read_up_to(prefix, 4);
  if (got == 0) return std::nullopt;
  if (got < 4) protocol_error("frame: stream ended inside the length prefix");
  const std::uint32_t n = static_cast<std::uint32_t>(prefix[0]) | (static_cast<std::uint32_t>(prefix[1]) << 8) |
                          (static_cast<std::uint32_t>(prefix[2]) << 16) | (static_cast<std::uint32_t>(prefix[3]) << 24);
  if (n > kMaxHeaderBytes) protocol_error("frame: header length " + std::to_string(n) + " exceeds the limit");
  std::string text(n, '\0');
  const auto hgot = t.read_up_to(reinterpret_cast<std::uint8_t*>(text.data()), n);
  if (hgot < n) {
    protocol_error("frame: header declares " + std::to_string(n) + " bytes, received " + std::to_string(hgot));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("header: invalid JSON: ") + e.what());
  }
  if (!header.is_object()) protocol_error("header: expected a JSON object");
  const auto len = static_cast<std::size_t>(declared_payload_bytes(header));
  std::vector<std::uint8_t> payload(len);
  const auto pgot = t.read_up_to(payload.data(), len);
  if (pgot < len) {
    protocol_error("payload length mismatch: header declares " + std::to_string(len) + " bytes, received " +
                   std::to_string(pgot));
  }
  return message_from_parts(text, std::move(payload));
}

}  // namespace hugsim::bridge
