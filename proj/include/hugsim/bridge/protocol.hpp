#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace hugsim::bridge {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;
inline constexpr std::uint64_t kMaxPayloadBytes = 1ull << 28;

enum class MessageKind { kHello, kReset, kObs, kAction, kScore, kDone, kError };

const char* to_string(MessageKind kind);
std::optional<MessageKind> kind_from_string(const std::string& s);

/// One frame. `header` is a JSON object; encode() sets its "kind" and
/// "payload_bytes" fields.
struct Message {
  MessageKind kind = MessageKind::kHello;
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::uint8_t> payload;
};

/// Frame layout: u32 little-endian header length, UTF-8 JSON header, raw
/// payload of exactly header["payload_bytes"] bytes.
std::vector<std::uint8_t> encode(const Message& msg);

/// Throws kProtocol on any malformed frame (never crashes on arbitrary input).
Message decode(const std::vector<std::uint8_t>& bytes);

/// Header fields validated on every frame; throws kProtocol.
Message message_from_parts(const std::string& header_text, std::vector<std::uint8_t> payload);
std::uint64_t declared_payload_bytes(const nlohmann::json& header);

/// Checks the "images" table of OBS/DONE headers against the payload:
/// width * height * channels == bytes, offsets contiguous in rig order, total
/// equals the payload. Throws kShapeMismatch.
void validate_image_table(const Message& msg);

/// Byte stream endpoint.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write_all(const std::uint8_t* data, std::size_t n) = 0;
  /// Reads until n bytes arrived or the stream ended; returns the count.
  virtual std::size_t read_up_to(std::uint8_t* data, std::size_t n) = 0;
};

/// File-descriptor transport (sockets, FIFOs, socketpairs).
class FdTransport final : public Transport {
 public:
  FdTransport(int read_fd, int write_fd, bool owns);
  ~FdTransport() override;
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;

  void write_all(const std::uint8_t* data, std::size_t n) override;
  std::size_t read_up_to(std::uint8_t* data, std::size_t n) override;

 private:
  int read_fd_, write_fd_;
  bool owns_;
};

void send_message(Transport& t, const Message& msg);
/// nullopt on a clean end of stream between frames; kProtocol when the stream
/// ends inside a frame or the frame is malformed.
std::optional<Message> receive_message(Transport& t);

}  // namespace hugsim::bridge
