#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunasim/ground/ground_station.hpp"

// Operator gateway wire protocol: each message is a 4-byte big-endian
// length followed by that many bytes of UTF-8 JSON, one object per message
// with a "type" field. See docs/protocol.md.
namespace lunasim::ground {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string frame(std::string_view body);

// Incremental splitter for a byte stream. Throws ProtocolError when a
// length prefix exceeds kMaxFrameBytes; the stream cannot resync after that.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  std::optional<std::string> next();
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
};

enum class ClientType : std::uint8_t { kHello, kCommand, kSelect, kPause, kResume, kSetRate };

struct ClientMessage {
  ClientType type = ClientType::kHello;
  Command command;                       // kCommand
  std::optional<std::string> select;     // kSelect, nullopt clears
  std::optional<double> realtime_factor;  // kSetRate
  std::optional<double> snapshot_hz;      // kSetRate
};

// Parses one inbound message body. Throws ProtocolError with a message fit
// for the error reply.
ClientMessage parse_client_message(std::string_view body);
nlohmann::json to_json(const ClientMessage& m);

nlohmann::json hello_message();
nlohmann::json error_message(std::string_view what);
nlohmann::json snapshot_message(nlohmann::json snapshot, std::uint64_t seq);
// JSON Patch (RFC 6902) from `base` to `next`.
nlohmann::json delta_message(const nlohmann::json& base, const nlohmann::json& next, std::uint64_t base_seq,
                             std::uint64_t seq);
// Applies a delta to the state it was computed against.
nlohmann::json apply_delta(const nlohmann::json& state, const nlohmann::json& delta);

}  // namespace lunasim::ground
