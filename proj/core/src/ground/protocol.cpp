#include "lunasim/ground/protocol.hpp"

#include <cmath>

namespace lunasim::ground {

std::string frame(std::string_view body) {
  if (body.size() > kMaxFrameBytes) throw ProtocolError("message too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

void FrameDecoder::feed(std::string_view bytes) { buf_.append(bytes); }

std::optional<std::string> FrameDecoder::next() {
  if (buf_.size() < 4) return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<std::uint8_t>(buf_[static_cast<std::size_t>(i)]);
  if (n > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit");
  if (buf_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string body = buf_.substr(4, n);
  buf_.erase(0, 4 + static_cast<std::size_t>(n));
  return body;
}

namespace {

double number(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ProtocolError(std::string("field '") + key + "' must be finite");
  return v;
}

double number_or(const nlohmann::json& j, const char* key, double fallback) {
  return j.contains(key) ? number(j, key) : fallback;
}

}  // namespace

ClientMessage parse_client_message(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  const auto t = j.find("type");
  if (t == j.end() || !t->is_string()) throw ProtocolError("missing string field 'type'");
  const std::string type = *t;
  ClientMessage m;
  if (type == "hello") {
    m.type = ClientType::kHello;
  } else if (type == "pause") {
    m.type = ClientType::kPause;
  } else if (type == "resume") {
    m.type = ClientType::kResume;
  } else if (type == "set_rate") {
    m.type = ClientType::kSetRate;
    if (j.contains("factor")) {
      m.realtime_factor = number(j, "factor");
      if (*m.realtime_factor <= 0.0) throw ProtocolError("factor must be positive");
    }
    if (j.contains("snapshot_hz")) {
      m.snapshot_hz = number(j, "snapshot_hz");
      if (*m.snapshot_hz <= 0.0 || *m.snapshot_hz > 50.0) throw ProtocolError("snapshot_hz must be in (0, 50]");
    }
    if (!m.realtime_factor && !m.snapshot_hz) throw ProtocolError("set_rate needs 'factor' or 'snapshot_hz'");
  } else if (type == "command") {
    const auto k = j.find("kind");
    if (k == j.end() || !k->is_string()) throw ProtocolError("command needs string field 'kind'");
    const std::string kind = *k;
    if (kind == "select") {
      m.type = ClientType::kSelect;
      const auto n = j.find("name");
      if (n == j.end()) throw ProtocolError("select needs field 'name'");
      if (n->is_string()) m.select = n->get<std::string>();
      else if (!n->is_null()) throw ProtocolError("select name must be a string or null");
      return m;
    }
    const auto ck = command_kind_from_string(kind);
    if (!ck) throw ProtocolError("unknown command kind '" + kind + "'");
    m.type = ClientType::kCommand;
    m.command.kind = *ck;
    switch (*ck) {
      case CommandKind::kTeleop:
        m.command.teleop = {number(j, "v"), number(j, "omega")};
        break;
      case CommandKind::kLights: {
        const auto on = j.find("on");
        if (on == j.end() || !on->is_boolean()) throw ProtocolError("lights needs boolean field 'on'");
        m.command.lights = *on;
        break;
      }
      case CommandKind::kResetOdom:
        m.command.reset = {number(j, "x"), number(j, "y"), number_or(j, "theta", 0.0)};
        break;
      case CommandKind::kReboot:
        break;
      case CommandKind::kNavGoal:
        m.command.goal = {number(j, "x"), number(j, "y"), number_or(j, "tolerance", 0.3)};
        if (m.command.goal.tolerance <= 0.0) throw ProtocolError("tolerance must be positive");
        break;
    }
  } else if (type == "snapshot" || type == "delta" || type == "error") {
    throw ProtocolError("'" + type + "' is a server message");
  } else {
    throw ProtocolError("unknown message type '" + type + "'");
  }
  return m;
}

nlohmann::json to_json(const ClientMessage& m) {
  using nlohmann::json;
  switch (m.type) {
    case ClientType::kHello: return {{"type", "hello"}};
    case ClientType::kPause: return {{"type", "pause"}};
    case ClientType::kResume: return {{"type", "resume"}};
    case ClientType::kSetRate: {
      json j{{"type", "set_rate"}};
      if (m.realtime_factor) j["factor"] = *m.realtime_factor;
      if (m.snapshot_hz) j["snapshot_hz"] = *m.snapshot_hz;
      return j;
    }
    case ClientType::kSelect:
      return {{"type", "command"}, {"kind", "select"}, {"name", m.select ? json(*m.select) : json(nullptr)}};
    case ClientType::kCommand: {
      json j{{"type", "command"}, {"kind", to_string(m.command.kind)}};
      switch (m.command.kind) {
        case CommandKind::kTeleop:
          j["v"] = m.command.teleop.v;
          j["omega"] = m.command.teleop.omega;
          break;
        case CommandKind::kLights: j["on"] = m.command.lights; break;
        case CommandKind::kResetOdom:
          j["x"] = m.command.reset.x;
          j["y"] = m.command.reset.y;
          j["theta"] = m.command.reset.theta;
          break;
        case CommandKind::kReboot: break;
        case CommandKind::kNavGoal:
          j["x"] = m.command.goal.x;
          j["y"] = m.command.goal.y;
          j["tolerance"] = m.command.goal.tolerance;
          break;
      }
      return j;
    }
  }
  return {};
}

nlohmann::json hello_message() {
  return {{"type", "hello"}, {"protocol", kProtocolVersion}, {"server", "lunasim"}};
}

nlohmann::json error_message(std::string_view what) { return {{"type", "error"}, {"message", what}}; }

nlohmann::json snapshot_message(nlohmann::json snapshot, std::uint64_t seq) {
  snapshot["type"] = "snapshot";
  snapshot["seq"] = seq;
  return snapshot;
}

nlohmann::json delta_message(const nlohmann::json& base, const nlohmann::json& next, std::uint64_t base_seq,
                             std::uint64_t seq) {
  return {{"type", "delta"}, {"base", base_seq}, {"seq", seq}, {"patch", nlohmann::json::diff(base, next)}};
}

nlohmann::json apply_delta(const nlohmann::json& state, const nlohmann::json& delta) {
  if (!delta.is_object() || delta.value("type", "") != "delta") throw ProtocolError("not a delta message");
  if (!state.contains("seq") || state["seq"] != delta["base"]) throw ProtocolError("delta base does not match state");
  return state.patch(delta["patch"]);
}

}  // namespace lunasim::ground
