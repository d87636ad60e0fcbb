#include "lunasim/comms/topic.hpp"

namespace lunasim::comms {

Topic Topic::parse(std::string_view path) {
  const auto slash = path.find('/');
  if (slash == std::string_view::npos || slash == 0 || slash + 1 >= path.size()) {
    throw CommsError("topic must look like <ns>/<name>: " + std::string(path));
  }
  Topic t{std::string(path.substr(0, slash)), std::string(path.substr(slash + 1))};
  if (t.ns == "*" || t.name == "*") throw CommsError("wildcards are not allowed in topics");
  return t;
}

bool valid_pattern(std::string_view pattern) {
  const auto slash = pattern.find('/');
  if (slash == std::string_view::npos || slash == 0 || slash + 1 >= pattern.size()) return false;
  const auto ns = pattern.substr(0, slash);
  const auto name = pattern.substr(slash + 1);
  return !(ns == "*" && name == "*");
}

bool pattern_matches(std::string_view pattern, std::string_view topic_path) {
  const auto ps = pattern.find('/');
  const auto ts = topic_path.find('/');
  if (ps == std::string_view::npos || ts == std::string_view::npos) return false;
  const auto pns = pattern.substr(0, ps), pname = pattern.substr(ps + 1);
  const auto tns = topic_path.substr(0, ts), tname = topic_path.substr(ts + 1);
  return (pns == "*" || pns == tns) && (pname == "*" || pname == tname);
}

std::optional<double> RateBudget::interval_for(std::string_view topic_name) const {
  const auto it = min_interval_s.find(topic_name);
  if (it == min_interval_s.end()) return std::nullopt;
  return it->second;
}

}  // namespace lunasim::comms
