#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lunasim::comms {

class CommsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::string_view kGlobalNamespace = "global";

// "<namespace>/<name>"; both parts non-empty, no further slashes in the
// namespace.
struct Topic {
  std::string ns;
  std::string name;

  std::string path() const { return ns + "/" + name; }
  static Topic parse(std::string_view path);
  bool operator==(const Topic&) const = default;
};

// Patterns are an exact path, "*/<name>" or "<ns>/*".
bool valid_pattern(std::string_view pattern);
bool pattern_matches(std::string_view pattern, std::string_view topic_path);

// Minimum spacing between publications of a topic name on one node.
struct RateBudget {
  std::map<std::string, double, std::less<>> min_interval_s{{"map", 2.0}, {"scan", 1.0}, {"odom", 0.2}};
  std::optional<double> interval_for(std::string_view topic_name) const;
};

}  // namespace lunasim::comms
