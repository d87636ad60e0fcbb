#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunasim/sim/digest.hpp"

namespace lunasim::scenario {

inline constexpr std::string_view kArtifactVersion = "lunasim-0.1.0";
inline constexpr int kMetricsFormat = 1;

// Append-only line-delimited JSON log. The running checksum is FNV-1a over
// every line's bytes followed by '\n'; the summary record stores the
// checksum of the lines before it.
class MetricsLog {
 public:
  void append(const nlohmann::json& record);
  const std::vector<std::string>& lines() const { return lines_; }
  std::uint64_t checksum() const { return hash_.value(); }
  // Mirrors every appended line to `out` (flushed per line).
  void set_sink(std::ostream* out) { sink_ = out; }

 private:
  std::vector<std::string> lines_;
  sim::Fnv1a64 hash_;
  std::ostream* sink_ = nullptr;
};

std::string checksum_hex(std::uint64_t v);
std::uint64_t checksum_of(const std::vector<std::string>& lines);
std::vector<std::string> read_log_lines(const std::filesystem::path& file);

}  // namespace lunasim::scenario
