#include "lunasim/scenario/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lunasim::scenario {

void MetricsLog::append(const nlohmann::json& record) {
  std::string line = record.dump();
  hash_.add(line);
  hash_.add_byte('\n');
  if (sink_ != nullptr) *sink_ << line << '\n' << std::flush;
  lines_.push_back(std::move(line));
}

std::string checksum_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t checksum_of(const std::vector<std::string>& lines) {
  sim::Fnv1a64 h;
  for (const auto& l : lines) {
    h.add(l);
    h.add_byte('\n');
  }
  return h.value();
}

std::vector<std::string> read_log_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace lunasim::scenario
