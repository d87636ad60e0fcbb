#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace lunasim::sim {

// Counter-based stream keyed by (root seed, label): the key is a SplitMix64
// finalisation of the seed mixed with the label hash and every draw is the
// finalised value of an incrementing counter. Two streams with the same key
// produce identical sequences regardless of what other streams exist.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::string_view label);

  const std::string& label() const { return label_; }
  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal(double mean = 0.0, double sigma = 1.0);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::string label_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lunasim::sim
