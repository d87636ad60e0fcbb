#pragma once

#include <cstdint>
#include <string_view>

namespace lunasim::sim {

// FNV-1a, 64 bit. Stable across platforms; used for event-log digests,
// RNG label keys, and metrics-log checksums.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  constexpr void add_byte(std::uint8_t b) {
    state_ ^= b;
    state_ *= kPrime;
  }

  constexpr void add_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) add_byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  constexpr void add(std::string_view s) {
    for (char c : s) add_byte(static_cast<std::uint8_t>(c));
  }

  constexpr std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

constexpr std::uint64_t fnv1a64(std::string_view s) {
  Fnv1a64 h;
  h.add(s);
  return h.value();
}

}  // namespace lunasim::sim
