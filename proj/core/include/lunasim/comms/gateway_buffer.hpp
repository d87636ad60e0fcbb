#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <string>

#include "lunasim/bytes.hpp"

namespace lunasim::comms {

enum class Qos : std::uint8_t { kReliable, kBestEffort };

// An envelope held at the gateway on its way to the ground station.
struct HeldEnvelope {
  std::uint32_t publisher = 0;
  std::shared_ptr<const std::string> topic;
  std::uint64_t seq = 0;
  std::uint64_t prev_seq = 0;
  Qos qos = Qos::kBestEffort;
  double published_at = 0.0;
  std::shared_ptr<const Bytes> payload;

  std::size_t bytes() const { return payload ? payload->size() : 0; }
};

enum class BufferOffer : std::uint8_t { kAccepted, kRejectedReliable, kRejectedBestEffort };

// Store-and-forward queue at the gateway. Arrival order is kept, which
// makes it FIFO per topic. When full, the oldest best-effort envelopes are
// evicted to make room; a reliable envelope that still does not fit is
// rejected and counted, never dropped silently.
class GatewayBuffer {
 public:
  explicit GatewayBuffer(std::size_t capacity_bytes = 64u << 20) : capacity_(capacity_bytes) {}

  BufferOffer push(HeldEnvelope e);
  // Puts an envelope whose forwarding failed back at the head.
  void push_front(HeldEnvelope e);
  bool empty() const { return queue_.empty(); }
  std::size_t size() const { return queue_.size(); }
  std::size_t bytes() const { return bytes_; }
  std::size_t capacity() const { return capacity_; }
  const HeldEnvelope& front() const { return queue_.front(); }
  HeldEnvelope pop();

  std::uint64_t best_effort_dropped() const { return be_dropped_; }
  std::uint64_t reliable_rejected() const { return reliable_rejected_; }
  std::size_t peak_bytes() const { return peak_; }

 private:
  bool evict_oldest_best_effort();

  std::size_t capacity_;
  std::deque<HeldEnvelope> queue_;
  std::size_t bytes_ = 0;
  std::size_t peak_ = 0;
  std::uint64_t be_dropped_ = 0;
  std::uint64_t reliable_rejected_ = 0;
};

}  // namespace lunasim::comms
