#include "lunasim/comms/gateway_buffer.hpp"

#include <algorithm>

namespace lunasim::comms {

bool GatewayBuffer::evict_oldest_best_effort() {
  const auto it = std::find_if(queue_.begin(), queue_.end(),
                               [](const HeldEnvelope& e) { return e.qos == Qos::kBestEffort; });
  if (it == queue_.end()) return false;
  bytes_ -= it->bytes();
  queue_.erase(it);
  ++be_dropped_;
  return true;
}

BufferOffer GatewayBuffer::push(HeldEnvelope e) {
  const std::size_t need = e.bytes();
  if (need > capacity_) {
    if (e.qos == Qos::kReliable) {
      ++reliable_rejected_;
      return BufferOffer::kRejectedReliable;
    }
    ++be_dropped_;
    return BufferOffer::kRejectedBestEffort;
  }
  while (bytes_ + need > capacity_) {
    if (!evict_oldest_best_effort()) break;
  }
  if (bytes_ + need > capacity_) {
    if (e.qos == Qos::kReliable) {
      ++reliable_rejected_;
      return BufferOffer::kRejectedReliable;
    }
    ++be_dropped_;
    return BufferOffer::kRejectedBestEffort;
  }
  bytes_ += need;
  peak_ = std::max(peak_, bytes_);
  queue_.push_back(std::move(e));
  return BufferOffer::kAccepted;
}

void GatewayBuffer::push_front(HeldEnvelope e) {
  bytes_ += e.bytes();
  peak_ = std::max(peak_, bytes_);
  queue_.push_front(std::move(e));
}

HeldEnvelope GatewayBuffer::pop() {
  HeldEnvelope e = std::move(queue_.front());
  queue_.pop_front();
  bytes_ -= e.bytes();
  return e;
}

}  // namespace lunasim::comms
