#include "lunasim/sim/kernel.hpp"

#include <utility>

namespace lunasim::sim {

Kernel::Kernel(std::uint64_t seed) : seed_(seed) {
  ingress_handler_ = register_handler("ingress");
}

HandlerId Kernel::register_handler(std::string name) {
  handlers_.push_back(std::move(name));
  return static_cast<HandlerId>(handlers_.size() - 1);
}

Ticket Kernel::schedule_at(SimTime fire_at, HandlerId target, Action action) {
  if (fire_at < now_) {
    throw SchedulingError("cannot schedule at t=" + std::to_string(fire_at.seconds()) +
                          " before now=" + std::to_string(now_.seconds()));
  }
  if (target >= handlers_.size()) throw SchedulingError("unknown handler id");
  const std::uint64_t seq = next_seq_++;
  live_.emplace(seq, ScheduledEvent{fire_at, seq, target, std::move(action)});
  queue_.push({fire_at, seq});
  return Ticket{seq};
}

bool Kernel::cancel(Ticket ticket) { return live_.erase(ticket.seq) > 0; }

void Kernel::execute(ScheduledEvent& ev) {
  now_ = ev.fire_at;
  ++executed_;
  digest_.add_u64(static_cast<std::uint64_t>(ev.fire_at.micros()));
  digest_.add_u64(ev.seq);
  digest_.add_u64(ev.target);
  if (record_log_) log_.push_back({ev.fire_at.micros(), ev.seq, ev.target});
  if (ev.action) ev.action();
}

bool Kernel::step() {
  while (!queue_.empty()) {
    const QueueItem top = queue_.top();
    queue_.pop();
    auto it = live_.find(top.seq);
    if (it == live_.end()) continue;  // cancelled
    ScheduledEvent ev = std::move(it->second);
    live_.erase(it);
    execute(ev);
    return true;
  }
  return false;
}

std::size_t Kernel::run_until(double t_end_s) {
  return run_until(SimTime::from_seconds(t_end_s));
}

std::size_t Kernel::run_until(SimTime t_end) {
  if (t_end < now_) throw SchedulingError("run_until target is in the past");
  std::size_t count = 0;
  while (!queue_.empty()) {
    const QueueItem top = queue_.top();
    if (top.fire_at > t_end) break;
    if (!live_.contains(top.seq)) {
      queue_.pop();
      continue;
    }
    step();
    ++count;
  }
  now_ = t_end;
  return count;
}

RngStream Kernel::fork_rng(std::string_view label) {
  if (label.empty()) throw std::invalid_argument("rng label must be non-empty");
  if (rng_labels_.contains(label)) {
    throw std::invalid_argument("rng label already forked: " + std::string(label));
  }
  rng_labels_.emplace(label);
  return RngStream(seed_, label);
}

void Kernel::post_external(Action action) {
  std::lock_guard lock(ingress_mu_);
  ingress_.push_back(std::move(action));
}

std::size_t Kernel::drain_ingress() {
  std::deque<Action> batch;
  {
    std::lock_guard lock(ingress_mu_);
    batch.swap(ingress_);
  }
  for (auto& action : batch) schedule_at(now_, ingress_handler_, std::move(action));
  return batch.size();
}

}  // namespace lunasim::sim
