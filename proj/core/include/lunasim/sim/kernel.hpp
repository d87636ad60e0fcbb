#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lunasim/sim/digest.hpp"
#include "lunasim/sim/rng.hpp"
#include "lunasim/sim/sim_time.hpp"

namespace lunasim::sim {

class SchedulingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using HandlerId = std::uint32_t;
using Action = std::function<void()>;

struct Ticket {
  std::uint64_t seq = 0;
};

struct ScheduledEvent {
  SimTime fire_at;
  std::uint64_t seq = 0;
  HandlerId target = 0;
  Action action;
};

// One executed event as recorded in the replay log.
struct LogEntry {
  std::int64_t fire_at_us = 0;
  std::uint64_t seq = 0;
  HandlerId target = 0;
  bool operator==(const LogEntry&) const = default;
};

// Single-threaded discrete-event scheduler. Events execute in (fire_at, seq)
// order; seq is the insertion counter, so simultaneous events run FIFO.
// External threads hand work to the loop only through post_external(); the
// owner drains that queue at loop boundaries with drain_ingress().
class Kernel {
 public:
  explicit Kernel(std::uint64_t seed = 0);

  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  SimTime now() const { return now_; }
  double now_seconds() const { return now_.seconds(); }
  std::uint64_t seed() const { return seed_; }

  HandlerId register_handler(std::string name);
  const std::string& handler_name(HandlerId id) const { return handlers_.at(id); }

  Ticket schedule(double fire_at_s, HandlerId target, Action action) {
    return schedule_at(SimTime::from_seconds(fire_at_s), target, std::move(action));
  }
  Ticket schedule_at(SimTime fire_at, HandlerId target, Action action);
  Ticket schedule_after(double delay_s, HandlerId target, Action action) {
    return schedule_at(now_ + SimTime::from_seconds(delay_s), target, std::move(action));
  }
  // Returns true when a pending event was removed.
  bool cancel(Ticket ticket);

  // Executes every event with fire_at <= t_end, then sets now = t_end.
  std::size_t run_until(double t_end_s);
  std::size_t run_until(SimTime t_end);
  // Executes the next event, if any. Returns false when the queue is empty.
  bool step();

  std::size_t pending() const { return live_.size(); }
  std::uint64_t executed() const { return executed_; }

  // Fails on empty or already-used labels.
  RngStream fork_rng(std::string_view label);

  std::uint64_t log_digest() const { return digest_.value(); }
  void set_record_log(bool on) { record_log_ = on; }
  const std::vector<LogEntry>& log() const { return log_; }

  // Thread-safe. The action is scheduled at the current time, in arrival
  // order, when the loop next calls drain_ingress().
  void post_external(Action action);
  std::size_t drain_ingress();

 private:
  struct QueueItem {
    SimTime fire_at;
    std::uint64_t seq;
    // Min-heap ordering.
    bool operator<(const QueueItem& o) const {
      if (fire_at != o.fire_at) return fire_at > o.fire_at;
      return seq > o.seq;
    }
  };

  void execute(ScheduledEvent& ev);

  std::uint64_t seed_;
  SimTime now_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  std::priority_queue<QueueItem> queue_;
  std::unordered_map<std::uint64_t, ScheduledEvent> live_;
  std::vector<std::string> handlers_;
  std::set<std::string, std::less<>> rng_labels_;
  Fnv1a64 digest_;
  bool record_log_ = false;
  std::vector<LogEntry> log_;
  HandlerId ingress_handler_;

  std::mutex ingress_mu_;
  std::deque<Action> ingress_;
};

}  // namespace lunasim::sim
