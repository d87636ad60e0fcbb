#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "lunasim/ground/protocol.hpp"
#include "lunasim/scenario/mission.hpp"

namespace lunasim::scenario {

struct PacedOptions {
  double realtime_factor = 1.0;
  // Gateway port; nullopt runs paced without a server.
  std::optional<std::uint16_t> port;
  std::string address = "127.0.0.1";
  double snapshot_hz = 5.0;
  double slice_s = 0.02;  // wall-clock step of the pacing loop
  bool start_paused = false;
  // Called once the server listens, with the bound port.
  std::function<void(std::uint16_t)> on_listening;
  // Polled every slice; setting it ends the run early.
  const std::atomic<bool>* stop = nullptr;
};

// Live operator input. Pause, resume and rate changes apply at once;
// selections and commands are queued and enter the simulation, in arrival
// order, at the next slice that runs unpaused.
class LiveControl {
 public:
  explicit LiveControl(Mission& mission, double realtime_factor, bool paused = false);

  void handle(const ground::ClientMessage& m);
  bool paused() const { return paused_.load(); }
  double realtime_factor() const { return factor_.load(); }
  std::uint64_t queued() const { return queued_.load(); }

 private:
  Mission& mission_;
  std::atomic<bool> paused_;
  std::atomic<double> factor_;
  std::atomic<std::uint64_t> queued_{0};
};

// Runs the mission against the wall clock, optionally serving operator
// consoles, then writes the summary.
void run_paced(Mission& mission, const PacedOptions& options);

}  // namespace lunasim::scenario
