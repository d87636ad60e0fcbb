#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lunasim/comms/bus.hpp"
#include "lunasim/ground/ground_station.hpp"
#include "lunasim/mesh/network.hpp"
#include "lunasim/scenario/agents.hpp"
#include "lunasim/scenario/metrics.hpp"
#include "lunasim/scenario/scenario.hpp"
#include "lunasim/sim/kernel.hpp"
#include "lunasim/world/arena.hpp"

namespace lunasim::scenario {

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  bool omniscient = false;
  bool bandwidth_monitor = true;
};

struct ScriptStats {
  std::uint64_t commands_sent = 0;
  std::uint64_t commands_held = 0;
};

// One simulated run: world, mesh, comms, rover and lander software, the
// ground station and the scripted operator. Everything executes on the
// kernel, so a run is a pure function of (scenario, seed, version).
class Mission {
 public:
  // `source_text` is the scenario file content; it is stored in the log
  // header so replay can rebuild the run.
  Mission(std::string source_text, RunOptions options = {});
  ~Mission();
  Mission(const Mission&) = delete;
  Mission& operator=(const Mission&) = delete;

  // Writes the header and schedules every loop and scripted event.
  void start();
  // Advances simulated time, never past the scenario duration.
  void advance_to(double t);
  bool done() const;
  // Writes the summary record; later calls do nothing.
  void finish();
  // start + advance_to(duration) + finish.
  void run();

  const ScenarioSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  double now() const { return kernel_->now_seconds(); }
  MetricsLog& log() { return log_; }
  const MetricsLog& log() const { return log_; }

  sim::Kernel& kernel() { return *kernel_; }
  mesh::MeshNetwork& net() { return *net_; }
  comms::CommsBus& bus() { return *bus_; }
  ground::GroundStation& ground() { return *gs_; }
  LanderAgent& lander() { return *lander_; }
  RoverAgent& rover(std::string_view name);
  const std::vector<std::unique_ptr<RoverAgent>>& rovers() const { return rovers_; }
  const world::GroundTruthGrid& truth() const { return *truth_; }
  world::CoverageCount coverage() const;
  const ScriptStats& script_stats() const { return script_; }

 private:
  void sync_positions();
  void schedule_event(const TimedEvent& ev);
  void sample();
  nlohmann::json counters_json() const;

  std::string source_;
  RunOptions options_;
  ScenarioSpec spec_;
  std::uint64_t seed_;
  std::unique_ptr<world::GroundTruthGrid> truth_;
  std::unique_ptr<sim::Kernel> kernel_;
  std::unique_ptr<mesh::MeshNetwork> net_;
  std::unique_ptr<comms::CommsBus> bus_;
  std::unique_ptr<LanderAgent> lander_;
  std::vector<std::unique_ptr<RoverAgent>> rovers_;
  std::unique_ptr<ground::GroundStation> gs_;
  mesh::NodeIndex gs_node_ = 0;
  sim::HandlerId script_handler_ = 0;
  sim::HandlerId metrics_handler_ = 0;
  sim::HandlerId positions_handler_ = 0;
  MetricsLog log_;
  ScriptStats script_;
  std::uint64_t gs_delivered_ = 0;
  std::uint64_t gs_latency_us_sum_ = 0;
  std::uint64_t gs_latency_us_max_ = 0;
  std::uint64_t events_fired_ = 0;
  bool started_ = false;
  bool finished_ = false;
};

struct ReplayVerdict {
  enum class Status : std::uint8_t { kIdentical, kDiverged, kRefused };
  Status status = Status::kRefused;
  std::size_t line = 0;  // 1-based first divergent line
  std::string expected;  // recorded line
  std::string actual;    // replayed line
  std::string message;

  bool identical() const { return status == Status::kIdentical; }
};

std::string_view to_string(ReplayVerdict::Status s);

// Re-runs the scenario recorded in the header on a fresh kernel and
// compares every line.
ReplayVerdict replay(const std::vector<std::string>& recorded);

}  // namespace lunasim::scenario
