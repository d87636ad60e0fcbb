#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunasim/comms/bus.hpp"
#include "lunasim/messages.hpp"
#include "lunasim/mesh/network.hpp"
#include "lunasim/sim/kernel.hpp"

namespace lunasim::ground {

struct GroundStationOptions {
  // Development overlay of true rover poses. Off for any operational view.
  bool omniscient = false;
  bool bandwidth_enabled = true;
  double bandwidth_window_s = 5.0;
  double teleop_min_interval_s = 0.1;
  double ui_tick_s = 1.0;
  std::size_t ticker_length = 64;
  // Local maps are large; the snapshot carries them only when enabled.
  bool include_local_maps = true;
};

struct NamespaceView {
  std::string name;
  double last_seen = 0.0;
  bool live = false;
};

struct RoverView {
  std::string ns;
  double last_envelope_at = -1.0;
  std::optional<msg::Status> status;
  std::optional<msg::Odom> odom;
  std::optional<msg::NavStatus> nav;
  std::uint32_t map_version = 0;
  Bytes map_grid;  // latest "LGR1" local map
  std::optional<Pose2> truth;  // omniscient overlay only
};

struct TopicBytes {
  std::uint64_t in = 0;
  std::uint64_t out = 0;
};

struct NamespaceBandwidth {
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  double in_bps = 0.0;
  double out_bps = 0.0;
  std::map<std::string, TopicBytes> topics;
};

struct BandwidthReport {
  double at = 0.0;
  double window_s = 0.0;
  double total_in_bps = 0.0;
  double total_out_bps = 0.0;
  std::map<std::string, NamespaceBandwidth> namespaces;
};

struct TickerEvent {
  double at = 0.0;
  std::string text;
};

struct Selection {
  std::optional<std::string> selected;
  // Set when the selected name is not a live namespace; commands are held.
  bool stale = false;
};

enum class CommandKind : std::uint8_t { kTeleop, kLights, kResetOdom, kReboot, kNavGoal };

std::string_view to_string(CommandKind k);
std::optional<CommandKind> command_kind_from_string(std::string_view s);

struct Command {
  CommandKind kind = CommandKind::kTeleop;
  msg::CmdVel teleop;
  bool lights = false;
  Pose2 reset;
  msg::NavGoal goal;
};

struct ForwardResult {
  bool sent = false;
  std::string topic;
  std::string reason;  // why nothing was sent
  std::optional<comms::PublishResult> publish;
};

// Operator backend on the ground-station node. Everything it shows comes
// from envelopes delivered to that node and from its own counters.
class GroundStation {
 public:
  GroundStation(sim::Kernel& kernel, comms::CommsBus& bus, mesh::MeshNetwork& net,
                mesh::NodeIndex node, GroundStationOptions options = {});

  void start();

  Selection select(std::optional<std::string> name);
  const Selection& selection() const { return selection_; }
  ForwardResult forward_command(const Command& cmd);
  std::uint64_t commands_sent() const { return commands_sent_; }

  std::vector<NamespaceView> namespaces() const;
  const std::map<std::string, RoverView>& rovers() const { return rovers_; }
  std::optional<msg::MergedMapMsg> merged() const { return merged_; }
  const BandwidthReport& bandwidth() const { return bandwidth_; }
  // Reads the node's traffic counters against the previous sample. Sends
  // nothing.
  BandwidthReport bandwidth_report(double window_s);
  const std::deque<TickerEvent>& ticker() const { return ticker_; }
  double telemetry_age(const std::string& ns) const;
  std::optional<Pose2> merged_pose(const std::string& ns) const;

  // Omniscient overlay source; ignored unless the option is set.
  void set_truth_provider(std::function<std::optional<Pose2>(const std::string&)> f) {
    truth_ = std::move(f);
  }

  nlohmann::json snapshot() const;

  const std::string& own_namespace() const { return own_ns_; }

 private:
  void on_envelope(const comms::Envelope& e);
  void ui_tick();
  void bandwidth_tick();
  void note(std::string text);
  bool is_rover_ns(const std::string& ns) const;
  std::optional<msg::Anchor> anchor_of(const std::string& ns) const;

  sim::Kernel& kernel_;
  comms::CommsBus& bus_;
  mesh::MeshNetwork& net_;
  mesh::NodeIndex node_;
  GroundStationOptions options_;
  sim::HandlerId handler_;
  std::string own_ns_;
  Selection selection_;
  std::uint64_t commands_sent_ = 0;
  double last_teleop_at_ = -1e9;
  std::map<std::string, RoverView> rovers_;
  std::optional<msg::MergedMapMsg> merged_;
  BandwidthReport bandwidth_;
  std::map<std::string, comms::TrafficCounters> last_sample_;
  double last_sample_at_ = 0.0;
  std::deque<TickerEvent> ticker_;
  std::map<std::string, bool> live_;
  std::size_t events_seen_ = 0;
  std::function<std::optional<Pose2>(const std::string&)> truth_;
};

}  // namespace lunasim::ground
