#pragma once

#include <any>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lunasim/geometry.hpp"
#include "lunasim/mesh/link_model.hpp"
#include "lunasim/mesh/routing.hpp"
#include "lunasim/sim/kernel.hpp"

namespace lunasim::mesh {

struct Frame {
  std::uint64_t id = 0;  // assigned by send()
  NodeIndex src = 0;
  NodeIndex dst = 0;
  std::uint32_t bytes = 0;  // on-air size
  std::string account;      // byte accounting key, normally a namespace
  std::any payload;
  double sent_at = 0.0;
  int hops = 0;
};

enum class DropReason : std::uint8_t { kNoRoute, kRetryLimit, kQueueFull, kNodeDown, kHopLimit, kLinkLost };
std::string_view to_string(DropReason r);

enum class FrameKind : std::uint8_t { kData, kPreq, kPrep, kPerr };

// Every transmission attempt, data or control, as seen on the wire.
struct TxRecord {
  double at = 0.0;
  NodeIndex from = 0;
  NodeIndex to = 0;  // next hop, or the sender itself for a radio broadcast
  FrameKind kind = FrameKind::kData;
  std::uint32_t bytes = 0;
  const std::string* account = nullptr;
};

struct FlowCounters {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t accounting_errors = 0;
};

struct WireCounters {
  std::uint64_t frames = 0;
  std::uint64_t bytes = 0;
  std::uint64_t data_bytes = 0;
  std::uint64_t control_bytes = 0;
};

struct FixedLink {
  double rate_bps = 10e6;
  double e_f = 0.0;
  double extra_delay_s = 1.0;
};

struct LinkSelector {
  std::string a;
  std::string b;  // "*" selects every link of `a`
};

// 802.11s-style mesh: links sampled from node positions, on-demand HWMP
// discovery (PREQ flood, PREP unicast back, PERR on failures), per-hop
// airtime serialization with Bernoulli losses and bounded retries. Control
// frames pay latency but are not subject to random loss.
class MeshNetwork {
 public:
  using DeliveryHandler = std::function<void(const Frame&)>;
  using DropHandler = std::function<void(const Frame&, DropReason)>;
  using TxObserver = std::function<void(const TxRecord&)>;

  MeshNetwork(sim::Kernel& kernel, NetParams params = {}, LinkCurve curve = {});

  NodeIndex add_node(std::string name, Vec2 position, bool radio = true);
  void add_fixed_link(NodeIndex a, NodeIndex b, FixedLink link);
  std::optional<NodeIndex> find(std::string_view name) const;
  NodeIndex require(std::string_view name) const;
  const std::string& name(NodeIndex n) const { return nodes_.at(n).name; }
  std::size_t node_count() const { return nodes_.size(); }

  void set_position(NodeIndex n, Vec2 p) { nodes_.at(n).position = p; }
  Vec2 position(NodeIndex n) const { return nodes_.at(n).position; }

  // Samples links now and then every link_sample_period.
  void start();
  void sample_links();

  void set_delivery_handler(NodeIndex n, DeliveryHandler h) { nodes_.at(n).on_deliver = std::move(h); }
  void set_drop_handler(NodeIndex n, DropHandler h) { nodes_.at(n).on_drop = std::move(h); }
  void set_tx_observer(TxObserver o) { tx_observer_ = std::move(o); }

  // Queues a data frame at `src`. Returns the assigned frame id.
  std::uint64_t send(NodeIndex src, NodeIndex dst, Frame frame);
  // Starts route discovery without data.
  void discover(NodeIndex src, NodeIndex dst);

  void inject_blackout(double t0, double t1, std::vector<LinkSelector> links);
  void on_node_down(NodeIndex n);
  void on_node_up(NodeIndex n);
  bool node_up(NodeIndex n) const { return nodes_.at(n).up; }

  const LinkState& link(NodeIndex a, NodeIndex b) const;
  LinkState& link_mut(NodeIndex a, NodeIndex b);
  double metric_of(NodeIndex a, NodeIndex b) const { return link_metric(link(a, b), params_); }
  std::optional<RouteEntry> route(NodeIndex at, NodeIndex dest) const;
  // Follows usable next hops; empty when no complete route exists.
  std::vector<NodeIndex> path(NodeIndex src, NodeIndex dst) const;
  const std::vector<RoutingTable>& tables() const { return tables_; }

  const NetParams& params() const { return params_; }
  FlowCounters flow() const;
  bool flow_balanced() const;
  const WireCounters& wire() const { return wire_; }
  const std::map<std::string, WireCounters, std::less<>>& wire_by_account() const { return wire_by_account_; }
  std::uint64_t loop_violations() const { return loop_violations_; }
  std::uint64_t route_changes() const { return route_changes_; }

  // One line per routing-table update when enabled.
  void set_route_log(bool on) { keep_route_log_ = on; }
  const std::vector<std::string>& route_log() const { return route_log_; }

 private:
  struct Control {
    FrameKind kind = FrameKind::kPreq;
    NodeIndex orig = 0;
    std::uint32_t orig_seq = 0;
    NodeIndex target = 0;
    std::uint32_t target_seq = 0;
    std::uint32_t preq_id = 0;
    double metric = 0.0;
    int hops = 0;
    NodeIndex reply_to = 0;  // PREP/PERR: final recipient
  };

  struct Pending {
    Frame frame;
    int attempts = 0;
  };

  struct Interface {
    std::deque<Frame> queue;
    bool busy = false;
    std::optional<NodeIndex> peer;  // fixed links only
  };

  struct Discovery {
    std::deque<Frame> buffered;
    int attempts = 0;
    bool active = false;
    sim::Ticket timer;
    double last_preq = -1e300;
    double last_use = -1e300;
  };

  struct Node {
    std::string name;
    Vec2 position;
    bool radio = true;
    bool up = true;
    std::uint32_t seq = 0;
    std::uint32_t preq_id = 0;
    std::vector<Interface> ifaces;  // 0 = radio
    std::unordered_map<NodeIndex, Discovery> discovery;
    std::map<std::pair<NodeIndex, std::uint32_t>, double> preq_seen;
    std::unordered_map<NodeIndex, double> perr_sent;
    DeliveryHandler on_deliver;
    DropHandler on_drop;
  };

  struct LinkSlot {
    LinkState state;
    bool exists = false;  // radio-capable pair or fixed link
    bool in_range = false;
    bool reported_up = false;  // state last seen by the routing layer
    int blackouts = 0;
    double busy_s = 0.0;
    double fixed_e_f = 0.0;
  };

  std::size_t slot_index(NodeIndex a, NodeIndex b) const;
  LinkSlot& slot(NodeIndex a, NodeIndex b) { return links_[slot_index(a, b)]; }
  const LinkSlot& slot(NodeIndex a, NodeIndex b) const { return links_[slot_index(a, b)]; }
  void recompute_up(LinkSlot& s);
  void link_went_down(NodeIndex a, NodeIndex b);
  std::size_t iface_for(NodeIndex node, NodeIndex next_hop) const;
  std::vector<NodeIndex> neighbors(NodeIndex n) const;

  void enqueue(NodeIndex node, Frame frame);
  void kick(NodeIndex node, std::size_t iface);
  void attempt(NodeIndex node, std::size_t iface, NodeIndex next, Pending p);
  void receive(NodeIndex node, Frame frame);
  void arrive(NodeIndex from, NodeIndex node, Frame frame);
  void drop(NodeIndex at, Frame frame, DropReason reason);
  void buffer_for_discovery(NodeIndex node, Frame frame);
  void start_discovery(NodeIndex src, NodeIndex dst);
  void discovery_timeout(NodeIndex src, NodeIndex dst);
  void flush_discovery(NodeIndex src, NodeIndex dst);

  void send_control(NodeIndex from, NodeIndex to, const Control& c);
  void broadcast_preq(NodeIndex from, const Control& c);
  void on_control(NodeIndex at, NodeIndex from, Control c);
  void on_preq(NodeIndex at, NodeIndex from, Control c);
  void on_prep(NodeIndex at, NodeIndex from, Control c);
  void on_perr(NodeIndex at, NodeIndex from, const Control& c);
  void send_perr(NodeIndex at, NodeIndex src, NodeIndex dst);

  bool offer_route(NodeIndex at, NodeIndex dest, const RouteEntry& e, std::string_view why);
  void note_invalidation(NodeIndex at, NodeIndex dest, std::string_view why);
  void audit(NodeIndex dest);
  void record_tx(NodeIndex from, NodeIndex to, FrameKind kind, std::uint32_t bytes, const std::string* account);

  sim::Kernel& kernel_;
  sim::HandlerId handler_;
  NetParams params_;
  LinkCurve curve_;
  sim::RngStream rng_;
  std::vector<Node> nodes_;
  std::vector<LinkSlot> links_;  // dense upper triangle, rebuilt on add_node
  std::vector<RoutingTable> tables_;
  bool started_ = false;

  std::uint64_t next_frame_id_ = 1;
  FlowCounters flow_;
  std::unordered_set<std::uint64_t> live_;
  WireCounters wire_;
  std::map<std::string, WireCounters, std::less<>> wire_by_account_;
  TxObserver tx_observer_;
  std::uint64_t loop_violations_ = 0;
  std::uint64_t route_changes_ = 0;
  bool keep_route_log_ = false;
  std::vector<std::string> route_log_;
};

}  // namespace lunasim::mesh
