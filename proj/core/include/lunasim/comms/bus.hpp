#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lunasim/bytes.hpp"
#include "lunasim/comms/gateway_buffer.hpp"
#include "lunasim/comms/topic.hpp"
#include "lunasim/mesh/network.hpp"
#include "lunasim/sim/kernel.hpp"

namespace lunasim::comms {

using mesh::NodeIndex;

struct CommsParams {
  std::uint32_t message_overhead_bytes = 64;
  std::uint32_t mtu_bytes = 1500;
  std::uint32_t ack_bytes = 64;
  double rto_s = 3.0;
  int retransmit_limit = 4;
  std::size_t default_depth = 10;         // per-topic window and source buffer, in envelopes
  double discovery_period_s = 2.0;
  int discovery_expiry_periods = 3;
  double gap_timeout_s = 120.0;           // receiver skips a missing reliable envelope after this
  std::size_t gateway_capacity_bytes = 64u << 20;
  std::size_t gateway_window_bytes = 512u << 10;  // unacked bytes from the gateway to ground
  double gateway_poll_s = 0.25;
  RateBudget rates;

  void validate() const;
};

struct Envelope {
  std::string topic;
  NodeIndex publisher = 0;
  std::uint64_t seq = 0;
  Qos qos = Qos::kBestEffort;
  double sent_at = 0.0;
  double delivered_at = 0.0;
  std::shared_ptr<const Bytes> payload;

  std::size_t payload_bytes() const { return payload ? payload->size() : 0; }
};

enum class PublishStatus : std::uint8_t { kSent, kNoSubscribers, kRateLimited, kUnpowered, kBufferFull };
std::string_view to_string(PublishStatus s);

struct PublishResult {
  PublishStatus status = PublishStatus::kSent;
  std::uint64_t seq = 0;
  std::size_t recipients = 0;
};

enum class EventKind : std::uint8_t {
  kDeliveryFailure,    // reliable envelope exhausted its retransmissions
  kSourceBufferFull,   // reliable envelope refused at the publisher
  kGatewayOverflow,    // reliable envelope refused by the gateway buffer
  kGatewayDropped,     // best-effort envelope evicted at the gateway
  kGapSkipped,         // receiver gave up waiting for a reliable predecessor
};
std::string_view to_string(EventKind k);

struct CommsEvent {
  double at = 0.0;
  EventKind kind = EventKind::kDeliveryFailure;
  NodeIndex node = 0;
  NodeIndex peer = 0;
  std::string topic;
  std::uint64_t seq = 0;
  std::uint64_t count = 1;
};

struct NamespaceEntry {
  NodeIndex node = 0;
  double last_seen = 0.0;
};

struct Announcement {
  std::string node;
  std::vector<std::string> namespaces;
  std::vector<std::string> subscriptions;
  double period_s = 2.0;
};
// "LDA1" | str node | varint n, n x str namespace | varint m, m x str
// pattern | f64 period (little-endian, strings varint-length prefixed).
Bytes encode_announcement(const Announcement& a);
Announcement decode_announcement(std::span<const std::uint8_t> bytes);

struct TrafficCounters {
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
};

// Publish-subscribe over the mesh. Each attached node owns namespaces,
// announces them with its subscriptions every discovery period, and sends
// one copy of every publication to each node whose announced patterns
// match. Reliable legs use per-fragment acks and retransmission; traffic to
// the ground station is handed to the gateway host, which takes custody and
// forwards it when the ground link is up.
class CommsBus {
 public:
  using Callback = std::function<void(const Envelope&)>;
  using SubscriptionId = std::uint64_t;
  using AckObserver = std::function<void(const std::string& topic, std::uint64_t seq, NodeIndex dest, double at)>;

  CommsBus(sim::Kernel& kernel, mesh::MeshNetwork& net, CommsParams params = {});
  ~CommsBus();
  CommsBus(const CommsBus&) = delete;
  CommsBus& operator=(const CommsBus&) = delete;

  void attach(NodeIndex node, std::vector<std::string> namespaces);
  bool attached(NodeIndex node) const;
  const std::vector<std::string>& owned_namespaces(NodeIndex node) const;
  void set_gateway(NodeIndex host, NodeIndex ground);
  void set_topic_depth(std::string_view topic_name, std::size_t depth);
  void start();

  // Turns the node's radio and endpoint on or off.
  void set_powered(NodeIndex node, bool on);
  bool powered(NodeIndex node) const;

  // Subscriptions sharing a pattern on one node each receive every match.
  SubscriptionId subscribe(NodeIndex node, std::string pattern, Callback cb);
  void unsubscribe(SubscriptionId id);

  PublishResult publish(NodeIndex node, std::string_view topic, Bytes payload, Qos qos);

  // Namespaces this node has heard announced and not yet expired.
  std::map<std::string, NamespaceEntry> namespaces(NodeIndex node) const;
  std::optional<double> last_seen(NodeIndex node, std::string_view ns) const;

  void set_event_handler(std::function<void(const CommsEvent&)> h) { event_handler_ = std::move(h); }
  const std::vector<CommsEvent>& events() const { return events_; }
  void set_ack_observer(NodeIndex node, AckObserver o);

  // Passive per-node byte counters keyed by topic path ("<ns>/discovery" for
  // announcements); they include overhead, retransmissions and acks.
  const std::map<std::string, TrafficCounters>& traffic(NodeIndex node) const;

  const GatewayBuffer* gateway_buffer() const;
  std::optional<NodeIndex> gateway_host() const;
  std::uint64_t gaps(NodeIndex node) const;
  const CommsParams& params() const { return params_; }
  std::size_t fragment_count(std::size_t payload_bytes) const;

 private:
  struct Packet;
  struct OutEnvelope;
  struct Endpoint;
  struct Gateway;

  Endpoint& ep(NodeIndex n);
  const Endpoint& ep(NodeIndex n) const;
  std::size_t depth_for(std::string_view topic_path) const;

  void announce(NodeIndex node);
  void schedule_announce(NodeIndex node, double delay);
  std::vector<NodeIndex> recipients(NodeIndex node, std::string_view topic) const;

  void send_envelope(NodeIndex from, NodeIndex to, std::shared_ptr<Packet> proto, bool custodial);
  void pump(NodeIndex from, NodeIndex to, const std::string& topic);
  void transmit_fragment(NodeIndex from, NodeIndex to, std::uint64_t key, std::uint32_t index);
  void on_fragment_timeout(NodeIndex from, NodeIndex to, std::uint64_t key, std::uint32_t index);
  void finish_out(NodeIndex from, NodeIndex to, std::uint64_t key, bool success);

  void on_frame(NodeIndex at, const mesh::Frame& f);
  void on_data(NodeIndex at, const Packet& p);
  void on_ack(NodeIndex at, const Packet& p);
  void on_announcement(NodeIndex at, const Packet& p);
  void complete(NodeIndex at, const Packet& p, std::shared_ptr<const Bytes> payload);
  void order_and_deliver(NodeIndex at, Envelope env, std::uint64_t prev_seq);
  void deliver_local(NodeIndex at, const Envelope& env);
  void check_gaps(NodeIndex at);

  void gateway_accept(const Packet& p, std::shared_ptr<const Bytes> payload, std::uint64_t prev_seq);
  void gateway_dispatch();
  void gateway_poll();
  bool pinned(NodeIndex node) const;
  void splice(Endpoint& e, const Packet& p, NodeIndex to);

  void mesh_send(NodeIndex from, NodeIndex to, std::shared_ptr<const Packet> pkt, std::uint32_t bytes,
                 const std::string& account_topic);
  void emit(CommsEvent e);

  sim::Kernel& kernel_;
  mesh::MeshNetwork& net_;
  sim::HandlerId handler_;
  CommsParams params_;
  std::map<std::string, std::size_t, std::less<>> depths_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;  // by NodeIndex
  std::unique_ptr<Gateway> gateway_;
  bool started_ = false;
  SubscriptionId next_sub_ = 1;
  std::uint64_t next_out_key_ = 1;
  std::vector<CommsEvent> events_;
  std::function<void(const CommsEvent&)> event_handler_;
};

}  // namespace lunasim::comms
