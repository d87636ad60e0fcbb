#include "lunasim/comms/bus.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <tuple>

namespace lunasim::comms {

std::string_view to_string(PublishStatus s) {
  switch (s) {
    case PublishStatus::kSent: return "sent";
    case PublishStatus::kNoSubscribers: return "no_subscribers";
    case PublishStatus::kRateLimited: return "rate_limited";
    case PublishStatus::kUnpowered: return "unpowered";
    case PublishStatus::kBufferFull: return "buffer_full";
  }
  return "?";
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kDeliveryFailure: return "delivery_failure";
    case EventKind::kSourceBufferFull: return "source_buffer_full";
    case EventKind::kGatewayOverflow: return "gateway_overflow";
    case EventKind::kGatewayDropped: return "gateway_dropped";
    case EventKind::kGapSkipped: return "gap_skipped";
  }
  return "?";
}

void CommsParams::validate() const {
  if (mtu_bytes < 64) throw CommsError("mtu must be at least 64 bytes");
  if (!(rto_s > 0.0)) throw CommsError("rto must be positive");
  if (retransmit_limit < 0) throw CommsError("retransmit_limit must be >= 0");
  if (default_depth == 0) throw CommsError("topic depth must be >= 1");
  if (!(discovery_period_s > 0.0)) throw CommsError("discovery period must be positive");
  if (discovery_expiry_periods < 1) throw CommsError("discovery expiry must be >= 1 period");
}

Bytes encode_announcement(const Announcement& a) {
  ByteWriter w;
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("LDA1"), 4));
  w.str(a.node);
  w.varint(a.namespaces.size());
  for (const auto& n : a.namespaces) w.str(n);
  w.varint(a.subscriptions.size());
  for (const auto& s : a.subscriptions) w.str(s);
  w.f64(a.period_s);
  return w.take();
}

Announcement decode_announcement(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "LDA1", 4) != 0) throw DecodeError("bad announcement magic");
  ByteReader r(bytes.subspan(4));
  Announcement a;
  a.node = r.str();
  const auto n = r.varint();
  if (n > r.remaining()) throw DecodeError("announcement namespace count too large");
  for (std::uint64_t i = 0; i < n; ++i) a.namespaces.push_back(r.str());
  const auto m = r.varint();
  if (m > r.remaining()) throw DecodeError("announcement pattern count too large");
  for (std::uint64_t i = 0; i < m; ++i) a.subscriptions.push_back(r.str());
  a.period_s = r.f64();
  if (!r.done()) throw DecodeError("trailing bytes after announcement");
  return a;
}

// ---- internal state -------------------------------------------------------

struct CommsBus::Packet {
  enum class Kind : std::uint8_t { kData, kAck, kAnnounce };
  Kind kind = Kind::kData;
  NodeIndex leg_src = 0;
  NodeIndex leg_dst = 0;
  NodeIndex publisher = 0;
  std::shared_ptr<const std::string> topic;
  std::uint64_t seq = 0;
  std::uint64_t prev_seq = 0;
  Qos qos = Qos::kBestEffort;
  double published_at = 0.0;
  bool local = true;                // leg_dst delivers to its own subscribers
  bool forward_to_ground = false;   // leg_dst is the gateway and takes custody
  std::uint64_t prev_seq_forward = 0;
  std::uint64_t out_key = 0;        // sender's transfer id, echoed in acks
  std::uint32_t frag_index = 0;
  std::uint32_t frag_count = 1;
  std::uint32_t wire_offset = 0;    // fragment range within overhead + payload
  std::uint32_t wire_len = 0;
  std::uint32_t payload_size = 0;
  std::shared_ptr<const Bytes> payload;
};

struct CommsBus::OutEnvelope {
  std::shared_ptr<Packet> proto;
  NodeIndex to = 0;
  bool custodial = false;
  bool started = false;
  std::vector<std::uint8_t> acked;
  std::vector<int> retransmits;
  std::vector<sim::Ticket> timers;
  std::uint32_t acked_count = 0;
};

struct CommsBus::Endpoint {
  bool attached = false;
  bool powered = true;
  std::uint64_t announce_gen = 0;
  std::vector<std::string> namespaces;

  struct Sub {
    SubscriptionId id;
    std::string pattern;
    Callback cb;
  };
  std::vector<Sub> subs;

  std::map<std::string, double> last_pub;
  std::map<std::string, std::uint64_t> seq;
  std::map<std::pair<std::string, NodeIndex>, std::uint64_t> last_sent_to;

  struct Peer {
    std::vector<std::string> subs;
    double last_seen = 0.0;
  };
  std::map<NodeIndex, Peer> peers;
  std::map<std::string, NamespaceEntry> ns_table;

  std::map<std::uint64_t, OutEnvelope> out;
  struct LegTopic {
    std::deque<std::uint64_t> pending;
    std::size_t in_flight = 0;
  };
  std::map<std::pair<NodeIndex, std::string>, LegTopic> legs;

  struct Reassembly {
    Bytes data;
    std::vector<std::uint8_t> got;
    std::uint32_t count = 0;
    double started_at = 0.0;
  };
  std::map<std::pair<NodeIndex, std::uint64_t>, Reassembly> reasm;
  std::map<std::pair<NodeIndex, std::uint64_t>, double> completed;

  struct Stream {
    bool started = false;
    std::uint64_t last = 0;
    struct Waiting {
      Envelope env;
      double since;
    };
    std::map<std::uint64_t, Waiting> waiting;  // keyed by prev_seq
  };
  std::map<std::pair<NodeIndex, std::string>, Stream> streams;
  std::uint64_t gaps = 0;

  AckObserver ack_observer;
  std::map<std::string, TrafficCounters> traffic;
};

struct CommsBus::Gateway {
  NodeIndex host = 0;
  NodeIndex ground = 0;
  GatewayBuffer buffer;
  std::size_t in_flight_bytes = 0;
};

CommsBus::CommsBus(sim::Kernel& kernel, mesh::MeshNetwork& net, CommsParams params)
    : kernel_(kernel), net_(net), handler_(kernel.register_handler("comms")), params_(std::move(params)) {
  params_.validate();
}

CommsBus::~CommsBus() = default;

const GatewayBuffer* CommsBus::gateway_buffer() const { return gateway_ ? &gateway_->buffer : nullptr; }

std::optional<NodeIndex> CommsBus::gateway_host() const {
  if (!gateway_) return std::nullopt;
  return gateway_->host;
}

const std::vector<std::string>& CommsBus::owned_namespaces(NodeIndex node) const { return ep(node).namespaces; }

CommsBus::Endpoint& CommsBus::ep(NodeIndex n) {
  if (n >= endpoints_.size() || !endpoints_[n]) throw CommsError("node is not attached to the bus");
  return *endpoints_[n];
}

const CommsBus::Endpoint& CommsBus::ep(NodeIndex n) const {
  if (n >= endpoints_.size() || !endpoints_[n]) throw CommsError("node is not attached to the bus");
  return *endpoints_[n];
}

bool CommsBus::attached(NodeIndex node) const { return node < endpoints_.size() && endpoints_[node] != nullptr; }

void CommsBus::attach(NodeIndex node, std::vector<std::string> namespaces) {
  if (node >= net_.node_count()) throw CommsError("attach: unknown mesh node");
  if (attached(node)) throw CommsError("node already attached: " + net_.name(node));
  for (const auto& ns : namespaces) {
    if (ns.empty() || ns.find('/') != std::string::npos || ns == "*") throw CommsError("bad namespace: " + ns);
  }
  if (endpoints_.size() <= node) endpoints_.resize(node + 1);
  endpoints_[node] = std::make_unique<Endpoint>();
  Endpoint& e = *endpoints_[node];
  e.attached = true;
  e.powered = net_.node_up(node);
  e.namespaces = std::move(namespaces);
  net_.set_delivery_handler(node, [this, node](const mesh::Frame& f) { on_frame(node, f); });
  if (started_) schedule_announce(node, 0.0);
}

void CommsBus::set_gateway(NodeIndex host, NodeIndex ground) {
  if (!attached(host) || !attached(ground) || host == ground) throw CommsError("gateway needs two attached nodes");
  gateway_ = std::make_unique<Gateway>();
  gateway_->host = host;
  gateway_->ground = ground;
  gateway_->buffer = GatewayBuffer(params_.gateway_capacity_bytes);
}

void CommsBus::set_topic_depth(std::string_view topic_name, std::size_t depth) {
  if (depth == 0) throw CommsError("topic depth must be >= 1");
  depths_[std::string(topic_name)] = depth;
}

std::size_t CommsBus::depth_for(std::string_view topic_path) const {
  const auto slash = topic_path.find('/');
  const auto name = slash == std::string_view::npos ? topic_path : topic_path.substr(slash + 1);
  const auto it = depths_.find(name);
  return it == depths_.end() ? params_.default_depth : it->second;
}

std::size_t CommsBus::fragment_count(std::size_t payload_bytes) const {
  const std::size_t total = payload_bytes + params_.message_overhead_bytes;
  return std::max<std::size_t>(1, (total + params_.mtu_bytes - 1) / params_.mtu_bytes);
}

void CommsBus::start() {
  if (started_) return;
  started_ = true;
  for (NodeIndex n = 0; n < endpoints_.size(); ++n) {
    if (endpoints_[n]) schedule_announce(n, 0.01 * n);
  }
  if (gateway_) kernel_.schedule_after(params_.gateway_poll_s, handler_, [this] { gateway_poll(); });
}

bool CommsBus::powered(NodeIndex node) const { return ep(node).powered; }

void CommsBus::set_powered(NodeIndex node, bool on) {
  Endpoint& e = ep(node);
  if (e.powered == on) return;
  e.powered = on;
  if (!on) {
    net_.on_node_down(node);
    // Abandon transfers; splice each destination chain back so the next
    // envelope links to the last one that may have arrived.
    std::vector<std::uint64_t> keys;
    for (const auto& [k, o] : e.out) keys.push_back(k);
    std::sort(keys.rbegin(), keys.rend());
    for (const auto k : keys) {
      auto& o = e.out.at(k);
      for (auto& t : o.timers) kernel_.cancel(t);
      if (!o.custodial) splice(e, *o.proto, o.to);
    }
    e.out.clear();
    e.legs.clear();
    e.reasm.clear();
    e.announce_gen += 1;
    if (gateway_ && gateway_->host == node) gateway_->in_flight_bytes = 0;
  } else {
    net_.on_node_up(node);
    if (started_) schedule_announce(node, 0.0);
  }
}

CommsBus::SubscriptionId CommsBus::subscribe(NodeIndex node, std::string pattern, Callback cb) {
  if (!valid_pattern(pattern)) throw CommsError("bad subscription pattern: " + pattern);
  Endpoint& e = ep(node);
  const SubscriptionId id = next_sub_++;
  e.subs.push_back({id, std::move(pattern), std::move(cb)});
  return id;
}

void CommsBus::unsubscribe(SubscriptionId id) {
  for (auto& e : endpoints_) {
    if (!e) continue;
    std::erase_if(e->subs, [id](const Endpoint::Sub& s) { return s.id == id; });
  }
}

void CommsBus::set_ack_observer(NodeIndex node, AckObserver o) { ep(node).ack_observer = std::move(o); }

const std::map<std::string, TrafficCounters>& CommsBus::traffic(NodeIndex node) const { return ep(node).traffic; }

std::uint64_t CommsBus::gaps(NodeIndex node) const { return ep(node).gaps; }

std::map<std::string, NamespaceEntry> CommsBus::namespaces(NodeIndex node) const {
  const Endpoint& e = ep(node);
  const double horizon = params_.discovery_expiry_periods * params_.discovery_period_s;
  const double now = kernel_.now_seconds();
  std::map<std::string, NamespaceEntry> out;
  for (const auto& [ns, entry] : e.ns_table) {
    if (pinned(entry.node) || now - entry.last_seen <= horizon) out.emplace(ns, entry);
  }
  return out;
}

// The gateway pair is fixed infrastructure: its registrations survive a
// blackout so ground-bound traffic keeps queueing at the lander.
bool CommsBus::pinned(NodeIndex node) const {
  return gateway_ && (node == gateway_->host || node == gateway_->ground);
}

std::optional<double> CommsBus::last_seen(NodeIndex node, std::string_view ns) const {
  const auto& t = ep(node).ns_table;
  const auto it = t.find(std::string(ns));
  if (it == t.end()) return std::nullopt;
  return it->second.last_seen;
}

void CommsBus::emit(CommsEvent e) {
  events_.push_back(e);
  if (event_handler_) event_handler_(events_.back());
}

// ---- discovery -------------------------------------------------------------

void CommsBus::schedule_announce(NodeIndex node, double delay) {
  Endpoint& e = ep(node);
  e.announce_gen += 1;
  const auto gen = e.announce_gen;
  kernel_.schedule_after(delay, handler_, [this, node, gen] {
    Endpoint& en = ep(node);
    if (en.announce_gen != gen || !en.powered) return;
    announce(node);
    schedule_announce(node, params_.discovery_period_s);
  });
}

void CommsBus::announce(NodeIndex node) {
  Endpoint& e = ep(node);
  Announcement a;
  a.node = net_.name(node);
  a.namespaces = e.namespaces;
  // Duplicate subscriptions share one announced pattern.
  std::set<std::string_view> announced;
  for (const auto& s : e.subs) {
    if (announced.insert(s.pattern).second) a.subscriptions.push_back(s.pattern);
  }
  a.period_s = params_.discovery_period_s;
  auto bytes = std::make_shared<const Bytes>(encode_announcement(a));
  const std::string topic =
      (e.namespaces.empty() ? std::string(kGlobalNamespace) : e.namespaces.front()) + "/discovery";
  auto topic_ptr = std::make_shared<const std::string>(topic);
  const auto wire = static_cast<std::uint32_t>(bytes->size() + params_.message_overhead_bytes);
  for (NodeIndex other = 0; other < endpoints_.size(); ++other) {
    if (other == node || !endpoints_[other]) continue;
    auto p = std::make_shared<Packet>();
    p->kind = Packet::Kind::kAnnounce;
    p->leg_src = node;
    p->leg_dst = other;
    p->publisher = node;
    p->topic = topic_ptr;
    p->payload = bytes;
    p->payload_size = static_cast<std::uint32_t>(bytes->size());
    p->wire_len = wire;
    mesh_send(node, other, std::move(p), wire, topic);
  }

  // Housekeeping rides on the announcement tick.
  const double now = kernel_.now_seconds();
  std::erase_if(e.completed, [now](const auto& kv) { return now - kv.second > 120.0; });
  std::erase_if(e.reasm, [now](const auto& kv) { return now - kv.second.started_at > 120.0; });
  check_gaps(node);
}

void CommsBus::on_announcement(NodeIndex at, const Packet& p) {
  Endpoint& e = ep(at);
  Announcement a;
  try {
    a = decode_announcement(*p.payload);
  } catch (const DecodeError&) {
    return;
  }
  const double now = kernel_.now_seconds();
  auto& peer = e.peers[p.leg_src];
  peer.subs = std::move(a.subscriptions);
  peer.last_seen = now;
  for (const auto& ns : a.namespaces) e.ns_table[ns] = NamespaceEntry{p.leg_src, now};
}

std::vector<NodeIndex> CommsBus::recipients(NodeIndex node, std::string_view topic) const {
  const Endpoint& e = ep(node);
  const double horizon = params_.discovery_expiry_periods * params_.discovery_period_s;
  const double now = kernel_.now_seconds();
  std::vector<NodeIndex> out;
  for (const auto& [peer, info] : e.peers) {
    if (!pinned(peer) && now - info.last_seen > horizon) continue;
    for (const auto& pat : info.subs) {
      if (pattern_matches(pat, topic)) {
        out.push_back(peer);
        break;
      }
    }
  }
  return out;
}

// ---- publishing -------------------------------------------------------------

PublishResult CommsBus::publish(NodeIndex node, std::string_view topic, Bytes payload, Qos qos) {
  const Topic t = Topic::parse(topic);
  Endpoint& e = ep(node);
  PublishResult res;
  if (!e.powered) {
    res.status = PublishStatus::kUnpowered;
    return res;
  }
  const std::string path = t.path();
  const double now = kernel_.now_seconds();
  if (const auto iv = params_.rates.interval_for(t.name)) {
    const auto it = e.last_pub.find(path);
    if (it != e.last_pub.end() && now - it->second < *iv - 1e-9) {
      res.status = PublishStatus::kRateLimited;
      return res;
    }
  }

  auto remote = recipients(node, path);
  bool local = false;
  for (const auto& s : e.subs) local = local || pattern_matches(s.pattern, path);
  if (remote.empty() && !local) {
    res.status = PublishStatus::kNoSubscribers;
    return res;
  }

  e.last_pub[path] = now;
  const std::uint64_t seq = ++e.seq[path];
  res.seq = seq;
  auto topic_ptr = std::make_shared<const std::string>(path);
  auto data = std::make_shared<const Bytes>(std::move(payload));

  auto make_proto = [&](NodeIndex to) {
    auto p = std::make_shared<Packet>();
    p->kind = Packet::Kind::kData;
    p->leg_src = node;
    p->leg_dst = to;
    p->publisher = node;
    p->topic = topic_ptr;
    p->seq = seq;
    p->qos = qos;
    p->published_at = now;
    p->payload = data;
    p->payload_size = static_cast<std::uint32_t>(data->size());
    return p;
  };
  auto chain = [&](NodeIndex dest) {
    auto& last = e.last_sent_to[{path, dest}];
    const auto prev = last;
    last = seq;
    return prev;
  };

  if (local) {
    Envelope env{path, node, seq, qos, now, now, data};
    kernel_.schedule_after(0.0, handler_, [this, node, env] { deliver_local(node, env); });
  }

  const bool via_gateway = gateway_ && node != gateway_->host && node != gateway_->ground &&
                           std::find(remote.begin(), remote.end(), gateway_->ground) != remote.end();
  if (gateway_ && node == gateway_->host) {
    // The gateway's own publications to ground go straight into its buffer.
    const auto g = std::find(remote.begin(), remote.end(), gateway_->ground);
    if (g != remote.end()) {
      remote.erase(g);
      Packet p = *make_proto(gateway_->ground);
      gateway_accept(p, data, chain(gateway_->ground));
      res.recipients += 1;
    }
  }
  if (via_gateway) {
    std::erase(remote, gateway_->ground);
    const bool host_subscribed = std::find(remote.begin(), remote.end(), gateway_->host) != remote.end();
    if (host_subscribed) std::erase(remote, gateway_->host);
    auto p = make_proto(gateway_->host);
    p->local = host_subscribed;
    p->prev_seq = host_subscribed ? chain(gateway_->host) : 0;
    p->forward_to_ground = true;
    p->prev_seq_forward = chain(gateway_->ground);
    send_envelope(node, gateway_->host, std::move(p), false);
    res.recipients += host_subscribed ? 2 : 1;
  }
  for (const NodeIndex to : remote) {
    auto p = make_proto(to);
    p->prev_seq = chain(to);
    send_envelope(node, to, std::move(p), false);
    res.recipients += 1;
  }
  return res;
}

void CommsBus::send_envelope(NodeIndex from, NodeIndex to, std::shared_ptr<Packet> proto, bool custodial) {
  Endpoint& e = ep(from);
  proto->frag_count = static_cast<std::uint32_t>(fragment_count(proto->payload_size));
  if (proto->qos == Qos::kBestEffort) {
    proto->out_key = next_out_key_++;
    const std::uint32_t total = proto->payload_size + params_.message_overhead_bytes;
    for (std::uint32_t i = 0; i < proto->frag_count; ++i) {
      auto p = std::make_shared<Packet>(*proto);
      p->frag_index = i;
      p->wire_offset = i * params_.mtu_bytes;
      p->wire_len = std::min(params_.mtu_bytes, total - p->wire_offset);
      mesh_send(from, to, p, p->wire_len, *p->topic);
    }
    return;
  }
  const std::uint64_t key = next_out_key_++;
  proto->out_key = key;
  OutEnvelope o;
  o.to = to;
  o.custodial = custodial;
  o.acked.assign(proto->frag_count, 0);
  o.retransmits.assign(proto->frag_count, 0);
  o.timers.resize(proto->frag_count);
  const std::string topic = *proto->topic;
  o.proto = std::move(proto);
  e.out.emplace(key, std::move(o));
  if (custodial) {
    OutEnvelope& out = e.out.at(key);
    out.started = true;
    for (std::uint32_t i = 0; i < out.proto->frag_count; ++i) transmit_fragment(from, to, key, i);
    return;
  }
  auto& leg = e.legs[{to, topic}];
  const std::size_t depth = depth_for(topic);
  if (leg.pending.size() + leg.in_flight >= depth) {
    auto& o2 = e.out.at(key);
    splice(e, *o2.proto, to);
    emit({kernel_.now_seconds(), EventKind::kSourceBufferFull, from, to, topic, o2.proto->seq, 1});
    e.out.erase(key);
    return;
  }
  leg.pending.push_back(key);
  pump(from, to, topic);
}

// An abandoned envelope that is still the tail of its destination chain is
// unlinked so the next publication does not wait for it.
void CommsBus::splice(Endpoint& e, const Packet& p, NodeIndex to) {
  auto unlink = [&](NodeIndex dest, std::uint64_t prev) {
    auto it = e.last_sent_to.find({*p.topic, dest});
    if (it != e.last_sent_to.end() && it->second == p.seq) it->second = prev;
  };
  if (p.forward_to_ground && gateway_) unlink(gateway_->ground, p.prev_seq_forward);
  if (p.local) unlink(to, p.prev_seq);
}

void CommsBus::gateway_poll() {
  gateway_dispatch();
  kernel_.schedule_after(params_.gateway_poll_s, handler_, [this] { gateway_poll(); });
}

void CommsBus::pump(NodeIndex from, NodeIndex to, const std::string& topic) {
  Endpoint& e = ep(from);
  auto it = e.legs.find({to, topic});
  if (it == e.legs.end()) return;
  auto& leg = it->second;
  const std::size_t depth = depth_for(topic);
  while (leg.in_flight < depth && !leg.pending.empty()) {
    const auto key = leg.pending.front();
    leg.pending.pop_front();
    auto oit = e.out.find(key);
    if (oit == e.out.end()) continue;
    oit->second.started = true;
    leg.in_flight += 1;
    for (std::uint32_t i = 0; i < oit->second.proto->frag_count; ++i) transmit_fragment(from, to, key, i);
  }
}

void CommsBus::transmit_fragment(NodeIndex from, NodeIndex to, std::uint64_t key, std::uint32_t index) {
  Endpoint& e = ep(from);
  OutEnvelope& o = e.out.at(key);
  auto p = std::make_shared<Packet>(*o.proto);
  const std::uint32_t total = p->payload_size + params_.message_overhead_bytes;
  p->frag_index = index;
  p->wire_offset = index * params_.mtu_bytes;
  p->wire_len = std::min(params_.mtu_bytes, total - p->wire_offset);
  const std::uint32_t len = p->wire_len;
  const std::string topic = *p->topic;
  mesh_send(from, to, std::move(p), len, topic);
  o.timers[index] = kernel_.schedule_after(params_.rto_s, handler_, [this, from, to, key, index] {
    on_fragment_timeout(from, to, key, index);
  });
}

void CommsBus::on_fragment_timeout(NodeIndex from, NodeIndex to, std::uint64_t key, std::uint32_t index) {
  Endpoint& e = ep(from);
  auto it = e.out.find(key);
  if (it == e.out.end() || it->second.acked[index]) return;
  OutEnvelope& o = it->second;
  if (o.custodial && gateway_ && !net_.link(gateway_->host, gateway_->ground).up) {
    finish_out(from, to, key, false);
    return;
  }
  if (o.retransmits[index] >= params_.retransmit_limit) {
    finish_out(from, to, key, false);
    return;
  }
  o.retransmits[index] += 1;
  transmit_fragment(from, to, key, index);
}

void CommsBus::finish_out(NodeIndex from, NodeIndex to, std::uint64_t key, bool success) {
  Endpoint& e = ep(from);
  auto it = e.out.find(key);
  if (it == e.out.end()) return;
  OutEnvelope o = std::move(it->second);
  e.out.erase(it);
  for (auto& t : o.timers) kernel_.cancel(t);
  const std::string topic = *o.proto->topic;
  const double now = kernel_.now_seconds();

  if (o.custodial) {
    gateway_->in_flight_bytes -= std::min<std::size_t>(gateway_->in_flight_bytes, o.proto->payload_size);
    if (!success) {
      HeldEnvelope h{o.proto->publisher, o.proto->topic, o.proto->seq, o.proto->prev_seq, o.proto->qos,
                     o.proto->published_at, o.proto->payload};
      gateway_->buffer.push_front(std::move(h));
    } else if (e.ack_observer) {
      e.ack_observer(topic, o.proto->seq, to, now);
    }
    gateway_dispatch();
    return;
  }

  auto leg = e.legs.find({to, topic});
  if (leg != e.legs.end() && leg->second.in_flight > 0) leg->second.in_flight -= 1;
  if (success) {
    if (e.ack_observer) e.ack_observer(topic, o.proto->seq, to, now);
  } else {
    splice(e, *o.proto, to);
    emit({now, EventKind::kDeliveryFailure, from, to, topic, o.proto->seq, 1});
  }
  pump(from, to, topic);
}

void CommsBus::mesh_send(NodeIndex from, NodeIndex to, std::shared_ptr<const Packet> pkt, std::uint32_t bytes,
                         const std::string& account_topic) {
  auto& tc = ep(from).traffic[account_topic];
  tc.bytes_out += bytes;
  mesh::Frame f;
  f.bytes = bytes;
  const auto slash = account_topic.find('/');
  f.account = account_topic.substr(0, slash);
  f.payload = std::move(pkt);
  net_.send(from, to, std::move(f));
}

// ---- receiving ---------------------------------------------------------------

void CommsBus::on_frame(NodeIndex at, const mesh::Frame& f) {
  const auto* pp = std::any_cast<std::shared_ptr<const Packet>>(&f.payload);
  if (pp == nullptr || !*pp) return;
  const Packet& p = **pp;
  Endpoint& e = ep(at);
  if (!e.powered) return;
  e.traffic[*p.topic].bytes_in += f.bytes;
  switch (p.kind) {
    case Packet::Kind::kData: on_data(at, p); break;
    case Packet::Kind::kAck: on_ack(at, p); break;
    case Packet::Kind::kAnnounce: on_announcement(at, p); break;
  }
}

void CommsBus::on_data(NodeIndex at, const Packet& p) {
  Endpoint& e = ep(at);
  if (p.qos == Qos::kReliable) {
    auto ack = std::make_shared<Packet>();
    ack->kind = Packet::Kind::kAck;
    ack->leg_src = at;
    ack->leg_dst = p.leg_src;
    ack->publisher = p.publisher;
    ack->topic = p.topic;
    ack->seq = p.seq;
    ack->out_key = p.out_key;
    ack->frag_index = p.frag_index;
    ack->wire_len = params_.ack_bytes;
    mesh_send(at, p.leg_src, std::move(ack), params_.ack_bytes, *p.topic);
  }
  const auto key = std::make_pair(p.leg_src, p.out_key);
  const bool reliable = p.qos == Qos::kReliable;
  if (reliable && e.completed.count(key) != 0) return;
  std::shared_ptr<const Bytes> payload;
  if (p.frag_count == 1) {
    payload = p.payload;
  } else {
    auto& r = e.reasm[key];
    if (r.got.empty()) {
      r.data.assign(p.payload_size, 0);
      r.got.assign(p.frag_count, 0);
      r.started_at = kernel_.now_seconds();
    }
    if (p.frag_index >= r.got.size() || r.got[p.frag_index]) return;
    r.got[p.frag_index] = 1;
    r.count += 1;
    // Copy the payload share of this fragment's wire range.
    const std::uint32_t ovh = params_.message_overhead_bytes;
    const std::uint32_t lo = std::max(p.wire_offset, ovh);
    const std::uint32_t hi = std::min(p.wire_offset + p.wire_len, ovh + p.payload_size);
    if (hi > lo) std::memcpy(r.data.data() + (lo - ovh), p.payload->data() + (lo - ovh), hi - lo);
    if (r.count < r.got.size()) return;
    payload = std::make_shared<const Bytes>(std::move(r.data));
    e.reasm.erase(key);
  }
  if (reliable) e.completed[key] = kernel_.now_seconds();
  complete(at, p, std::move(payload));
}

void CommsBus::on_ack(NodeIndex at, const Packet& p) {
  Endpoint& e = ep(at);
  auto it = e.out.find(p.out_key);
  if (it == e.out.end()) return;
  OutEnvelope& o = it->second;
  if (o.to != p.leg_src || p.frag_index >= o.acked.size() || o.acked[p.frag_index]) return;
  o.acked[p.frag_index] = 1;
  o.acked_count += 1;
  kernel_.cancel(o.timers[p.frag_index]);
  if (o.acked_count == o.acked.size()) finish_out(at, o.to, p.out_key, true);
}

void CommsBus::complete(NodeIndex at, const Packet& p, std::shared_ptr<const Bytes> payload) {
  if (p.forward_to_ground && gateway_ && at == gateway_->host) gateway_accept(p, payload, p.prev_seq_forward);
  if (!p.local) return;
  Envelope env{*p.topic, p.publisher, p.seq, p.qos, p.published_at, kernel_.now_seconds(), std::move(payload)};
  order_and_deliver(at, std::move(env), p.prev_seq);
}

void CommsBus::order_and_deliver(NodeIndex at, Envelope env, std::uint64_t prev_seq) {
  Endpoint& e = ep(at);
  auto& s = e.streams[{env.publisher, env.topic}];
  if (env.qos == Qos::kBestEffort) {
    if (s.started && env.seq <= s.last) return;
    s.started = true;
    s.last = env.seq;
    deliver_local(at, env);
    return;
  }
  if (s.started && env.seq <= s.last) return;
  const bool in_order = s.started ? prev_seq == s.last : prev_seq == 0;
  if (!in_order) {
    s.waiting.emplace(prev_seq, Endpoint::Stream::Waiting{std::move(env), kernel_.now_seconds()});
    return;
  }
  s.started = true;
  s.last = env.seq;
  const auto key = std::make_pair(env.publisher, env.topic);
  deliver_local(at, env);
  while (true) {
    auto& st = ep(at).streams[key];
    auto w = st.waiting.find(st.last);
    if (w == st.waiting.end()) break;
    Envelope next = std::move(w->second.env);
    st.waiting.erase(w);
    st.last = next.seq;
    deliver_local(at, next);
  }
}

void CommsBus::check_gaps(NodeIndex at) {
  Endpoint& e = ep(at);
  const double now = kernel_.now_seconds();
  for (auto& [key, s] : e.streams) {
    while (!s.waiting.empty()) {
      auto oldest = std::min_element(s.waiting.begin(), s.waiting.end(), [](const auto& a, const auto& b) {
        return a.second.env.seq < b.second.env.seq;
      });
      if (now - oldest->second.since < params_.gap_timeout_s) break;
      Envelope env = std::move(oldest->second.env);
      s.waiting.erase(oldest);
      e.gaps += 1;
      emit({now, EventKind::kGapSkipped, at, env.publisher, env.topic, env.seq, 1});
      s.started = true;
      s.last = env.seq;
      deliver_local(at, env);
      for (auto w = s.waiting.find(s.last); w != s.waiting.end(); w = s.waiting.find(s.last)) {
        Envelope next = std::move(w->second.env);
        s.waiting.erase(w);
        s.last = next.seq;
        deliver_local(at, next);
      }
    }
  }
}

void CommsBus::deliver_local(NodeIndex at, const Envelope& env) {
  Endpoint& e = ep(at);
  if (!e.powered) return;
  Envelope out = env;
  out.delivered_at = kernel_.now_seconds();
  const auto subs = e.subs;
  for (const auto& s : subs) {
    if (pattern_matches(s.pattern, out.topic) && s.cb) s.cb(out);
  }
}

// ---- gateway -------------------------------------------------------------------

void CommsBus::gateway_accept(const Packet& p, std::shared_ptr<const Bytes> payload, std::uint64_t prev_seq) {
  auto& buf = gateway_->buffer;
  const auto dropped_before = buf.best_effort_dropped();
  HeldEnvelope h{p.publisher, p.topic, p.seq, prev_seq, p.qos, p.published_at, std::move(payload)};
  const auto offer = buf.push(std::move(h));
  const double now = kernel_.now_seconds();
  if (offer == BufferOffer::kRejectedReliable) {
    emit({now, EventKind::kGatewayOverflow, gateway_->host, p.publisher, *p.topic, p.seq, buf.reliable_rejected()});
  }
  const auto dropped = buf.best_effort_dropped() - dropped_before;
  if (dropped > 0) emit({now, EventKind::kGatewayDropped, gateway_->host, p.publisher, *p.topic, p.seq, dropped});
  gateway_dispatch();
}

void CommsBus::gateway_dispatch() {
  if (!gateway_) return;
  Gateway& g = *gateway_;
  if (!ep(g.host).powered || !net_.link(g.host, g.ground).up) return;
  while (!g.buffer.empty() && (g.in_flight_bytes == 0 || g.in_flight_bytes + g.buffer.front().bytes() <=
                                                            params_.gateway_window_bytes)) {
    HeldEnvelope h = g.buffer.pop();
    auto p = std::make_shared<Packet>();
    p->kind = Packet::Kind::kData;
    p->leg_src = g.host;
    p->leg_dst = g.ground;
    p->publisher = h.publisher;
    p->topic = h.topic;
    p->seq = h.seq;
    p->prev_seq = h.prev_seq;
    p->qos = h.qos;
    p->published_at = h.published_at;
    p->payload = h.payload;
    p->payload_size = static_cast<std::uint32_t>(h.bytes());
    if (h.qos == Qos::kReliable) g.in_flight_bytes += h.bytes();
    send_envelope(g.host, g.ground, std::move(p), h.qos == Qos::kReliable);
  }
}

}  // namespace lunasim::comms
