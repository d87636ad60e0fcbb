#include "lunasim/mesh/network.hpp"

#include <algorithm>
#include <cstdio>

namespace lunasim::mesh {

std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::kNoRoute: return "no_route";
    case DropReason::kRetryLimit: return "retry_limit";
    case DropReason::kQueueFull: return "queue_full";
    case DropReason::kNodeDown: return "node_down";
    case DropReason::kHopLimit: return "hop_limit";
    case DropReason::kLinkLost: return "link_lost";
  }
  return "?";
}

MeshNetwork::MeshNetwork(sim::Kernel& kernel, NetParams params, LinkCurve curve)
    : kernel_(kernel),
      handler_(kernel.register_handler("meshnet")),
      params_(params),
      curve_(std::move(curve)),
      rng_(kernel.fork_rng("meshnet")) {
  params_.validate();
  curve_.validate();
}

NodeIndex MeshNetwork::add_node(std::string name, Vec2 position, bool radio) {
  if (name.empty()) throw MeshError("node name must not be empty");
  if (find(name)) throw MeshError("duplicate node name: " + name);
  const std::size_t old_n = nodes_.size();
  const std::size_t n = old_n + 1;
  std::vector<LinkSlot> grown(n * n);
  for (std::size_t a = 0; a < old_n; ++a) {
    for (std::size_t b = 0; b < old_n; ++b) grown[a * n + b] = links_[a * old_n + b];
  }
  links_ = std::move(grown);

  Node node;
  node.name = std::move(name);
  node.position = position;
  node.radio = radio;
  node.ifaces.resize(1);
  nodes_.push_back(std::move(node));
  tables_.emplace_back();

  const auto idx = static_cast<NodeIndex>(old_n);
  for (NodeIndex other = 0; other < idx; ++other) {
    LinkSlot& s = slot(other, idx);
    s.state.a = other;
    s.state.b = idx;
    s.exists = radio && nodes_[other].radio;
  }
  if (started_) sample_links();
  return idx;
}

void MeshNetwork::add_fixed_link(NodeIndex a, NodeIndex b, FixedLink link) {
  if (a >= nodes_.size() || b >= nodes_.size() || a == b) throw MeshError("bad fixed link endpoints");
  if (!(link.rate_bps > 0.0) || !(link.e_f >= 0.0 && link.e_f < 1.0) || link.extra_delay_s < 0.0) {
    throw MeshError("bad fixed link parameters");
  }
  LinkSlot& s = slot(a, b);
  s.exists = true;
  s.in_range = true;
  s.state.wired = true;
  s.state.rate_bps = link.rate_bps;
  s.state.e_f = link.e_f;
  s.state.extra_delay_s = link.extra_delay_s;
  s.fixed_e_f = link.e_f;
  for (NodeIndex end : {a, b}) {
    Interface iface;
    iface.peer = end == a ? b : a;
    nodes_[end].ifaces.push_back(std::move(iface));
  }
  recompute_up(s);
}

std::optional<NodeIndex> MeshNetwork::find(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return static_cast<NodeIndex>(i);
  }
  return std::nullopt;
}

NodeIndex MeshNetwork::require(std::string_view name) const {
  auto n = find(name);
  if (!n) throw MeshError("unknown node: " + std::string(name));
  return *n;
}

std::size_t MeshNetwork::slot_index(NodeIndex a, NodeIndex b) const {
  if (a > b) std::swap(a, b);
  return static_cast<std::size_t>(a) * nodes_.size() + b;
}

const LinkState& MeshNetwork::link(NodeIndex a, NodeIndex b) const {
  if (a >= nodes_.size() || b >= nodes_.size() || a == b) throw MeshError("bad link endpoints");
  return slot(a, b).state;
}

LinkState& MeshNetwork::link_mut(NodeIndex a, NodeIndex b) {
  if (a >= nodes_.size() || b >= nodes_.size() || a == b) throw MeshError("bad link endpoints");
  return slot(a, b).state;
}

void MeshNetwork::recompute_up(LinkSlot& s) {
  const bool ends_up = nodes_[s.state.a].up && nodes_[s.state.b].up;
  s.state.up = s.exists && s.in_range && s.blackouts == 0 && ends_up;
}

void MeshNetwork::start() {
  if (started_) return;
  started_ = true;
  sample_links();
}

void MeshNetwork::sample_links() {
  const std::size_t n = nodes_.size();
  for (NodeIndex a = 0; a < n; ++a) {
    for (NodeIndex b = a + 1; b < n; ++b) {
      LinkSlot& s = slot(a, b);
      if (!s.exists) continue;
      if (!s.state.wired) {
        const double d = distance(nodes_[a].position, nodes_[b].position);
        const LinkQuality q = link_quality(d, curve_);
        s.state.distance_m = d;
        s.in_range = q.up;
        if (q.up) {
          s.state.rate_bps = q.rate_bps;
          s.state.e_f = q.e_f;
        } else {
          s.state.e_f = curve_.error_cap;
        }
      }
      s.state.load = std::min(1.0, s.busy_s / params_.link_sample_period_s);
      s.busy_s = 0.0;
      recompute_up(s);
      // Routing learns about breaks (including dead neighbours) only here.
      if (s.reported_up && !s.state.up) link_went_down(a, b);
      s.reported_up = s.state.up;
    }
  }
  if (started_) {
    kernel_.schedule_after(params_.link_sample_period_s, handler_, [this] { sample_links(); });
  }
}

void MeshNetwork::link_went_down(NodeIndex a, NodeIndex b) {
  for (const auto d : tables_[a].invalidate_via(b)) note_invalidation(a, d, "link_down");
  for (const auto d : tables_[b].invalidate_via(a)) note_invalidation(b, d, "link_down");
}

std::vector<NodeIndex> MeshNetwork::neighbors(NodeIndex n) const {
  std::vector<NodeIndex> out;
  for (NodeIndex m = 0; m < nodes_.size(); ++m) {
    if (m != n && slot(n, m).state.up) out.push_back(m);
  }
  return out;
}

std::size_t MeshNetwork::iface_for(NodeIndex node, NodeIndex next_hop) const {
  if (!slot(node, next_hop).state.wired) return 0;
  const auto& ifs = nodes_[node].ifaces;
  for (std::size_t i = 1; i < ifs.size(); ++i) {
    if (ifs[i].peer == next_hop) return i;
  }
  return 0;
}

std::optional<RouteEntry> MeshNetwork::route(NodeIndex at, NodeIndex dest) const {
  return tables_.at(at).lookup(dest, kernel_.now_seconds());
}

std::vector<NodeIndex> MeshNetwork::path(NodeIndex src, NodeIndex dst) const {
  std::vector<NodeIndex> out{src};
  NodeIndex cur = src;
  while (cur != dst) {
    const auto r = route(cur, dst);
    if (!r || out.size() > nodes_.size()) return {};
    cur = r->next_hop;
    out.push_back(cur);
  }
  return out;
}

FlowCounters MeshNetwork::flow() const {
  FlowCounters f = flow_;
  f.in_flight = live_.size();
  return f;
}

bool MeshNetwork::flow_balanced() const {
  const auto f = flow();
  return f.accounting_errors == 0 && f.sent == f.delivered + f.dropped + f.in_flight;
}

void MeshNetwork::record_tx(NodeIndex from, NodeIndex to, FrameKind kind, std::uint32_t bytes,
                            const std::string* account) {
  wire_.frames += 1;
  wire_.bytes += bytes;
  if (kind == FrameKind::kData) {
    wire_.data_bytes += bytes;
  } else {
    wire_.control_bytes += bytes;
  }
  static const std::string kMeshAccount = "mesh";
  const std::string& acct = account != nullptr && !account->empty() ? *account : kMeshAccount;
  auto it = wire_by_account_.find(acct);
  if (it == wire_by_account_.end()) it = wire_by_account_.emplace(acct, WireCounters{}).first;
  it->second.frames += 1;
  it->second.bytes += bytes;
  (kind == FrameKind::kData ? it->second.data_bytes : it->second.control_bytes) += bytes;
  if (tx_observer_) tx_observer_(TxRecord{kernel_.now_seconds(), from, to, kind, bytes, &acct});
}

// ---- data plane -----------------------------------------------------------

std::uint64_t MeshNetwork::send(NodeIndex src, NodeIndex dst, Frame frame) {
  if (src >= nodes_.size() || dst >= nodes_.size()) throw MeshError("send: unknown node");
  if (src == dst) throw MeshError("send: src equals dst");
  const double now = kernel_.now_seconds();
  frame.id = next_frame_id_++;
  frame.src = src;
  frame.dst = dst;
  frame.sent_at = now;
  frame.hops = 0;
  flow_.sent += 1;
  live_.insert(frame.id);
  const std::uint64_t id = frame.id;
  if (!nodes_[src].up) {
    drop(src, std::move(frame), DropReason::kNodeDown);
    return id;
  }
  Discovery& d = nodes_[src].discovery[dst];
  d.last_use = now;
  if (route(src, dst) && !d.active && now - d.last_preq >= params_.preq_interval_s) {
    start_discovery(src, dst);
  }
  enqueue(src, std::move(frame));
  return id;
}

void MeshNetwork::discover(NodeIndex src, NodeIndex dst) {
  if (src >= nodes_.size() || dst >= nodes_.size() || src == dst) throw MeshError("discover: bad nodes");
  if (!nodes_[src].up) return;
  nodes_[src].discovery[dst].last_use = kernel_.now_seconds();
  start_discovery(src, dst);
}

void MeshNetwork::enqueue(NodeIndex node, Frame frame) {
  const auto r = route(node, frame.dst);
  if (!r) {
    if (node == frame.src) {
      buffer_for_discovery(node, std::move(frame));
    } else {
      const NodeIndex src = frame.src, dst = frame.dst;
      drop(node, std::move(frame), DropReason::kNoRoute);
      send_perr(node, src, dst);
    }
    return;
  }
  const std::size_t i = iface_for(node, r->next_hop);
  auto& iface = nodes_[node].ifaces[i];
  if (iface.queue.size() >= params_.queue_limit) {
    drop(node, std::move(frame), DropReason::kQueueFull);
    return;
  }
  iface.queue.push_back(std::move(frame));
  kick(node, i);
}

void MeshNetwork::kick(NodeIndex node, std::size_t i) {
  while (true) {
    auto& iface = nodes_[node].ifaces[i];
    if (iface.busy || iface.queue.empty() || !nodes_[node].up) return;
    Frame f = std::move(iface.queue.front());
    iface.queue.pop_front();
    const auto r = route(node, f.dst);
    if (!r) {
      enqueue(node, std::move(f));
      continue;
    }
    const std::size_t j = iface_for(node, r->next_hop);
    if (j != i) {
      nodes_[node].ifaces[j].queue.push_back(std::move(f));
      kick(node, j);
      continue;
    }
    attempt(node, i, r->next_hop, Pending{std::move(f), 0});
    return;
  }
}

void MeshNetwork::attempt(NodeIndex node, std::size_t i, NodeIndex next, Pending p) {
  LinkSlot& s = slot(node, next);
  const double rate = s.state.rate_bps > 0.0 ? s.state.rate_bps : curve_.steps.back().rate_bps;
  const double dur = params_.overhead_s + 8.0 * p.frame.bytes / rate;
  nodes_[node].ifaces[i].busy = true;
  s.busy_s += dur;
  p.attempts += 1;
  record_tx(node, next, FrameKind::kData, p.frame.bytes, &p.frame.account);
  kernel_.schedule_after(dur, handler_, [this, node, i, next, p = std::move(p)]() mutable {
    auto& iface = nodes_[node].ifaces[i];
    if (!nodes_[node].up) {
      iface.busy = false;
      drop(node, std::move(p.frame), DropReason::kNodeDown);
      return;
    }
    LinkSlot& ls = slot(node, next);
    const double e_f = ls.state.wired ? ls.fixed_e_f : ls.state.e_f;
    const bool ok = ls.state.up && rng_.uniform() >= e_f;
    update_per(ls.state, ok, params_);
    if (ok) {
      p.frame.hops += 1;
      const double delay = ls.state.extra_delay_s;
      if (delay > 0.0) {
        kernel_.schedule_after(delay, handler_, [this, node, next, f = std::move(p.frame)]() mutable {
          arrive(node, next, std::move(f));
        });
      } else {
        receive(next, std::move(p.frame));
      }
      iface.busy = false;
      kick(node, i);
      return;
    }
    if (p.attempts <= params_.retry_limit) {
      attempt(node, i, next, std::move(p));
      return;
    }
    iface.busy = false;
    for (const auto d : tables_[node].invalidate_via(next)) note_invalidation(node, d, "retry_limit");
    const NodeIndex src = p.frame.src, dst = p.frame.dst;
    drop(node, std::move(p.frame), DropReason::kRetryLimit);
    if (node != src) send_perr(node, src, dst);
    kick(node, i);
  });
}

// End of a delayed hop: a link that went down while the frame was in
// transit loses it.
void MeshNetwork::arrive(NodeIndex from, NodeIndex node, Frame frame) {
  if (!slot(from, node).state.up) {
    drop(from, std::move(frame), DropReason::kLinkLost);
    return;
  }
  receive(node, std::move(frame));
}

void MeshNetwork::receive(NodeIndex node, Frame frame) {
  if (!nodes_[node].up) {
    drop(node, std::move(frame), DropReason::kNodeDown);
    return;
  }
  if (node == frame.dst) {
    flow_.delivered += 1;
    if (live_.erase(frame.id) == 0) flow_.accounting_errors += 1;
    if (nodes_[node].on_deliver) nodes_[node].on_deliver(frame);
    return;
  }
  if (frame.hops >= params_.max_hops) {
    drop(node, std::move(frame), DropReason::kHopLimit);
    return;
  }
  const double expiry = kernel_.now_seconds() + params_.route_ttl_s;
  tables_[node].refresh(frame.dst, expiry);
  tables_[node].refresh(frame.src, expiry);
  enqueue(node, std::move(frame));
}

void MeshNetwork::drop(NodeIndex, Frame frame, DropReason reason) {
  flow_.dropped += 1;
  if (live_.erase(frame.id) == 0) flow_.accounting_errors += 1;
  const auto& h = nodes_[frame.src].on_drop;
  if (h) h(frame, reason);
}

void MeshNetwork::buffer_for_discovery(NodeIndex node, Frame frame) {
  const NodeIndex dst = frame.dst;
  Discovery& d = nodes_[node].discovery[dst];
  if (d.buffered.size() >= params_.queue_limit) {
    drop(node, std::move(frame), DropReason::kQueueFull);
    return;
  }
  d.buffered.push_back(std::move(frame));
  if (!d.active) start_discovery(node, dst);
}

void MeshNetwork::start_discovery(NodeIndex src, NodeIndex dst) {
  Node& node = nodes_[src];
  Discovery& d = node.discovery[dst];
  const double now = kernel_.now_seconds();
  if (!d.active) {
    d.active = true;
    d.attempts = 0;
  }
  d.attempts += 1;
  d.last_preq = now;
  node.seq += 1;
  node.preq_id += 1;
  Control c;
  c.kind = FrameKind::kPreq;
  c.orig = src;
  c.orig_seq = node.seq;
  c.target = dst;
  const RouteEntry* known = tables_[src].entry(dst);
  c.target_seq = known != nullptr ? known->seqnum : 0;
  c.preq_id = node.preq_id;
  node.preq_seen[{src, c.preq_id}] = 0.0;
  broadcast_preq(src, c);
  kernel_.cancel(d.timer);
  d.timer = kernel_.schedule_after(params_.discovery_timeout_s, handler_,
                                   [this, src, dst] { discovery_timeout(src, dst); });
}

void MeshNetwork::discovery_timeout(NodeIndex src, NodeIndex dst) {
  Discovery& d = nodes_[src].discovery[dst];
  if (!d.active) return;
  if (route(src, dst)) {
    flush_discovery(src, dst);
    return;
  }
  if (!nodes_[src].up) {
    d.active = false;
    return;
  }
  if (d.attempts <= params_.discovery_retries) {
    start_discovery(src, dst);
    return;
  }
  d.active = false;
  d.attempts = 0;
  auto frames = std::move(d.buffered);
  d.buffered.clear();
  for (auto& f : frames) drop(src, std::move(f), DropReason::kNoRoute);
}

void MeshNetwork::flush_discovery(NodeIndex src, NodeIndex dst) {
  Discovery& d = nodes_[src].discovery[dst];
  kernel_.cancel(d.timer);
  d.active = false;
  d.attempts = 0;
  auto frames = std::move(d.buffered);
  d.buffered.clear();
  for (auto& f : frames) enqueue(src, std::move(f));
}

// ---- control plane --------------------------------------------------------

void MeshNetwork::send_control(NodeIndex from, NodeIndex to, const Control& c) {
  const LinkSlot& s = slot(from, to);
  if (!s.state.up) return;
  const double bits = 8.0 * params_.control_frame_bytes;
  const double dur = params_.overhead_s + bits / s.state.rate_bps + s.state.extra_delay_s;
  kernel_.schedule_after(dur, handler_, [this, from, to, c] {
    if (nodes_[to].up && slot(from, to).state.up) on_control(to, from, c);
  });
}

void MeshNetwork::broadcast_preq(NodeIndex from, const Control& c) {
  bool radio_sent = false;
  for (const NodeIndex n : neighbors(from)) {
    if (slot(from, n).state.wired) {
      record_tx(from, n, FrameKind::kPreq, params_.control_frame_bytes, nullptr);
    } else if (!radio_sent) {
      record_tx(from, from, FrameKind::kPreq, params_.control_frame_bytes, nullptr);
      radio_sent = true;
    }
    send_control(from, n, c);
  }
}

void MeshNetwork::on_control(NodeIndex at, NodeIndex from, Control c) {
  switch (c.kind) {
    case FrameKind::kPreq: on_preq(at, from, c); break;
    case FrameKind::kPrep: on_prep(at, from, c); break;
    case FrameKind::kPerr: on_perr(at, from, c); break;
    case FrameKind::kData: break;
  }
}

void MeshNetwork::on_preq(NodeIndex at, NodeIndex from, Control c) {
  if (at == c.orig) return;
  const double lm = metric_of(from, at);
  if (!(lm < kInfiniteMetric)) return;
  c.metric += lm;
  c.hops += 1;
  Node& node = nodes_[at];
  const auto key = std::make_pair(c.orig, c.preq_id);
  const auto seen = node.preq_seen.find(key);
  const bool first = seen == node.preq_seen.end();
  if (!first && seen->second <= c.metric) return;
  node.preq_seen[key] = c.metric;

  const double now = kernel_.now_seconds();
  offer_route(at, c.orig, RouteEntry{from, c.metric, c.orig_seq, now + params_.route_ttl_s, c.hops, true}, "preq");

  if (at == c.target) {
    if (first) node.seq = std::max(node.seq, c.target_seq) + 1;
    Control rep;
    rep.kind = FrameKind::kPrep;
    rep.orig = at;
    rep.orig_seq = node.seq;
    rep.target = c.orig;
    rep.reply_to = c.orig;
    const auto back = route(at, c.orig);
    if (back) {
      record_tx(at, back->next_hop, FrameKind::kPrep, params_.control_frame_bytes, nullptr);
      send_control(at, back->next_hop, rep);
    }
    return;
  }
  if (c.hops < params_.max_hops) broadcast_preq(at, c);
}

void MeshNetwork::on_prep(NodeIndex at, NodeIndex from, Control c) {
  const double lm = metric_of(from, at);
  if (!(lm < kInfiniteMetric)) return;
  c.metric += lm;
  c.hops += 1;
  const double now = kernel_.now_seconds();
  offer_route(at, c.orig, RouteEntry{from, c.metric, c.orig_seq, now + params_.route_ttl_s, c.hops, true}, "prep");
  if (at == c.reply_to) {
    if (route(at, c.orig)) {
      auto it = nodes_[at].discovery.find(c.orig);
      if (it != nodes_[at].discovery.end() && it->second.active) flush_discovery(at, c.orig);
    }
    return;
  }
  const auto next = route(at, c.reply_to);
  if (!next || c.hops >= params_.max_hops) return;
  record_tx(at, next->next_hop, FrameKind::kPrep, params_.control_frame_bytes, nullptr);
  send_control(at, next->next_hop, c);
}

void MeshNetwork::send_perr(NodeIndex at, NodeIndex src, NodeIndex dst) {
  if (at == src) return;
  const double now = kernel_.now_seconds();
  const NodeIndex key = src * static_cast<NodeIndex>(nodes_.size()) + dst;
  auto& last = nodes_[at].perr_sent[key];
  if (last > 0.0 && now - last < 1.0) return;
  last = now;
  const auto back = route(at, src);
  if (!back) return;
  Control c;
  c.kind = FrameKind::kPerr;
  c.orig = at;
  c.target = dst;
  c.reply_to = src;
  record_tx(at, back->next_hop, FrameKind::kPerr, params_.control_frame_bytes, nullptr);
  send_control(at, back->next_hop, c);
}

void MeshNetwork::on_perr(NodeIndex at, NodeIndex from, const Control& c) {
  const RouteEntry* e = tables_[at].entry(c.target);
  if (e != nullptr && e->valid && e->next_hop == from) {
    tables_[at].invalidate(c.target);
    note_invalidation(at, c.target, "perr");
  }
  if (at == c.reply_to) return;
  const auto next = route(at, c.reply_to);
  if (!next) return;
  record_tx(at, next->next_hop, FrameKind::kPerr, params_.control_frame_bytes, nullptr);
  send_control(at, next->next_hop, c);
}

// ---- bookkeeping ----------------------------------------------------------

bool MeshNetwork::offer_route(NodeIndex at, NodeIndex dest, const RouteEntry& e, std::string_view why) {
  if (at == dest) return false;
  const auto outcome = tables_[at].offer(dest, e);
  if (outcome != UpdateOutcome::kInstalled && outcome != UpdateOutcome::kImproved) return false;
  route_changes_ += 1;
  if (keep_route_log_) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.6f %s dest=%s next=%s metric=%.9g seq=%u hops=%d %.*s",
                  kernel_.now_seconds(), nodes_[at].name.c_str(), nodes_[dest].name.c_str(),
                  nodes_[e.next_hop].name.c_str(), e.metric, e.seqnum, e.hops, static_cast<int>(why.size()),
                  why.data());
    route_log_.emplace_back(buf);
  }
  audit(dest);
  return true;
}

void MeshNetwork::note_invalidation(NodeIndex at, NodeIndex dest, std::string_view why) {
  route_changes_ += 1;
  if (keep_route_log_) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.6f %s dest=%s invalid %.*s", kernel_.now_seconds(),
                  nodes_[at].name.c_str(), nodes_[dest].name.c_str(), static_cast<int>(why.size()), why.data());
    route_log_.emplace_back(buf);
  }
}

void MeshNetwork::audit(NodeIndex dest) {
  if (!next_hop_graph_acyclic(tables_, dest, kernel_.now_seconds())) loop_violations_ += 1;
}

void MeshNetwork::inject_blackout(double t0, double t1, std::vector<LinkSelector> links) {
  if (!(t1 > t0)) return;
  std::vector<std::size_t> slots;
  for (const auto& sel : links) {
    const NodeIndex a = require(sel.a);
    if (sel.b == "*") {
      for (NodeIndex b = 0; b < nodes_.size(); ++b) {
        if (b != a && slot(a, b).exists) slots.push_back(slot_index(a, b));
      }
    } else {
      const NodeIndex b = require(sel.b);
      if (a == b) throw MeshError("blackout link endpoints must differ");
      slots.push_back(slot_index(a, b));
    }
  }
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
  const double now = kernel_.now_seconds();
  kernel_.schedule(std::max(t0, now), handler_, [this, slots] {
    for (const auto i : slots) {
      LinkSlot& s = links_[i];
      s.blackouts += 1;
      const bool was = s.state.up;
      recompute_up(s);
      if (was && !s.state.up) link_went_down(s.state.a, s.state.b);
      s.reported_up = s.state.up;
    }
  });
  kernel_.schedule(std::max(t1, now), handler_, [this, slots] {
    for (const auto i : slots) {
      LinkSlot& s = links_[i];
      s.blackouts = std::max(0, s.blackouts - 1);
      recompute_up(s);
    }
  });
}

void MeshNetwork::on_node_down(NodeIndex n) {
  Node& node = nodes_.at(n);
  if (!node.up) return;
  node.up = false;
  for (auto& iface : node.ifaces) {
    auto q = std::move(iface.queue);
    iface.queue.clear();
    for (auto& f : q) drop(n, std::move(f), DropReason::kNodeDown);
  }
  for (auto& [dst, d] : node.discovery) {
    kernel_.cancel(d.timer);
    d.active = false;
    auto q = std::move(d.buffered);
    d.buffered.clear();
    for (auto& f : q) drop(n, std::move(f), DropReason::kNodeDown);
  }
  tables_[n].clear();
  for (NodeIndex m = 0; m < nodes_.size(); ++m) {
    if (m != n) recompute_up(slot(n, m));
  }
}

void MeshNetwork::on_node_up(NodeIndex n) {
  Node& node = nodes_.at(n);
  if (node.up) return;
  node.up = true;
  node.preq_seen.clear();
  for (NodeIndex m = 0; m < nodes_.size(); ++m) {
    if (m != n) recompute_up(slot(n, m));
  }
}

}  // namespace lunasim::mesh
