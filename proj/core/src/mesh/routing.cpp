#include "lunasim/mesh/routing.hpp"

namespace lunasim::mesh {

std::optional<RouteEntry> RoutingTable::lookup(NodeIndex dest, double now) const {
  const auto it = routes_.find(dest);
  if (it == routes_.end() || !it->second.usable(now)) return std::nullopt;
  return it->second;
}

const RouteEntry* RoutingTable::entry(NodeIndex dest) const {
  const auto it = routes_.find(dest);
  return it == routes_.end() ? nullptr : &it->second;
}

UpdateOutcome RoutingTable::offer(NodeIndex dest, const RouteEntry& candidate) {
  auto it = routes_.find(dest);
  if (it == routes_.end()) {
    routes_.emplace(dest, candidate).first->second.valid = true;
    return UpdateOutcome::kInstalled;
  }
  RouteEntry& cur = it->second;
  const bool live = cur.valid;
  bool accept = false;
  if (!live) {
    accept = candidate.seqnum >= cur.seqnum;
  } else if (candidate.seqnum > cur.seqnum) {
    accept = true;
  } else if (candidate.seqnum == cur.seqnum && candidate.metric < cur.metric) {
    accept = true;
  }
  if (!accept) {
    if (live && candidate.seqnum == cur.seqnum && candidate.next_hop == cur.next_hop &&
        candidate.expires_at > cur.expires_at) {
      cur.expires_at = candidate.expires_at;
      return UpdateOutcome::kRefreshed;
    }
    return UpdateOutcome::kRejected;
  }
  const bool improved = live && candidate.seqnum == cur.seqnum;
  cur = candidate;
  cur.valid = true;
  return improved ? UpdateOutcome::kImproved : UpdateOutcome::kInstalled;
}

bool RoutingTable::invalidate(NodeIndex dest) {
  auto it = routes_.find(dest);
  if (it == routes_.end() || !it->second.valid) return false;
  it->second.valid = false;
  it->second.seqnum += 1;
  return true;
}

std::vector<NodeIndex> RoutingTable::invalidate_via(NodeIndex neighbor) {
  std::vector<NodeIndex> out;
  for (auto& [dest, e] : routes_) {
    if (e.valid && e.next_hop == neighbor) {
      e.valid = false;
      e.seqnum += 1;
      out.push_back(dest);
    }
  }
  return out;
}

void RoutingTable::refresh(NodeIndex dest, double expires_at) {
  auto it = routes_.find(dest);
  if (it != routes_.end() && it->second.valid && expires_at > it->second.expires_at) {
    it->second.expires_at = expires_at;
  }
}

void RoutingTable::clear() {
  for (auto& [dest, e] : routes_) {
    if (e.valid) {
      e.valid = false;
      e.seqnum += 1;
    }
  }
}

bool next_hop_graph_acyclic(const std::vector<RoutingTable>& tables, NodeIndex dest, double now) {
  const std::size_t n = tables.size();
  // 0 unvisited, 1 on the current walk, 2 known to terminate.
  std::vector<std::uint8_t> state(n, 0);
  for (std::size_t start = 0; start < n; ++start) {
    if (state[start] != 0) continue;
    std::vector<std::size_t> walk;
    std::size_t cur = start;
    while (true) {
      if (cur == dest || cur >= n) break;
      if (state[cur] == 2) break;
      if (state[cur] == 1) return false;
      state[cur] = 1;
      walk.push_back(cur);
      const auto r = tables[cur].lookup(dest, now);
      if (!r) break;
      cur = r->next_hop;
    }
    for (auto w : walk) state[w] = 2;
  }
  return true;
}

}  // namespace lunasim::mesh
