#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

namespace lunasim::mesh {

using NodeIndex = std::uint32_t;

struct RouteEntry {
  NodeIndex next_hop = 0;
  double metric = 0.0;  // seconds of airtime to the destination
  std::uint32_t seqnum = 0;
  double expires_at = 0.0;
  int hops = 0;
  bool valid = false;

  bool usable(double now) const { return valid && now < expires_at; }
};

enum class UpdateOutcome : std::uint8_t { kRejected, kInstalled, kImproved, kRefreshed };

class RoutingTable {
 public:
  std::optional<RouteEntry> lookup(NodeIndex dest, double now) const;
  const RouteEntry* entry(NodeIndex dest) const;

  // Sequence-number rule: fresher seqnum wins; equal seqnum wins only with a
  // strictly better metric. An invalid entry accepts any seqnum >= its own.
  UpdateOutcome offer(NodeIndex dest, const RouteEntry& candidate);

  // Marks the route invalid and bumps its seqnum so stale advertisements
  // cannot revive it. Returns false if there was nothing valid to drop.
  bool invalidate(NodeIndex dest);
  // Invalidates every valid route whose next hop is `neighbor`; returns the
  // affected destinations.
  std::vector<NodeIndex> invalidate_via(NodeIndex neighbor);
  void refresh(NodeIndex dest, double expires_at);
  void clear();

  const std::unordered_map<NodeIndex, RouteEntry>& entries() const { return routes_; }

 private:
  std::unordered_map<NodeIndex, RouteEntry> routes_;
};

// True when following usable next hops toward `dest` from every node never
// revisits a node.
bool next_hop_graph_acyclic(const std::vector<RoutingTable>& tables, NodeIndex dest, double now);

}  // namespace lunasim::mesh
