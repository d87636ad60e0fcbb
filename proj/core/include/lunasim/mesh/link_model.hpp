#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lunasim::mesh {

class MeshError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kInfiniteMetric = std::numeric_limits<double>::infinity();

// Distance-to-rate staircase plus a power-law frame error curve. The last
// breakpoint is the maximum range.
struct LinkCurve {
  struct Step {
    double max_distance_m;
    double rate_bps;
  };
  std::vector<Step> steps{{50.0, 54e6}, {100.0, 24e6}, {150.0, 12e6}, {200.0, 6e6}, {220.0, 2e6}};
  double error_exponent = 4.0;
  double error_cap = 0.95;

  double range() const { return steps.empty() ? 0.0 : steps.back().max_distance_m; }
  void validate() const;
};

struct LinkQuality {
  double rate_bps = 0.0;
  double e_f = 0.0;
  bool up = false;
};

LinkQuality link_quality(double distance_m, const LinkCurve& curve = LinkCurve{});

enum class MetricKind : std::uint8_t { kAirtime, kAirtimePlus };

struct NetParams {
  double overhead_s = 1e-4;        // O
  double test_frame_bits = 8192;   // B_t
  double ewma_alpha = 0.25;
  double load_weight = 1.0;        // beta
  MetricKind metric = MetricKind::kAirtimePlus;

  double link_sample_period_s = 1.0;
  double preq_interval_s = 5.0;    // refresh discovery for active destinations
  double route_ttl_s = 20.0;
  double discovery_timeout_s = 3.0;
  int discovery_retries = 2;
  int retry_limit = 4;             // retransmissions after the first attempt
  int max_hops = 16;
  std::uint32_t control_frame_bytes = 64;
  std::size_t queue_limit = 4000;  // frames per interface or discovery buffer

  void validate() const;
};

struct LinkState {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double distance_m = 0.0;
  double rate_bps = 0.0;
  double e_f = 0.0;
  double per_ewma = 0.0;
  double load = 0.0;
  bool up = false;
  double extra_delay_s = 0.0;  // per direction
  bool wired = false;
};

// Baseline 802.11s form: (O + B_t/r) / (1 - e_f).
double airtime(const LinkState& link, const NetParams& params);
// HWMP+: smoothed PER replaces e_f and the result is weighted by (1 + beta*load).
// The loss term's denominator is floored at 1e-3 so a saturated estimate
// stays finite.
double airtime_plus(const LinkState& link, const NetParams& params);
double link_metric(const LinkState& link, const NetParams& params);

void update_per(LinkState& link, bool frame_succeeded, const NetParams& params);

}  // namespace lunasim::mesh
