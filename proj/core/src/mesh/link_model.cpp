#include "lunasim/mesh/link_model.hpp"

#include <algorithm>
#include <cmath>

namespace lunasim::mesh {

void LinkCurve::validate() const {
  if (steps.empty()) throw MeshError("link curve needs at least one step");
  double prev = 0.0;
  for (const auto& s : steps) {
    if (!(s.max_distance_m > prev)) throw MeshError("link curve breakpoints must increase");
    if (!(s.rate_bps > 0.0)) throw MeshError("link curve rates must be positive");
    prev = s.max_distance_m;
  }
  if (!(error_cap >= 0.0 && error_cap < 1.0)) throw MeshError("error_cap must be in [0, 1)");
  if (!(error_exponent > 0.0)) throw MeshError("error_exponent must be positive");
}

void NetParams::validate() const {
  if (!(overhead_s >= 0.0)) throw MeshError("overhead must be >= 0");
  if (!(test_frame_bits > 0.0)) throw MeshError("test frame bits must be > 0");
  if (!(ewma_alpha > 0.0 && ewma_alpha <= 1.0)) throw MeshError("ewma_alpha must be in (0, 1]");
  if (!(load_weight >= 0.0)) throw MeshError("load_weight must be >= 0");
  if (!(link_sample_period_s > 0.0)) throw MeshError("link sample period must be > 0");
  if (retry_limit < 0) throw MeshError("retry_limit must be >= 0");
  if (max_hops < 1) throw MeshError("max_hops must be >= 1");
}

LinkQuality link_quality(double distance_m, const LinkCurve& curve) {
  if (!(distance_m >= 0.0)) throw MeshError("distance must be non-negative");
  LinkQuality q;
  const double range = curve.range();
  q.up = distance_m <= range;
  if (!q.up) return q;
  for (const auto& s : curve.steps) {
    if (distance_m <= s.max_distance_m) {
      q.rate_bps = s.rate_bps;
      break;
    }
  }
  q.e_f = std::min(curve.error_cap, std::pow(distance_m / range, curve.error_exponent));
  return q;
}

namespace {

double tx_time(const LinkState& l, const NetParams& p) { return p.overhead_s + p.test_frame_bits / l.rate_bps; }

}  // namespace

double airtime(const LinkState& link, const NetParams& params) {
  if (!link.up || link.rate_bps <= 0.0) return kInfiniteMetric;
  return tx_time(link, params) * (1.0 / (1.0 - link.e_f));
}

double airtime_plus(const LinkState& link, const NetParams& params) {
  if (!link.up || link.rate_bps <= 0.0) return kInfiniteMetric;
  const double keep = std::max(1e-3, 1.0 - link.per_ewma);
  return tx_time(link, params) * (1.0 / keep) * (1.0 + params.load_weight * link.load);
}

double link_metric(const LinkState& link, const NetParams& params) {
  return params.metric == MetricKind::kAirtime ? airtime(link, params) : airtime_plus(link, params);
}

void update_per(LinkState& link, bool frame_succeeded, const NetParams& params) {
  const double a = params.ewma_alpha;
  link.per_ewma = a * (frame_succeeded ? 0.0 : 1.0) + (1.0 - a) * link.per_ewma;
}

}  // namespace lunasim::mesh
