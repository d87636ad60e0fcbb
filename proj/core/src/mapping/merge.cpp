#include "lunasim/mapping/merge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lunasim/sim/rng.hpp"

namespace lunasim::mapping {

std::string_view to_string(MergeStatus s) {
  switch (s) {
    case MergeStatus::kAccepted: return "accepted";
    case MergeStatus::kInsufficientOverlap: return "insufficient_overlap";
    case MergeStatus::kInsufficientFeatures: return "insufficient_features";
    case MergeStatus::kNoConsensus: return "no_consensus";
  }
  return "?";
}

double overlap_ratio(const OccupancyGrid& a, const OccupancyGrid& b, const Pose2& b_to_a,
                     double known_epsilon) {
  const std::size_t known_a = a.known_count(known_epsilon);
  const std::size_t known_b = b.known_count(known_epsilon);
  const std::size_t denom = std::min(known_a, known_b);
  if (denom == 0) return 0.0;
  // Cell centres of B in A's continuous cell coordinates, stepped
  // incrementally along rows.
  const Pose2 b_cells_to_a = b_to_a.compose(b.origin());
  const Vec2 base = a.to_cell_coords(b_cells_to_a.apply({0.5 * b.resolution(), 0.5 * b.resolution()}));
  const Vec2 ex = rotate({b.resolution() / a.resolution(), 0.0}, b_cells_to_a.theta - a.origin().theta);
  const Vec2 ey = rotate({0.0, b.resolution() / a.resolution()}, b_cells_to_a.theta - a.origin().theta);
  std::size_t shared = 0;
  for (int y = 0; y < b.height(); ++y) {
    Vec2 p = base + ey * static_cast<double>(y);
    for (int x = 0; x < b.width(); ++x, p = p + ex) {
      if (!b.is_known(x, y, known_epsilon)) continue;
      const int ax = static_cast<int>(std::floor(p.x));
      const int ay = static_cast<int>(std::floor(p.y));
      if (a.contains(ax, ay) && a.is_known(ax, ay, known_epsilon)) ++shared;
    }
  }
  return std::min(1.0, static_cast<double>(shared) / static_cast<double>(denom));
}

namespace {

struct Candidate {
  int ia;
  int ib;
  int dist;
};

struct Hypothesis {
  Pose2 t;
  std::vector<std::pair<int, int>> inliers;  // (index in A, index in B)
  double residual = 0.0;
};

// Geometric consensus over all features, not only descriptor candidates:
// features of A are bucketed so that every B feature mapped by a hypothesis
// finds its neighbours in constant time. Pairs are taken greedily by
// residual, each feature used at most once.
class ConsensusCounter {
 public:
  ConsensusCounter(std::span<const GridFeature> fa, std::span<const GridFeature> fb, double tol)
      : fa_(fa), fb_(fb), tol_(tol), used_a_(fa.size()), used_b_(fb.size()) {
    if (fa.empty()) return;
    CellIndex lo = bucket_of(fa[0].position), hi = lo;
    for (const auto& f : fa) {
      const CellIndex c = bucket_of(f.position);
      lo = {std::min(lo.x, c.x), std::min(lo.y, c.y)};
      hi = {std::max(hi.x, c.x), std::max(hi.y, c.y)};
    }
    lo_ = lo;
    w_ = hi.x - lo.x + 1;
    h_ = hi.y - lo.y + 1;
    start_.assign(static_cast<std::size_t>(w_) * h_ + 1, 0);
    for (const auto& f : fa) ++start_[slot(bucket_of(f.position)) + 1];
    for (std::size_t i = 1; i < start_.size(); ++i) start_[i] += start_[i - 1];
    members_.resize(fa.size());
    std::vector<int> fill(start_.begin(), start_.end() - 1);
    for (int i = 0; i < static_cast<int>(fa.size()); ++i) members_[fill[slot(bucket_of(fa[i].position))]++] = i;
  }

  void count(const Pose2& t, Hypothesis& out) {
    scratch_.clear();
    const double tol2 = tol_ * tol_;
    const Rigid2 rt(t);
    for (int ib = 0; ib < static_cast<int>(fb_.size()); ++ib) {
      const Vec2 q = rt.apply(fb_[ib].position);
      const CellIndex c = bucket_of(q);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int bx = c.x + dx - lo_.x;
          const int by = c.y + dy - lo_.y;
          if (bx < 0 || by < 0 || bx >= w_ || by >= h_) continue;
          const std::size_t k = static_cast<std::size_t>(by) * w_ + bx;
          for (int m = start_[k]; m < start_[k + 1]; ++m) {
            const int ia = members_[m];
            const Vec2 d = fa_[ia].position - q;
            const double r2 = d.dot(d);
            if (r2 <= tol2) scratch_.push_back({r2, ia, ib});
          }
        }
      }
    }
    std::sort(scratch_.begin(), scratch_.end(), [](const Near& x, const Near& y) {
      if (x.r2 != y.r2) return x.r2 < y.r2;
      return x.ia != y.ia ? x.ia < y.ia : x.ib < y.ib;
    });
    std::fill(used_a_.begin(), used_a_.end(), 0);
    std::fill(used_b_.begin(), used_b_.end(), 0);
    out.t = t;
    out.inliers.clear();
    out.residual = 0.0;
    for (const Near& n : scratch_) {
      if (used_a_[n.ia] || used_b_[n.ib]) continue;
      used_a_[n.ia] = 1;
      used_b_[n.ib] = 1;
      out.inliers.emplace_back(n.ia, n.ib);
      out.residual += n.r2;
    }
  }

 private:
  struct Near {
    double r2;
    int ia;
    int ib;
  };

  CellIndex bucket_of(Vec2 p) const {
    return {static_cast<int>(std::floor(p.x / tol_)), static_cast<int>(std::floor(p.y / tol_))};
  }
  std::size_t slot(CellIndex c) const {
    return static_cast<std::size_t>(c.y - lo_.y) * w_ + (c.x - lo_.x);
  }

  std::span<const GridFeature> fa_;
  std::span<const GridFeature> fb_;
  double tol_;
  // Buckets of A features in a dense CSR layout.
  CellIndex lo_;
  int w_ = 0;
  int h_ = 0;
  std::vector<int> start_;
  std::vector<int> members_;
  std::vector<Near> scratch_;
  std::vector<char> used_a_;
  std::vector<char> used_b_;
};

bool better(const Hypothesis& h, const Hypothesis& best) {
  if (h.inliers.size() != best.inliers.size()) return h.inliers.size() > best.inliers.size();
  return h.residual < best.residual;
}

// Least-squares rigid fit p_a ≈ R p_b + t.
Pose2 rigid_fit(const std::vector<std::pair<int, int>>& pairs, std::span<const GridFeature> fa,
                std::span<const GridFeature> fb) {
  Vec2 ca, cb;
  for (const auto& [ia, ib] : pairs) {
    ca = ca + fa[ia].position;
    cb = cb + fb[ib].position;
  }
  const double n = static_cast<double>(pairs.size());
  ca = ca * (1.0 / n);
  cb = cb * (1.0 / n);
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [ia, ib] : pairs) {
    const Vec2 a = fa[ia].position - ca;
    const Vec2 b = fb[ib].position - cb;
    sxx += b.x * a.x + b.y * a.y;
    sxy += b.x * a.y - b.y * a.x;
  }
  const double theta = std::atan2(sxy, sxx);
  const Vec2 t = ca - rotate(cb, theta);
  return {t.x, t.y, theta};
}

// Maps cell centres of B into A's continuous cell coordinates.
class CellMapper {
 public:
  CellMapper(const OccupancyGrid& a, const OccupancyGrid& b, const Pose2& b_to_a) {
    const Pose2 m = a.origin().inverse().compose(b_to_a).compose(b.origin());
    const Rigid2 r(m);
    const double k = b.resolution() / a.resolution();
    base_ = r.apply({0.5 * b.resolution(), 0.5 * b.resolution()}) * (1.0 / a.resolution());
    ex_ = r.rotate({k, 0.0});
    ey_ = r.rotate({0.0, k});
  }
  Vec2 coords(int x, int y) const { return base_ + ex_ * x + ey_ * y; }
  CellIndex cell(int x, int y) const {
    const Vec2 p = coords(x, y);
    return {static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y))};
  }

 private:
  Vec2 base_, ex_, ey_;
};

// Point-to-point ICP between occupied cell centres, nearest neighbour
// searched in a small window of A's cells.
Pose2 refine_on_cells(const OccupancyGrid& a, const OccupancyGrid& b, Pose2 t,
                      const MatchParams& params) {
  std::vector<Vec2> pts;
  for (int y = 0; y < b.height(); ++y) {
    for (int x = 0; x < b.width(); ++x) {
      if (b.classify_cell(x, y) == CellClass::kOccupied) pts.push_back(b.cell_center(x, y));
    }
  }
  if (pts.size() < 3) return t;
  const Rigid2 a_origin(a.origin());
  std::vector<Vec2> src, dst;
  for (int iter = 0; iter < params.icp_iterations; ++iter) {
    const int radius = iter < params.icp_iterations / 2 ? 3 : 2;
    const double max_d2 = std::pow(radius * a.resolution(), 2);
    src.clear();
    dst.clear();
    const Rigid2 rt(t);
    const Rigid2 to_cells(a.origin().inverse());
    const double inv_res = 1.0 / a.resolution();
    for (const Vec2& p : pts) {
      const Vec2 q = rt.apply(p);
      const Vec2 qc = to_cells.apply(q) * inv_res;
      const CellIndex c{static_cast<int>(std::floor(qc.x)), static_cast<int>(std::floor(qc.y))};
      double best = max_d2;
      Vec2 match;
      bool found = false;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int x = c.x + dx;
          const int y = c.y + dy;
          if (!a.contains(x, y) || a.classify_cell(x, y) != CellClass::kOccupied) continue;
          const Vec2 m = a_origin.apply({(x + 0.5) * a.resolution(), (y + 0.5) * a.resolution()});
          const Vec2 d = m - q;
          const double d2 = d.dot(d);
          if (d2 < best) {
            best = d2;
            match = m;
            found = true;
          }
        }
      }
      if (found) {
        src.push_back(p);
        dst.push_back(match);
      }
    }
    if (src.size() < 3) return t;
    Vec2 ca, cb;
    for (std::size_t i = 0; i < src.size(); ++i) {
      ca = ca + dst[i];
      cb = cb + src[i];
    }
    const double n = static_cast<double>(src.size());
    ca = ca * (1.0 / n);
    cb = cb * (1.0 / n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Vec2 pa = dst[i] - ca;
      const Vec2 pb = src[i] - cb;
      sxx += pb.x * pa.x + pb.y * pa.y;
      sxy += pb.x * pa.y - pb.y * pa.x;
    }
    const double theta = std::atan2(sxy, sxx);
    const Vec2 tr = ca - rotate(cb, theta);
    const Pose2 next{tr.x, tr.y, theta};
    const bool settled = distance(next.position(), t.position()) < 1e-5 &&
                         std::abs(wrap_angle(next.theta - t.theta)) < 1e-7;
    t = next;
    if (settled && iter >= params.icp_iterations / 2) break;
  }
  return t;
}

// Occupied cells of B mapped into A: those landing within one cell of an
// occupied A cell agree, those whose 3x3 neighbourhood in A is entirely
// known free conflict. Returns agree / (agree + conflict).
double occupancy_consistency(const OccupancyGrid& a, const OccupancyGrid& b, const Pose2& t) {
  std::size_t agree = 0, conflict = 0;
  const CellMapper map(a, b, t);
  for (int y = 0; y < b.height(); ++y) {
    for (int x = 0; x < b.width(); ++x) {
      if (b.classify_cell(x, y) != CellClass::kOccupied) continue;
      const CellIndex c = map.cell(x, y);
      bool occupied = false;
      bool all_free = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ax = c.x + dx;
          const int ay = c.y + dy;
          const CellClass cls = a.contains(ax, ay) ? a.classify_cell(ax, ay) : CellClass::kUnknown;
          occupied = occupied || cls == CellClass::kOccupied;
          all_free = all_free && cls == CellClass::kFree;
        }
      }
      if (occupied) {
        ++agree;
      } else if (all_free) {
        ++conflict;
      }
    }
  }
  const std::size_t n = agree + conflict;
  return n == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(n);
}

bool distinct(const Pose2& x, const Pose2& y) {
  return distance(x.position(), y.position()) > 0.5 || std::abs(wrap_angle(x.theta - y.theta)) > 0.1;
}

}  // namespace

MatchResult match_and_estimate(const OccupancyGrid& a, const OccupancyGrid& b,
                               const MatchParams& params) {
  const auto fa = extract_features(a, params.features);
  const auto fb = extract_features(b, params.features);
  return match_and_estimate(a, fa, b, fb, params);
}

MatchResult match_and_estimate(const OccupancyGrid& a, std::span<const GridFeature> fa,
                               const OccupancyGrid& b, std::span<const GridFeature> fb,
                               const MatchParams& params) {
  MatchResult result;
  result.features_a = fa.size();
  result.features_b = fb.size();
  if (fa.size() < params.min_features || fb.size() < params.min_features) {
    result.status = MergeStatus::kInsufficientFeatures;
    return result;
  }

  // k best descriptor matches per B feature.
  std::vector<Candidate> cands;
  std::vector<Candidate> row;
  for (int ib = 0; ib < static_cast<int>(fb.size()); ++ib) {
    row.clear();
    for (int ia = 0; ia < static_cast<int>(fa.size()); ++ia) {
      const int d = descriptor_distance(fa[ia], fb[ib]);
      if (d <= params.max_hamming) row.push_back({ia, ib, d});
    }
    const auto k = std::min<std::size_t>(row.size(), static_cast<std::size_t>(params.candidates_per_feature));
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(),
                      [](const Candidate& x, const Candidate& y) {
                        return x.dist != y.dist ? x.dist < y.dist : x.ia < y.ia;
                      });
    cands.insert(cands.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k));
  }
  result.candidate_matches = cands.size();
  if (cands.size() < 2) {
    result.status = MergeStatus::kNoConsensus;
    return result;
  }

  ConsensusCounter counter(fa, fb, params.inlier_tolerance_m);
  // Best few mutually distinct hypotheses, ordered best first.
  std::vector<Hypothesis> top;
  Hypothesis trial, refit;
  auto offer = [&](Hypothesis& h) {
    if (h.inliers.size() < 3) return;
    for (auto& kept : top) {
      if (!distinct(kept.t, h.t)) {
        if (better(h, kept)) std::swap(kept, h);
        std::stable_sort(top.begin(), top.end(), [](const Hypothesis& x, const Hypothesis& y) { return better(x, y); });
        return;
      }
    }
    if (top.size() < static_cast<std::size_t>(params.verify_hypotheses)) {
      top.push_back(h);
    } else if (better(h, top.back())) {
      top.back() = h;
    } else {
      return;
    }
    std::stable_sort(top.begin(), top.end(), [](const Hypothesis& x, const Hypothesis& y) { return better(x, y); });
  };
  auto try_pair = [&](int i, int j) {
    const Candidate& m1 = cands[i];
    const Candidate& m2 = cands[j];
    if (m1.ia == m2.ia || m1.ib == m2.ib) return;
    const Vec2 va = fa[m2.ia].position - fa[m1.ia].position;
    const Vec2 vb = fb[m2.ib].position - fb[m1.ib].position;
    const double da = va.norm();
    const double db = vb.norm();
    if (db < params.min_pair_separation_m || std::abs(da - db) > params.pair_tolerance_m) return;
    const double theta = wrap_angle(std::atan2(va.y, va.x) - std::atan2(vb.y, vb.x));
    const double otol = params.pair_orientation_tolerance_rad;
    if (std::abs(wrap_angle(fa[m1.ia].orientation - fb[m1.ib].orientation - theta)) > otol ||
        std::abs(wrap_angle(fa[m2.ia].orientation - fb[m2.ib].orientation - theta)) > otol) {
      return;
    }
    const Vec2 mid_a = (fa[m1.ia].position + fa[m2.ia].position) * 0.5;
    const Vec2 mid_b = (fb[m1.ib].position + fb[m2.ib].position) * 0.5;
    const Vec2 t = mid_a - rotate(mid_b, theta);
    counter.count({t.x, t.y, theta}, trial);
    // Local optimisation: a short baseline gives a poor rotation, so refit
    // on the inliers while the set keeps growing.
    for (int round = 0; round < params.local_refits && trial.inliers.size() >= 3; ++round) {
      counter.count(rigid_fit(trial.inliers, fa, fb), refit);
      if (refit.inliers.size() <= trial.inliers.size()) break;
      std::swap(trial, refit);
    }
    offer(trial);
  };

  const std::size_t n = cands.size();
  const std::size_t pairs = n * (n - 1) / 2;
  if (pairs <= params.exhaustive_pair_limit) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) try_pair(static_cast<int>(i), static_cast<int>(j));
    }
  } else {
    sim::RngStream rng(params.seed, "merge.ransac");
    for (int it = 0; it < params.ransac_iterations; ++it) {
      const auto i = static_cast<int>(rng.below(n));
      const auto j = static_cast<int>(rng.below(n));
      if (i != j) try_pair(i, j);
    }
  }
  if (top.empty()) {
    result.status = MergeStatus::kNoConsensus;
    return result;
  }

  // Refine each kept hypothesis and verify it against the cells; the
  // consistent one with most inliers wins.
  std::optional<Hypothesis> chosen;
  for (Hypothesis& h : top) {
    for (int round = 0; round < params.refit_rounds; ++round) {
      counter.count(rigid_fit(h.inliers, fa, fb), trial);
      if (trial.inliers.size() < h.inliers.size()) break;
      const bool same = trial.inliers == h.inliers;
      std::swap(h, trial);
      if (same) break;
    }
    h.t = rigid_fit(h.inliers, fa, fb);
    if (occupancy_consistency(a, b, h.t) < params.min_consistency) continue;
    if (params.icp_iterations > 0) {
      h.t = refine_on_cells(a, b, h.t, params);
      counter.count(h.t, trial);
      trial.t = h.t;
      if (trial.inliers.size() >= h.inliers.size()) std::swap(h, trial);
    }
    if (occupancy_consistency(a, b, h.t) < params.min_consistency) continue;
    if (!chosen || better(h, *chosen)) chosen = h;
  }
  if (!chosen) {
    result.status = MergeStatus::kNoConsensus;
    return result;
  }
  const Hypothesis& best = *chosen;

  MergeTransform est;
  est.transform = best.t;
  est.inlier_count = static_cast<int>(best.inliers.size());
  est.overlap_ratio = overlap_ratio(a, b, best.t, params.known_epsilon);
  result.estimate = est;
  if (est.inlier_count < params.min_inliers) {
    result.status = MergeStatus::kNoConsensus;
  } else if (est.overlap_ratio < params.min_overlap) {
    result.status = MergeStatus::kInsufficientOverlap;
  } else {
    result.status = MergeStatus::kAccepted;
  }
  return result;
}

MergedMap merge(const OccupancyGrid& global, std::span<const LocalMap> locals) {
  MergedMap out{global, std::vector<bool>(locals.size(), false)};
  OccupancyGrid& g = out.grid;
  for (std::size_t k = 0; k < locals.size(); ++k) {
    const LocalMap& lm = locals[k];
    if (lm.grid == nullptr || !lm.to_global || lm.grid->empty()) continue;
    out.anchored[k] = true;
    const OccupancyGrid& src = *lm.grid;
    const Pose2 src_cells = lm.to_global->compose(src.origin());
    const double w = src.width() * src.resolution();
    const double h = src.height() * src.resolution();
    const Vec2 corners[4] = {src_cells.apply({0, 0}), src_cells.apply({w, 0}),
                             src_cells.apply({0, h}), src_cells.apply({w, h})};
    for (const Vec2& c : corners) g.ensure_contains(c, 0.0);
    // Bounding box in global cell coordinates (the global grid may itself be
    // rotated, so take all four corners).
    int x0 = g.width(), y0 = g.height(), x1 = -1, y1 = -1;
    for (const Vec2& c : corners) {
      const Vec2 cc = g.to_cell_coords(c);
      x0 = std::min(x0, static_cast<int>(std::floor(cc.x)) - 1);
      y0 = std::min(y0, static_cast<int>(std::floor(cc.y)) - 1);
      x1 = std::max(x1, static_cast<int>(std::floor(cc.x)) + 1);
      y1 = std::max(y1, static_cast<int>(std::floor(cc.y)) + 1);
    }
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, g.width() - 1);
    y1 = std::min(y1, g.height() - 1);
    const Pose2 global_to_src_cells = src_cells.inverse().compose(g.origin());
    const double r = g.resolution();
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p = global_to_src_cells.apply({(x + 0.5) * r, (y + 0.5) * r});
        const int sx = static_cast<int>(std::floor(p.x / src.resolution()));
        const int sy = static_cast<int>(std::floor(p.y / src.resolution()));
        if (!src.contains(sx, sy)) continue;
        const double v = src.at(sx, sy);
        if (v != 0.0) g.add(x, y, v);
      }
    }
  }
  return out;
}

}  // namespace lunasim::mapping
