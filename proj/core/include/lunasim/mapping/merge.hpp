#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lunasim/geometry.hpp"
#include "lunasim/mapping/features.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"

namespace lunasim::mapping {

enum class MergeStatus : std::uint8_t {
  kAccepted,
  kInsufficientOverlap,
  kInsufficientFeatures,
  kNoConsensus,
};

std::string_view to_string(MergeStatus s);

struct MergeTransform {
  Pose2 transform;  // frame B -> frame A
  double overlap_ratio = 0.0;
  int inlier_count = 0;
};

struct MatchParams {
  double min_overlap = 0.20;
  int min_inliers = 10;
  std::size_t min_features = 10;
  int max_hamming = 16;
  int candidates_per_feature = 4;
  // Candidate pairs are enumerated exhaustively up to this count, otherwise
  // sampled at random.
  std::size_t exhaustive_pair_limit = 400000;
  int ransac_iterations = 20000;
  // Consensus counts every feature pair within this distance, regardless of
  // descriptor.
  double inlier_tolerance_m = 0.2;
  // Hypotheses kept for cell-level verification, and the fraction of B's
  // occupied cells that must land on occupied rather than free cells of A.
  int verify_hypotheses = 12;
  double min_consistency = 0.75;
  double pair_tolerance_m = 0.3;
  double min_pair_separation_m = 1.0;
  // Both sampled matches must agree with the pair's rotation this closely.
  double pair_orientation_tolerance_rad = 1.0;
  int refit_rounds = 4;
  int local_refits = 3;
  // Dense refinement on occupied cells once a hypothesis has enough inliers.
  int icp_iterations = 20;
  std::uint64_t seed = 0x6d657267;
  double known_epsilon = 0.1;
  FeatureParams features;
};

struct MatchResult {
  MergeStatus status = MergeStatus::kNoConsensus;
  // Best hypothesis found, filled whenever a consensus set of two or more
  // features exists, including for refused merges.
  std::optional<MergeTransform> estimate;
  std::size_t features_a = 0;
  std::size_t features_b = 0;
  std::size_t candidate_matches = 0;

  bool accepted() const { return status == MergeStatus::kAccepted; }
};

// |known(B->A) ∩ known(A)| / min(|known(A)|, |known(B)|), nearest-cell
// resampling of B's known cells into A.
double overlap_ratio(const OccupancyGrid& a, const OccupancyGrid& b, const Pose2& b_to_a,
                     double known_epsilon = 0.1);

MatchResult match_and_estimate(const OccupancyGrid& a, const OccupancyGrid& b,
                               const MatchParams& params = {});
// Same, with features already extracted (the lander caches them).
MatchResult match_and_estimate(const OccupancyGrid& a, std::span<const GridFeature> fa,
                               const OccupancyGrid& b, std::span<const GridFeature> fb,
                               const MatchParams& params = {});

struct LocalMap {
  const OccupancyGrid* grid = nullptr;
  // Placement of the local map frame in the global frame; nullopt when no
  // transform has been accepted.
  std::optional<Pose2> to_global;
};

struct MergedMap {
  OccupancyGrid grid;
  // Per input: false when the map was left out of the sum (rendered apart
  // with identity placement by consumers).
  std::vector<bool> anchored;
};

// Sums the anchored maps' log-odds into a copy of `global`, growing it as
// needed. Resampling is nearest-cell from the global cell centre.
MergedMap merge(const OccupancyGrid& global, std::span<const LocalMap> locals);

}  // namespace lunasim::mapping
