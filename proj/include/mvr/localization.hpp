#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "mvr/geometry.hpp"
#include "mvr/matching.hpp"
#include "mvr/perception_db.hpp"
#include "mvr/pnp.hpp"
#include "mvr/segment.hpp"

namespace mvr {

struct LocalizationConfig {
  int top_n = 10;
  double prune_angle = std::numbers::pi / 6;
  int match_resolution = 256;
  RansacConfig ransac;
  PlanarityToleranced planarity;
  bool require_planar = true;
  // Walk the next-most-voted instance when every candidate of the first fails.
  bool fallback_instances = true;
  int min_points = 10;
  std::uint64_t seed = 3;
};

struct Candidate {
  RegionRef ref;
  double similarity = 0;
  bool visited = false;
  bool pruned = false;
};

/// All regions of one instance, by non-increasing similarity to the query.
struct CandidateList {
  int instance = -1;
  std::vector<Candidate> candidates;
};

struct RankedRegion {
  RegionRef ref;
  double similarity = 0;
};

/// Every database region by descending dot(G_query, G); ties keep storage order.
std::vector<RankedRegion> rank_regions(const Eigen::VectorXd& descriptor, const Database& db);

/// Instances present among the top `top_n` ranked regions, most votes first;
/// equal counts go to the instance owning the better best-scoring region.
std::vector<int> vote_instances(const std::vector<RankedRegion>& ranked, int top_n,
                                const std::vector<int>& excluded = {});

/// Candidates of the winning instance. Throws NoCandidates if the database
/// is empty or every instance is excluded.
CandidateList retrieve_candidates(const Eigen::VectorXd& descriptor, const Database& db, int top_n,
                                  const std::vector<int>& excluded = {});

CandidateList candidates_of(int instance, const std::vector<RankedRegion>& ranked);

/// Marks `rejected` and every unvisited candidate within `angle` of it
/// (by angular distance of observation vectors) as pruned.
void prune_after_rejection(CandidateList& list, std::size_t rejected, const Database& db, double angle);

/// Goal pixels (image coordinates) paired with world points of the candidate cloud.
struct Correspondences3D {
  Eigen::Matrix2Xd pixels;
  Eigen::Matrix3Xd points;
  Eigen::Index size() const { return pixels.cols(); }
};

/// Maps matches back to image coordinates and looks up the candidate's stored
/// world point. Pixels without depth and repeated goal pixels are dropped.
/// Throws TooFewCorrespondences below 4 pairs.
Correspondences3D lift_to_3d(const Correspondences2D& matches, const RegionCrop& goal, const ObjectRegion& candidate,
                             int resolution);

struct PoseEstimate {
  Pose3d T;  // current-to-goal motion in world
  Pose3d world_to_cam;
  int inlier_count = 0;
  double inlier_ratio = 0;
  int correspondences = 0;
  bool planar = false;
  bool accepted = false;
  RegionRef candidate;
};

/// RANSAC-EPnP on the lifted matches. T = goal_viewpoint * world_to_cam.
PoseEstimate solve_pose(const Correspondences3D& m3d, const CameraIntrinsicsd& intr, const Pose3d& goal_viewpoint,
                        const LocalizationConfig& config, std::uint64_t seed);

struct ObjectEstimate {
  int goal_label = -1;
  int truth_instance = -1;  // evaluation only
  int instance = -1;        // database instance the estimate is assigned to
  PoseEstimate pose;
  int matcher_invocations = 0;
  std::vector<RegionRef> visited;
  std::vector<double> visited_similarity;
  std::vector<int> visited_instance_start;  // index into `visited` where each walked instance begins
};

/// Candidate traversal for one goal region.
ObjectEstimate estimate_object(const QueryRegion& query, const Database& db, const MatcherBackend& matcher,
                               const LocalizationConfig& config, const std::vector<int>& excluded = {});

struct GoalEstimates {
  std::vector<ObjectEstimate> objects;  // by goal segmentation label
  int duplicate_resolutions = 0;
};

/// Segments the goal image, estimates each region, and resolves instances
/// claimed twice: the weaker claim is re-run without that instance.
GoalEstimates estimate_all(const Frame& goal_frame, const Database& db, const Segmenter& segmenter,
                           const DescriptorBackend& descriptors, const MatcherBackend& matcher,
                           const LocalizationConfig& config);

}  // namespace mvr
