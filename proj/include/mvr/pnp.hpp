#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "mvr/geometry.hpp"

namespace mvr {

/// EPnP. `pixels` (2 x n) are observations of `points` (3 x n, world frame).
/// Returns the world-to-camera pose, or nullopt for n < 4 or degenerate
/// input. Coplanar point sets use the three-control-point variant.
std::optional<Pose3d> epnp(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                           const CameraIntrinsicsd& intr);

/// Levenberg-damped Gauss-Newton on the reprojection error.
Pose3d refine_pose(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                   const CameraIntrinsicsd& intr, const Pose3d& world_to_cam, int max_iterations = 20);

/// Per-point reprojection error in pixels; +inf for points behind the camera.
Eigen::VectorXd reprojection_errors(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                                    const CameraIntrinsicsd& intr, const Pose3d& world_to_cam);

struct RansacConfig {
  int max_iterations = 1000;
  double reprojection_threshold = 2.0;  // pixels
  double confidence = 0.999;
  int min_inliers = 12;
  double min_inlier_ratio = 0.3;
  int refine_iterations = 20;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Pose3d world_to_cam;
  std::vector<int> inliers;
  int iterations = 0;
};

/// Robust PnP: minimal EPnP on 4-point samples, inlier scoring by
/// truncated reprojection error (MSAC), and a refit plus refinement on the
/// inliers of every new best model.
/// Throws TooFewCorrespondences (n < 4) or DegenerateGeometry (no sample
/// produced a model).
RansacResult ransac_pnp(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                        const CameraIntrinsicsd& intr, const RansacConfig& config = {});

}  // namespace mvr
