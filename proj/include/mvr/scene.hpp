#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "mvr/geometry.hpp"
#include "mvr/random.hpp"

namespace mvr {

enum class ShapeFamily { box, cylinder, l_prism };

std::string to_string(ShapeFamily f);

// Range of planar rotations applied between the goal and initial scenes.
enum class RotationRegime { minor, full };

std::string to_string(RotationRegime r);
RotationRegime parse_regime(const std::string& s);
// Half-width of the regime's yaw interval, radians (60 or 180 degrees).
double regime_half_range(RotationRegime r);

struct SimConfig {
  int min_objects = 1;
  int max_objects = 9;
  double table_width = 1.0;  // x extent, centered at the origin
  double table_depth = 1.0;  // y extent
  int ring_viewpoints = 8;
  double ring_radius = 0.8;  // horizontal distance from the table center
  double ring_elevation_deg = 45.0;
  Eigen::Vector3d home_eye{0.0, -0.95, 0.8};
  int image_width = 640;
  int image_height = 480;
  double focal_px = 400.0;
  RotationRegime regime = RotationRegime::full;
  double actuation_noise = 0.0;  // sigma for (yaw rad, tx m, ty m)
  std::uint64_t seed = 1;

  // Procedural model library, shared by every instance of a dataset.
  std::uint64_t library_seed = 7;
  int library_size = 24;
  double point_spacing = 0.0025;
  int point_descriptor_dim = 32;
  int vocabulary_size = 256;
  // Minimum gap between footprint discs when generating layouts.
  double placement_clearance = 0.02;

  void validate() const;
  CameraIntrinsicsd intrinsics() const;
};

struct ObjectModel {
  int model_id = 0;
  ShapeFamily family = ShapeFamily::box;
  Eigen::Matrix3Xd points;   // local frame, z = 0 on the table
  Eigen::Matrix3Xd normals;  // outward unit normals
  std::vector<std::int64_t> feature_ids;
  std::vector<int> words;    // visual word of each point
  Eigen::MatrixXf descriptors;  // d_pt x M, unit columns
  double footprint_radius = 0;
  double height = 0;

  Eigen::Index size() const { return points.cols(); }
};

using ModelLibrary = std::vector<ObjectModel>;

inline std::int64_t make_feature_id(int model_id, int point_index) {
  return (static_cast<std::int64_t>(model_id) << 32) | static_cast<std::uint32_t>(point_index);
}

/// Builds the procedural library: boxes, cylinders and L-prisms in rotation,
/// surface-sampled on a jittered grid. Deterministic in `config.library_seed`.
ModelLibrary generate_model_library(const SimConfig& config);

struct TableBounds {
  double min_x = -0.5, max_x = 0.5, min_y = -0.5, max_y = 0.5;

  bool contains_disc(const Eigen::Vector2d& c, double r) const {
    return c.x() - r >= min_x && c.x() + r <= max_x && c.y() - r >= min_y && c.y() + r <= max_y;
  }
};

struct Placement {
  int model_id = 0;
  PlanarTransformd pose;
  double footprint_radius = 0;
};

/// Objects on the table. An object is addressed by its index in `placements`.
struct SceneState {
  TableBounds table;
  std::vector<Placement> placements;

  int size() const { return static_cast<int>(placements.size()); }
};

// True when the discs are closer than `gap` (touching counts as clear).
bool discs_overlap(const Eigen::Vector2d& a, double ra, const Eigen::Vector2d& b, double rb,
                   double gap = 0.0);

// Every pair of discs separated by more than `gap` and all inside the table.
bool is_collision_free(const SceneState& scene, double gap = 0.0);

struct RearrangementInstance {
  SimConfig config;
  std::uint64_t seed = 0;
  SceneState initial;
  SceneState goal;
  std::vector<PlanarTransformd> true_offsets;  // goal = offset * initial
  Pose3d home_viewpoint;
  std::vector<Pose3d> ring_viewpoints;
};

Pose3d home_viewpoint(const SimConfig& config);
std::vector<Pose3d> ring_viewpoints(const SimConfig& config);

/// Samples a goal layout, then perturbs each object by a collision-free
/// planar motion whose yaw comes from the configured rotation regime.
/// Throws PlacementFailure when 10,000 attempts do not yield a layout.
RearrangementInstance generate_instance(const SimConfig& config, const ModelLibrary& library);

/// Same as above but for a fixed list of model ids.
RearrangementInstance generate_instance(const SimConfig& config, const ModelLibrary& library,
                                        const std::vector<int>& model_ids);

/// Moves `object` to `target` plus zero-mean Gaussian actuation noise of
/// standard deviation `noise_sigma` on (yaw, tx, ty). Throws
/// CollisionAtTarget when the noiseless target overlaps another footprint or
/// leaves the table.
SceneState apply_move(const SceneState& scene, int object, const PlanarTransformd& target,
                      double noise_sigma, Rng& rng);

}  // namespace mvr
