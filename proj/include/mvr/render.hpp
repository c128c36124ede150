#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "mvr/geometry.hpp"
#include "mvr/scene.hpp"

namespace mvr {

/// One visible model point as seen by the camera. `u`, `v` are the exact
/// sub-pixel projection; the point is stored in pixel (floor(u), floor(v)).
struct FeatureSample {
  int instance = -1;  // object index in the rendered scene
  int model_id = -1;
  int point_index = -1;
  int word = -1;  // appearance word of the point
  double u = 0, v = 0, depth = 0;
  // Direction from the point toward the camera, in the object's local frame.
  Eigen::Vector3f view_dir_local = Eigen::Vector3f::UnitZ();

  std::int64_t feature_id() const { return make_feature_id(model_id, point_index); }
  int pixel_x() const { return static_cast<int>(std::floor(u)); }
  int pixel_y() const { return static_cast<int>(std::floor(v)); }
};

/// A rendered observation: a sparse feature image (the RGB stand-in), the
/// depth carried by each feature pixel, and the camera that took it.
class Frame {
 public:
  Frame() = default;
  Frame(int frame_id, const Pose3d& viewpoint, const CameraIntrinsicsd& intrinsics);

  int frame_id() const { return frame_id_; }
  const Pose3d& viewpoint() const { return viewpoint_; }
  const CameraIntrinsicsd& intrinsics() const { return intrinsics_; }
  int width() const { return intrinsics_.width; }
  int height() const { return intrinsics_.height; }

  const std::vector<FeatureSample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }

  const FeatureSample* at(int x, int y) const;
  std::optional<double> depth_at(int x, int y) const;

  // Replaces the sample set; each sample must fall in a distinct in-bounds pixel.
  void set_samples(std::vector<FeatureSample> samples);

  // Drops all depth information; used for RGB-only goal images.
  void strip_depth();
  bool has_depth() const { return has_depth_; }

 private:
  int frame_id_ = 0;
  Pose3d viewpoint_;
  CameraIntrinsicsd intrinsics_;
  std::vector<FeatureSample> samples_;
  std::vector<std::int32_t> pixel_index_;
  bool has_depth_ = true;
};

/// Point-splat renderer with back-face culling and a per-pixel z-buffer.
/// Throws EmptyFrame when nothing is visible.
Frame render(const SceneState& scene, const Pose3d& viewpoint, const CameraIntrinsicsd& intrinsics,
             const ModelLibrary& library, int frame_id = 0);

}  // namespace mvr
