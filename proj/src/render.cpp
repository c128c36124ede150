#include "mvr/render.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace mvr {

Frame::Frame(int frame_id, const Pose3d& viewpoint, const CameraIntrinsicsd& intrinsics)
    : frame_id_(frame_id),
      viewpoint_(viewpoint),
      intrinsics_(intrinsics),
      pixel_index_(static_cast<std::size_t>(intrinsics.width) * static_cast<std::size_t>(intrinsics.height), -1) {}

const FeatureSample* Frame::at(int x, int y) const {
  if (x < 0 || y < 0 || x >= width() || y >= height()) return nullptr;
  const std::int32_t i = pixel_index_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width()) +
                                      static_cast<std::size_t>(x)];
  return i < 0 ? nullptr : &samples_[static_cast<std::size_t>(i)];
}

std::optional<double> Frame::depth_at(int x, int y) const {
  if (!has_depth_) return std::nullopt;
  const FeatureSample* s = at(x, y);
  if (s == nullptr) return std::nullopt;
  return s->depth;
}

void Frame::set_samples(std::vector<FeatureSample> samples) {
  std::fill(pixel_index_.begin(), pixel_index_.end(), -1);
  samples_ = std::move(samples);
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const int x = samples_[i].pixel_x(), y = samples_[i].pixel_y();
    if (x < 0 || y < 0 || x >= width() || y >= height()) {
      throw std::out_of_range("feature sample outside the image");
    }
    auto& slot = pixel_index_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width()) +
                              static_cast<std::size_t>(x)];
    if (slot >= 0) throw std::invalid_argument("two feature samples in one pixel");
    slot = static_cast<std::int32_t>(i);
  }
}

void Frame::strip_depth() {
  has_depth_ = false;
  for (auto& s : samples_) s.depth = std::numeric_limits<double>::quiet_NaN();
}

Frame render(const SceneState& scene, const Pose3d& viewpoint, const CameraIntrinsicsd& intr,
             const ModelLibrary& library, int frame_id) {
  const int w = intr.width, h = intr.height;
  const Pose3d world_to_cam = viewpoint.inverse();
  const Eigen::Vector3d eye = viewpoint.translation();

  std::vector<double> zbuf(static_cast<std::size_t>(w) * static_cast<std::size_t>(h),
                           std::numeric_limits<double>::infinity());
  std::vector<FeatureSample> winners(zbuf.size());

  for (int obj = 0; obj < scene.size(); ++obj) {
    const Placement& pl = scene.placements[static_cast<std::size_t>(obj)];
    const ObjectModel& model = library.at(static_cast<std::size_t>(pl.model_id));
    const Pose3d object_to_world = pl.pose.lift();
    const Eigen::Matrix3d& r = object_to_world.rotation();
    const Eigen::Matrix3Xd world = object_to_world.transform(model.points);
    const Eigen::Matrix3Xd cam = world_to_cam.transform(world);
    for (Eigen::Index i = 0; i < model.size(); ++i) {
      const Eigen::Vector3d to_eye = eye - world.col(i);
      if ((r * model.normals.col(i)).dot(to_eye) <= 0) continue;
      const double z = cam(2, i);
      if (z <= 1e-6) continue;
      const double u = intr.fx * cam(0, i) / z + intr.cx;
      const double v = intr.fy * cam(1, i) / z + intr.cy;
      const double fu = std::floor(u), fv = std::floor(v);
      if (fu < 0 || fv < 0 || fu >= w || fv >= h) continue;
      const std::size_t px = static_cast<std::size_t>(fv) * static_cast<std::size_t>(w) +
                             static_cast<std::size_t>(fu);
      if (z >= zbuf[px]) continue;
      zbuf[px] = z;
      FeatureSample& s = winners[px];
      s.instance = obj;
      s.model_id = pl.model_id;
      s.point_index = static_cast<int>(i);
      s.word = model.words[static_cast<std::size_t>(i)];
      s.u = u;
      s.v = v;
      s.depth = z;
      s.view_dir_local = (r.transpose() * to_eye).normalized().cast<float>();
    }
  }

  std::vector<FeatureSample> samples;
  for (std::size_t px = 0; px < winners.size(); ++px) {
    if (winners[px].instance >= 0) samples.push_back(winners[px]);
  }
  if (samples.empty()) throw EmptyFrame("no model point is visible from this viewpoint");
  Frame f(frame_id, viewpoint, intr);
  f.set_samples(std::move(samples));
  return f;
}

}  // namespace mvr
