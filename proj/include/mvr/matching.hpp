#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "mvr/perception_db.hpp"
#include "mvr/scene.hpp"

namespace mvr {

/// Maps image coordinates of a crop into the square matching frame of side
/// `resolution`: pad to square (centered), then scale uniformly.
struct CropResize {
  double x0 = 0, y0 = 0;
  double pad_x = 0, pad_y = 0;
  double scale = 1;
  int resolution = 0;

  static CropResize of(const RegionCrop& crop, int resolution);
  Eigen::Vector2d to_normalized(const Eigen::Vector2d& image) const;
  Eigen::Vector2d to_image(const Eigen::Vector2d& normalized) const;
};

/// One local match, both ends in matching-frame coordinates.
struct Match2D {
  Eigen::Vector2d goal;
  Eigen::Vector2d candidate;
};
using Correspondences2D = std::vector<Match2D>;

class MatcherBackend {
 public:
  virtual ~MatcherBackend() = default;
  // `seed` makes any randomness of the backend reproducible per call.
  virtual Correspondences2D match(const RegionCrop& goal, const RegionCrop& candidate, int resolution,
                                  std::uint64_t seed) const = 0;
};

struct OracleMatcherConfig {
  double drop_rate = 0.0;
  double pixel_sigma = 0.0;   // matching-frame pixels, goal side
  double outlier_rate = 0.0;
  // Largest angle between the two viewing directions of a point, in the
  // object frame, for which a pair is still found.
  double max_view_angle_deg = 60.0;
  int max_matches = 400;
};

/// Pairs pixels that observe the same model point, then corrupts the set.
class OracleMatcher final : public MatcherBackend {
 public:
  explicit OracleMatcher(const OracleMatcherConfig& config = {}) : config_(config) {}
  Correspondences2D match(const RegionCrop& goal, const RegionCrop& candidate, int resolution,
                          std::uint64_t seed) const override;
  const OracleMatcherConfig& config() const { return config_; }

 private:
  OracleMatcherConfig config_;
};

/// Mutual nearest neighbours over per-pixel point descriptors with a ratio test.
class DescriptorNNMatcher final : public MatcherBackend {
 public:
  explicit DescriptorNNMatcher(const ModelLibrary& library, double ratio = 0.8)
      : library_(&library), ratio_(ratio) {}
  Correspondences2D match(const RegionCrop& goal, const RegionCrop& candidate, int resolution,
                          std::uint64_t seed) const override;

 private:
  const ModelLibrary* library_;
  double ratio_;
};

}  // namespace mvr
