#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "mvr/geometry.hpp"
#include "mvr/render.hpp"
#include "mvr/segment.hpp"

namespace mvr {

/// One pixel of a region crop.
struct CropSample {
  int x = 0, y = 0;  // pixel in the source image
  double u = 0, v = 0;
  double depth = 0;  // NaN when the source image has no depth
  int model_id = -1, point_index = -1, word = -1;
  int truth_instance = -1;  // simulator ground truth, evaluation only
  Eigen::Vector3f view_dir_local = Eigen::Vector3f::UnitZ();
  int cloud_index = -1;  // column of the region cloud, -1 without depth

  std::int64_t feature_id() const { return make_feature_id(model_id, point_index); }
};

/// Segmentation S: the feature image cropped to the mask's bounding box,
/// keeping only pixels under the mask.
class RegionCrop {
 public:
  RegionCrop() = default;
  RegionCrop(int x0, int y0, int width, int height, std::vector<CropSample> samples);

  int x0() const { return x0_; }
  int y0() const { return y0_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<CropSample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }

  // Sample at image pixel (x, y), or null.
  const CropSample* at(int x, int y) const;

 private:
  int x0_ = 0, y0_ = 0, width_ = 0, height_ = 0;
  std::vector<CropSample> samples_;
  std::vector<std::int32_t> index_;
};

/// Database item o = (S, G, P, E) plus the viewpoint it was seen from.
struct ObjectRegion {
  RegionCrop crop;
  Eigen::VectorXd descriptor;
  PointCloudd cloud;
  UnitVec3d obs_vec;
  Pose3d viewpoint;
  CameraIntrinsicsd intrinsics;
  int source_frame_id = 0;
  int truth_instance = -1;
};

/// A goal-image region: RGB only, so no cloud. Its observation vector is
/// approximated by the reversed viewing ray through the crop's centroid.
struct QueryRegion {
  RegionCrop crop;
  Eigen::VectorXd descriptor;
  UnitVec3d obs_vec;
  Pose3d viewpoint;
  CameraIntrinsicsd intrinsics;
  int source_frame_id = 0;
  int label = -1;  // segmentation label in the goal image
  int truth_instance = -1;
};

struct RegionRef {
  int instance = -1;
  int index = -1;
  friend bool operator==(const RegionRef&, const RegionRef&) = default;
};

/// Hierarchical database H: K instance lists of object regions.
struct Database {
  std::vector<std::vector<ObjectRegion>> instances;
  std::vector<Eigen::Vector3d> centroids;

  int size() const { return static_cast<int>(instances.size()); }
  bool empty() const { return instances.empty(); }
  int region_count() const;
  const ObjectRegion& region(const RegionRef& r) const {
    return instances.at(static_cast<std::size_t>(r.instance)).at(static_cast<std::size_t>(r.index));
  }
};

// --- descriptors -----------------------------------------------------------

/// Word image of a crop after square padding and nearest-neighbor resampling
/// to resolution x resolution. Empty pixels hold -1.
struct NormalizedCrop {
  int resolution = 0;
  std::vector<int> words;
};

NormalizedCrop pad_and_resize(const RegionCrop& crop, int resolution);

/// Global-descriptor slot of the pipeline.
class DescriptorBackend {
 public:
  virtual ~DescriptorBackend() = default;
  virtual int dimension() const = 0;
  virtual int resolution() const = 0;
  // Unnormalized aggregate of a normalized crop.
  virtual Eigen::VectorXd aggregate(const NormalizedCrop& crop, const UnitVec3d& obs) const = 0;
};

struct SyntheticDescriptorConfig {
  int dimension = 128;
  int resolution = 64;
  int grid = 4;
  int vocabulary = 256;
  double obs_weight = 0.25;  // weight of the viewing-direction block
  std::uint64_t seed = 11;
};

/// Word histograms pooled on a grid x grid layout of the normalized crop,
/// concatenated with an 8-bin soft azimuth code of E, then mapped to
/// `dimension` by a fixed seeded Gaussian projection.
class SyntheticDescriptorBackend final : public DescriptorBackend {
 public:
  explicit SyntheticDescriptorBackend(const SyntheticDescriptorConfig& config = {});
  int dimension() const override { return config_.dimension; }
  int resolution() const override { return config_.resolution; }
  Eigen::VectorXd aggregate(const NormalizedCrop& crop, const UnitVec3d& obs) const override;

 private:
  SyntheticDescriptorConfig config_;
  Eigen::MatrixXd projection_;
};

/// G = normalize(backend(pad_and_resize(S))). Throws EmptyRegion.
Eigen::VectorXd extract_descriptor(const RegionCrop& crop, const UnitVec3d& obs,
                                   const DescriptorBackend& backend);

// --- database construction -------------------------------------------------

/// Crops and back-projects every mask of a frame. Regions with fewer than
/// `min_points` depth pixels are dropped. G and E are left unset.
std::vector<ObjectRegion> extract_regions(const Frame& frame, const std::vector<InstanceMask>& masks,
                                          int min_points = 10);

/// Goal-image regions with descriptors; depth is never read.
std::vector<QueryRegion> make_query_regions(const Frame& frame, const std::vector<InstanceMask>& masks,
                                            const DescriptorBackend& backend, int min_points = 10);

UnitVec3d ray_observation_vector(const RegionCrop& crop, const Pose3d& viewpoint,
                                 const CameraIntrinsicsd& intr);

struct KMeansConfig {
  int max_iterations = 100;
  int restarts = 10;
  std::uint64_t seed = 5;
};

struct KMeansResult {
  std::vector<int> labels;
  Eigen::Matrix3Xd centers;
  double inertia = 0;
};

/// Lloyd's algorithm with k-means++ seeding; best inertia over restarts.
KMeansResult kmeans(const Eigen::Matrix3Xd& points, int k, const KMeansConfig& config = {});

/// Groups regions into K instance lists by clustering cloud centroids.
/// Throws ClusterCountInfeasible when K exceeds the region count.
Database associate(std::vector<ObjectRegion> regions, int k, const KMeansConfig& config = {});

/// Maximum number of regions seen in a single frame. Throws NoRegions.
int infer_k(const std::vector<int>& regions_per_frame);

struct DatabaseConfig {
  int min_points = 10;
  KMeansConfig kmeans;
};

/// segment -> extract_regions -> (E, G) per region -> infer_k -> associate.
Database build_database(const std::vector<Frame>& frames, const Segmenter& segmenter,
                        const DescriptorBackend& backend, const DatabaseConfig& config = {});

}  // namespace mvr
