#include "mvr/perception_db.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "mvr/random.hpp"

namespace mvr {

RegionCrop::RegionCrop(int x0, int y0, int width, int height, std::vector<CropSample> samples)
    : x0_(x0), y0_(y0), width_(width), height_(height), samples_(std::move(samples)),
      index_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), -1) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const int lx = samples_[i].x - x0_, ly = samples_[i].y - y0_;
    if (lx < 0 || ly < 0 || lx >= width_ || ly >= height_) {
      throw std::out_of_range("crop sample outside the crop window");
    }
    index_[static_cast<std::size_t>(ly) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(lx)] =
        static_cast<std::int32_t>(i);
  }
}

const CropSample* RegionCrop::at(int x, int y) const {
  const int lx = x - x0_, ly = y - y0_;
  if (lx < 0 || ly < 0 || lx >= width_ || ly >= height_) return nullptr;
  const std::int32_t i =
      index_[static_cast<std::size_t>(ly) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(lx)];
  return i < 0 ? nullptr : &samples_[static_cast<std::size_t>(i)];
}

int Database::region_count() const {
  int n = 0;
  for (const auto& list : instances) n += static_cast<int>(list.size());
  return n;
}

// --- descriptors -----------------------------------------------------------

NormalizedCrop pad_and_resize(const RegionCrop& crop, int resolution) {
  NormalizedCrop out;
  out.resolution = resolution;
  out.words.assign(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution), -1);
  const double side = std::max(crop.width(), crop.height());
  const double pad_x = (side - crop.width()) / 2.0;
  const double pad_y = (side - crop.height()) / 2.0;
  const double step = side / resolution;
  for (int j = 0; j < resolution; ++j) {
    const double sy = (j + 0.5) * step - pad_y;
    if (sy < 0) continue;
    for (int i = 0; i < resolution; ++i) {
      const double sx = (i + 0.5) * step - pad_x;
      if (sx < 0) continue;
      const CropSample* s = crop.at(crop.x0() + static_cast<int>(sx), crop.y0() + static_cast<int>(sy));
      if (s != nullptr) {
        out.words[static_cast<std::size_t>(j) * static_cast<std::size_t>(resolution) + static_cast<std::size_t>(i)] =
            s->word;
      }
    }
  }
  return out;
}

namespace {
constexpr int kObsBins = 8;
}

SyntheticDescriptorBackend::SyntheticDescriptorBackend(const SyntheticDescriptorConfig& config)
    : config_(config) {
  const int input = config.grid * config.grid * config.vocabulary + kObsBins;
  Rng rng(derive_seed(config.seed, 0xDE5C));
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(config.dimension)));
  projection_.resize(config.dimension, input);
  for (Eigen::Index j = 0; j < projection_.cols(); ++j) {
    for (Eigen::Index i = 0; i < projection_.rows(); ++i) projection_(i, j) = gauss(rng);
  }
}

Eigen::VectorXd SyntheticDescriptorBackend::aggregate(const NormalizedCrop& crop, const UnitVec3d& obs) const {
  const int r = crop.resolution, g = config_.grid, vocab = config_.vocabulary;
  std::map<int, double> hist;
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < r; ++i) {
      const int w = crop.words[static_cast<std::size_t>(j) * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)];
      if (w < 0 || w >= vocab) continue;
      const int cell = (j * g / r) * g + (i * g / r);
      hist[cell * vocab + w] += 1.0;
    }
  }
  double hist_norm = 0;
  for (const auto& [bin, c] : hist) hist_norm += c * c;
  hist_norm = std::sqrt(hist_norm);

  Eigen::VectorXd out = Eigen::VectorXd::Zero(config_.dimension);
  if (hist_norm > 0) {
    for (const auto& [bin, c] : hist) out += projection_.col(bin) * (c / hist_norm);
  }
  // Soft 8-bin azimuth code of the observation vector.
  const double a = (obs.azimuth() + std::numbers::pi) / (2 * std::numbers::pi) * kObsBins;
  const int lo = static_cast<int>(std::floor(a)) % kObsBins;
  const int hi = (lo + 1) % kObsBins;
  const double frac = a - std::floor(a);
  const Eigen::Index base = static_cast<Eigen::Index>(g) * g * vocab;
  Eigen::Vector2d code(1 - frac, frac);
  code.normalize();
  out += projection_.col(base + lo) * (config_.obs_weight * code(0));
  out += projection_.col(base + hi) * (config_.obs_weight * code(1));
  return out;
}

Eigen::VectorXd extract_descriptor(const RegionCrop& crop, const UnitVec3d& obs,
                                   const DescriptorBackend& backend) {
  if (crop.empty()) throw EmptyRegion("cannot describe an empty region");
  Eigen::VectorXd g = backend.aggregate(pad_and_resize(crop, backend.resolution()), obs);
  const double n = g.norm();
  if (!(n > 0)) throw EmptyRegion("descriptor aggregate vanished");
  return g / n;
}

// --- regions ---------------------------------------------------------------

namespace {

RegionCrop crop_under_mask(const Frame& frame, const PixelMask& mask, bool with_depth, int& truth) {
  std::vector<CropSample> samples;
  std::map<int, int> votes;
  int min_x = std::numeric_limits<int>::max(), min_y = min_x, max_x = -1, max_y = -1;
  for (int y = mask.y0(); y < mask.y0() + mask.height(); ++y) {
    for (int x = mask.x0(); x < mask.x0() + mask.width(); ++x) {
      if (!mask.contains(x, y)) continue;
      const FeatureSample* f = frame.at(x, y);
      if (f == nullptr) continue;
      CropSample c;
      c.x = x;
      c.y = y;
      c.u = f->u;
      c.v = f->v;
      c.depth = with_depth ? f->depth : std::numeric_limits<double>::quiet_NaN();
      c.model_id = f->model_id;
      c.point_index = f->point_index;
      c.word = f->word;
      c.truth_instance = f->instance;
      c.view_dir_local = f->view_dir_local;
      samples.push_back(c);
      ++votes[f->instance];
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  truth = -1;
  int best = 0;
  for (const auto& [id, n] : votes) {
    if (n > best) {
      best = n;
      truth = id;
    }
  }
  if (samples.empty()) return {};
  return RegionCrop(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1, std::move(samples));
}

}  // namespace

std::vector<ObjectRegion> extract_regions(const Frame& frame, const std::vector<InstanceMask>& masks,
                                          int min_points) {
  std::vector<ObjectRegion> out;
  if (!frame.has_depth()) return out;
  for (const InstanceMask& m : masks) {
    int truth = -1;
    RegionCrop crop = crop_under_mask(frame, m.mask, true, truth);
    if (static_cast<int>(crop.samples().size()) < min_points || crop.empty()) continue;

    std::vector<CropSample> samples = crop.samples();
    PointCloudd cloud(3, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const CropSample& s = samples[i];
      cloud.col(static_cast<Eigen::Index>(i)) =
          back_project(frame.intrinsics(), frame.viewpoint(), s.u, s.v, s.depth);
      samples[i].cloud_index = static_cast<int>(i);
    }
    ObjectRegion r;
    r.crop = RegionCrop(crop.x0(), crop.y0(), crop.width(), crop.height(), std::move(samples));
    r.cloud = std::move(cloud);
    r.viewpoint = frame.viewpoint();
    r.intrinsics = frame.intrinsics();
    r.source_frame_id = frame.frame_id();
    r.truth_instance = truth;
    out.push_back(std::move(r));
  }
  return out;
}

UnitVec3d ray_observation_vector(const RegionCrop& crop, const Pose3d& viewpoint,
                                 const CameraIntrinsicsd& intr) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const CropSample& s : crop.samples()) mean += Eigen::Vector2d(s.u, s.v);
  mean /= static_cast<double>(std::max<std::size_t>(1, crop.samples().size()));
  const Eigen::Vector3d ray((mean.x() - intr.cx) / intr.fx, (mean.y() - intr.cy) / intr.fy, 1.0);
  return UnitVec3d::normalized(-(viewpoint.rotation() * ray));
}

std::vector<QueryRegion> make_query_regions(const Frame& frame, const std::vector<InstanceMask>& masks,
                                            const DescriptorBackend& backend, int min_points) {
  std::vector<QueryRegion> out;
  for (const InstanceMask& m : masks) {
    QueryRegion q;
    q.crop = crop_under_mask(frame, m.mask, false, q.truth_instance);
    if (static_cast<int>(q.crop.samples().size()) < min_points || q.crop.empty()) continue;
    q.viewpoint = frame.viewpoint();
    q.intrinsics = frame.intrinsics();
    q.source_frame_id = frame.frame_id();
    q.label = m.instance_id;
    q.obs_vec = ray_observation_vector(q.crop, q.viewpoint, q.intrinsics);
    q.descriptor = extract_descriptor(q.crop, q.obs_vec, backend);
    out.push_back(std::move(q));
  }
  return out;
}

// --- association -----------------------------------------------------------

namespace {

double assign(const Eigen::Matrix3Xd& points, const Eigen::Matrix3Xd& centers, std::vector<int>& labels) {
  double inertia = 0;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    Eigen::Index best = 0;
    const double d = (centers.colwise() - points.col(i)).colwise().squaredNorm().minCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    inertia += d;
  }
  return inertia;
}

KMeansResult lloyd(const Eigen::Matrix3Xd& points, int k, int max_iterations, Rng& rng) {
  const Eigen::Index n = points.cols();
  Eigen::Matrix3Xd centers(3, k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.col(0) = points.col(first(rng));
  Eigen::VectorXd d2 = (points.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double target = unit(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2(pick);
        if (target < 0) break;
      }
    } else {
      pick = first(rng);
    }
    centers.col(c) = points.col(pick);
    d2 = d2.cwiseMin((points.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }

  KMeansResult res;
  res.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < max_iterations; ++it) {
    assign(points, centers, labels);
    Eigen::Matrix3Xd sums = Eigen::Matrix3Xd::Zero(3, k);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(labels[static_cast<std::size_t>(i)]) += points.col(i);
      ++counts(labels[static_cast<std::size_t>(i)]);
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0) {
        centers.col(c) = sums.col(c) / counts(c);
      } else {
        // Re-seed an empty cluster at the point worst served by its center.
        Eigen::Index far = 0;
        Eigen::VectorXd dist(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          dist(i) = (points.col(i) - centers.col(labels[static_cast<std::size_t>(i)])).squaredNorm();
        }
        dist.maxCoeff(&far);
        centers.col(c) = points.col(far);
        labels[static_cast<std::size_t>(far)] = c;
      }
    }
    if (labels == res.labels) break;
    res.labels = labels;
  }
  res.inertia = assign(points, centers, res.labels);
  res.centers = centers;
  return res;
}

}  // namespace

KMeansResult kmeans(const Eigen::Matrix3Xd& points, int k, const KMeansConfig& config) {
  if (k < 1 || k > points.cols()) {
    throw ClusterCountInfeasible("k-means needs 1 <= K <= number of points");
  }
  Rng rng(config.seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, config.restarts); ++r) {
    KMeansResult res = lloyd(points, k, config.max_iterations, rng);
    // Every cluster must own at least one point.
    std::vector<int> used(static_cast<std::size_t>(k), 0);
    for (const int l : res.labels) used[static_cast<std::size_t>(l)] = 1;
    if (std::find(used.begin(), used.end(), 0) != used.end()) continue;
    if (res.inertia < best.inertia) best = std::move(res);
  }
  if (best.labels.empty()) throw ClusterCountInfeasible("k-means produced empty clusters");
  return best;
}

Database associate(std::vector<ObjectRegion> regions, int k, const KMeansConfig& config) {
  if (k < 1) throw ClusterCountInfeasible("K must be positive");
  if (k > static_cast<int>(regions.size())) {
    throw ClusterCountInfeasible("K = " + std::to_string(k) + " exceeds the " +
                                 std::to_string(regions.size()) + " available regions");
  }
  Eigen::Matrix3Xd centers(3, static_cast<Eigen::Index>(regions.size()));
  for (std::size_t i = 0; i < regions.size(); ++i) {
    centers.col(static_cast<Eigen::Index>(i)) = centroid(regions[i].cloud);
  }
  const KMeansResult km = kmeans(centers, k, config);

  // Instance order: by the first region (in input order) that joins each cluster.
  std::vector<int> order(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (const int l : km.labels) {
    if (order[static_cast<std::size_t>(l)] < 0) order[static_cast<std::size_t>(l)] = next++;
  }
  Database db;
  db.instances.resize(static_cast<std::size_t>(k));
  db.centroids.assign(static_cast<std::size_t>(k), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const int inst = order[static_cast<std::size_t>(km.labels[i])];
    db.centroids[static_cast<std::size_t>(inst)] += centers.col(static_cast<Eigen::Index>(i));
    db.instances[static_cast<std::size_t>(inst)].push_back(std::move(regions[i]));
  }
  for (std::size_t c = 0; c < db.instances.size(); ++c) {
    db.centroids[c] /= static_cast<double>(db.instances[c].size());
  }
  return db;
}

int infer_k(const std::vector<int>& regions_per_frame) {
  const int k = regions_per_frame.empty() ? 0
                                          : *std::max_element(regions_per_frame.begin(), regions_per_frame.end());
  if (k <= 0) throw NoRegions("no object region in any frame");
  return k;
}

Database build_database(const std::vector<Frame>& frames, const Segmenter& segmenter,
                        const DescriptorBackend& backend, const DatabaseConfig& config) {
  std::vector<ObjectRegion> all;
  std::vector<int> counts;
  for (const Frame& f : frames) {
    std::vector<ObjectRegion> regions = extract_regions(f, segmenter.segment(f), config.min_points);
    counts.push_back(static_cast<int>(regions.size()));
    for (ObjectRegion& r : regions) {
      r.obs_vec = observation_vector(r.viewpoint, r.cloud);
      r.descriptor = extract_descriptor(r.crop, r.obs_vec, backend);
      all.push_back(std::move(r));
    }
  }
  return associate(std::move(all), infer_k(counts), config.kmeans);
}

}  // namespace mvr
