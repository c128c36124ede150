#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "mvr/perception_db.hpp"
#include "mvr/render.hpp"
#include "mvr/segment.hpp"
#include "support.hpp"

using namespace mvr;
using mvr::testing::library;
using mvr::testing::make_scene;
using mvr::testing::sim_defaults;

namespace {

std::vector<Frame> ring(const SceneState& scene) {
  std::vector<Frame> out;
  int id = 0;
  for (const Pose3d& v : ring_viewpoints(sim_defaults())) {
    try {
      out.push_back(render(scene, v, sim_defaults().intrinsics(), library(), id++));
    } catch (const EmptyFrame&) {
    }
  }
  return out;
}

Eigen::Vector3d world_point(const SceneState& scene, int instance, int point) {
  const auto& pl = scene.placements[static_cast<std::size_t>(instance)];
  return pl.pose.lift() * Eigen::Vector3d(library()[static_cast<std::size_t>(pl.model_id)].points.col(point));
}

Eigen::VectorXd describe(const SceneState& scene, const Pose3d& view, const DescriptorBackend& backend) {
  const Frame f = render(scene, view, sim_defaults().intrinsics(), library());
  const auto regions = extract_regions(f, segment(f));
  REQUIRE(regions.size() == 1);
  return extract_descriptor(regions[0].crop, observation_vector(view, regions[0].cloud), backend);
}

RegionCrop upsample2(const RegionCrop& c) {
  std::vector<CropSample> out;
  for (const CropSample& s : c.samples()) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        CropSample t = s;
        t.x = 2 * s.x + dx;
        t.y = 2 * s.y + dy;
        t.u = 2 * s.u;
        t.v = 2 * s.v;
        out.push_back(t);
      }
    }
  }
  return RegionCrop(2 * c.x0(), 2 * c.y0(), 2 * c.width(), 2 * c.height(), std::move(out));
}

// Lowest within-cluster sum of squares over every 2-partition.
double brute_two_means(const Eigen::Matrix3Xd& pts) {
  const int n = static_cast<int>(pts.cols());
  double best = INFINITY;
  for (int mask = 1; mask < (1 << n) - 1; ++mask) {
    Eigen::Vector3d c[2] = {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
    int cnt[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      const int g = (mask >> i) & 1;
      c[g] += pts.col(i);
      ++cnt[g];
    }
    c[0] /= cnt[0];
    c[1] /= cnt[1];
    double s = 0;
    for (int i = 0; i < n; ++i) s += (pts.col(i) - c[(mask >> i) & 1]).squaredNorm();
    best = std::min(best, s);
  }
  return best;
}

}  // namespace

TEST_CASE("noiseless single-object region matches the visible world points") {
  const SceneState scene = make_scene({{4, 30, 0.05, -0.02}});
  const Pose3d view = ring_viewpoints(sim_defaults())[3];
  const Frame f = render(scene, view, sim_defaults().intrinsics(), library());
  const auto regions = extract_regions(f, segment(f));
  REQUIRE(regions.size() == 1);
  const ObjectRegion& r = regions[0];
  CHECK(r.truth_instance == 0);
  CHECK(static_cast<std::size_t>(r.cloud.cols()) == f.samples().size());
  for (const CropSample& s : r.crop.samples()) {
    REQUIRE(s.cloud_index >= 0);
    CHECK((r.cloud.col(s.cloud_index) - world_point(scene, 0, s.point_index)).norm() < 1e-6);
  }
}

TEST_CASE("region extraction thresholds and empty input") {
  const SceneState scene = make_scene({{4, 0, 0, 0}});
  const Frame f = render(scene, home_viewpoint(sim_defaults()), sim_defaults().intrinsics(), library());
  const auto& s = f.samples();
  REQUIRE(s.size() >= 5);
  int x0 = s[0].pixel_x(), y0 = s[0].pixel_y(), x1 = x0, y1 = y0;
  for (int i = 0; i < 5; ++i) {
    x0 = std::min(x0, s[static_cast<std::size_t>(i)].pixel_x());
    y0 = std::min(y0, s[static_cast<std::size_t>(i)].pixel_y());
    x1 = std::max(x1, s[static_cast<std::size_t>(i)].pixel_x());
    y1 = std::max(y1, s[static_cast<std::size_t>(i)].pixel_y());
  }
  PixelMask m(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
  for (int i = 0; i < 5; ++i) m.set(s[static_cast<std::size_t>(i)].pixel_x(), s[static_cast<std::size_t>(i)].pixel_y());
  const std::vector<InstanceMask> five{{0, m}};
  CHECK(extract_regions(f, five, 10).empty());
  CHECK(extract_regions(f, five, 5).size() == 1);
  CHECK(extract_regions(f, {}, 10).empty());
}

TEST_CASE("descriptors: determinism, scale normalization and instance separation") {
  const SyntheticDescriptorBackend backend;
  const SceneState scene = make_scene({{7, 15, 0, 0}});
  const Pose3d view = ring_viewpoints(sim_defaults())[1];
  const Frame f = render(scene, view, sim_defaults().intrinsics(), library());
  const auto regions = extract_regions(f, segment(f));
  REQUIRE(regions.size() == 1);
  const UnitVec3d e = observation_vector(view, regions[0].cloud);
  const Eigen::VectorXd g1 = extract_descriptor(regions[0].crop, e, backend);
  const Eigen::VectorXd g2 = extract_descriptor(regions[0].crop, e, backend);
  CHECK(g1 == g2);
  CHECK(std::abs(g1.norm() - 1) < 1e-6);
  CHECK(g1.size() == backend.dimension());

  const Eigen::VectorXd up = extract_descriptor(upsample2(regions[0].crop), e, backend);
  CHECK(g1.dot(up) > 0.995);

  CHECK_THROWS_AS(extract_descriptor(RegionCrop(), e, backend), EmptyRegion);

  // Same object nudged slightly versus a different object in the same spot.
  double same = 0, different = 0;
  int n_same = 0, n_diff = 0;
  const int models = static_cast<int>(library().size());
  for (int a = 0; a < models; ++a) {
    const Eigen::VectorXd ga = describe(make_scene({{a, 0, 0, 0}}), view, backend);
    same += ga.dot(describe(make_scene({{a, 5, 0.03, 0.02}}), view, backend));
    ++n_same;
    for (int b = a + 1; b < std::min(models, a + 4); ++b) {
      different += ga.dot(describe(make_scene({{b, 0, 0, 0}}), view, backend));
      ++n_diff;
    }
  }
  CHECK(different / n_diff < same / n_same);
}

TEST_CASE("infer_k") {
  CHECK(infer_k({3, 4, 4, 2}) == 4);
  CHECK(infer_k({1}) == 1);
  CHECK_THROWS_AS(infer_k({0, 0}), NoRegions);
  CHECK_THROWS_AS(infer_k({}), NoRegions);

  const SceneState five = make_scene({{0, 0, -0.25, -0.25}, {1, 40, 0.25, -0.25}, {2, 80, 0, 0},
                                      {3, 120, -0.25, 0.25}, {4, 160, 0.25, 0.25}});
  std::vector<int> counts;
  for (const Frame& f : ring(five)) counts.push_back(static_cast<int>(extract_regions(f, segment(f)).size()));
  CHECK(infer_k(counts) == 5);
}

TEST_CASE("two separated objects are grouped exactly by ground truth") {
  const SceneState scene = make_scene({{1, 10, -0.15, 0}, {5, -70, 0.15, 0}});
  const auto frames = ring(scene);
  REQUIRE(frames.size() == 8);
  const SyntheticDescriptorBackend backend;
  const Database db = build_database(frames, GroundTruthSegmenter(), backend);
  REQUIRE(db.size() == 2);
  std::map<int, int> truth_count;
  for (const Frame& f : frames) {
    for (const auto& r : extract_regions(f, segment(f))) ++truth_count[r.truth_instance];
  }
  std::set<int> truths;
  for (const auto& list : db.instances) {
    REQUIRE_FALSE(list.empty());
    for (const auto& r : list) CHECK(r.truth_instance == list.front().truth_instance);
    truths.insert(list.front().truth_instance);
    CHECK(static_cast<int>(list.size()) == truth_count[list.front().truth_instance]);
  }
  CHECK(truths == std::set<int>{0, 1});
}

TEST_CASE("associate with K = 1 and an infeasible K") {
  const SceneState scene = make_scene({{1, 10, -0.15, 0}, {5, -70, 0.15, 0}});
  std::vector<ObjectRegion> regions;
  for (const Frame& f : ring(scene)) {
    for (auto& r : extract_regions(f, segment(f))) regions.push_back(std::move(r));
  }
  const auto n = regions.size();
  const Database one = associate(regions, 1);
  REQUIRE(one.size() == 1);
  CHECK(one.instances[0].size() == n);
  CHECK_THROWS_AS(associate(regions, static_cast<int>(n) + 1), ClusterCountInfeasible);
  CHECK_THROWS_AS(associate(regions, 0), ClusterCountInfeasible);
}

TEST_CASE("k-means reaches the optimal two-cluster inertia on small sets") {
  Rng rng(23);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 30; ++t) {
    Eigen::Matrix3Xd pts(3, 9);
    for (int i = 0; i < 9; ++i) pts.col(i) = Eigen::Vector3d(u(rng) + (i < 4 ? 3 : 0), u(rng), u(rng));
    const KMeansResult r = kmeans(pts, 2);
    CHECK(r.inertia == doctest::Approx(brute_two_means(pts)).epsilon(1e-9));
    const KMeansResult again = kmeans(pts, 2);
    CHECK(again.labels == r.labels);
  }
}

TEST_CASE("ring database over three objects") {
  const SceneState scene = make_scene({{0, 0, -0.25, 0.1}, {4, 90, 0.2, 0.2}, {8, -45, 0.05, -0.25}});
  const auto frames = ring(scene);
  const SyntheticDescriptorBackend backend;
  const DatabaseConfig config;
  const Database db = build_database(frames, GroundTruthSegmenter(), backend, config);
  REQUIRE(db.size() == 3);

  // Frames in which each object shows at least min_points pixels.
  std::map<int, int> visible;
  for (const Frame& f : frames) {
    std::map<int, int> px;
    for (const auto& s : f.samples()) ++px[s.instance];
    for (const auto& [inst, c] : px) visible[inst] += c >= config.min_points ? 1 : 0;
  }
  int total = 0;
  for (std::size_t c = 0; c < db.instances.size(); ++c) {
    const auto& list = db.instances[c];
    CHECK(list.size() >= 6);
    CHECK(static_cast<int>(list.size()) == visible[list.front().truth_instance]);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const ObjectRegion& r : list) {
      CHECK(r.truth_instance == list.front().truth_instance);
      CHECK(r.cloud.cols() > 0);
      CHECK(std::abs(r.descriptor.norm() - 1) < 1e-6);
      const UnitVec3d e = observation_vector(r.viewpoint, r.cloud);
      CHECK((e.vec() - r.obs_vec.vec()).norm() < 1e-9);
      mean += centroid(r.cloud);
      ++total;
    }
    mean /= static_cast<double>(list.size());
    CHECK((mean - db.centroids[c]).norm() < 1e-12);
  }
  CHECK(total == db.region_count());

  const Database again = build_database(frames, GroundTruthSegmenter(), backend, config);
  REQUIRE(again.size() == db.size());
  for (std::size_t c = 0; c < db.instances.size(); ++c) {
    REQUIRE(again.instances[c].size() == db.instances[c].size());
    for (std::size_t i = 0; i < db.instances[c].size(); ++i) {
      CHECK(again.instances[c][i].descriptor == db.instances[c][i].descriptor);
      CHECK(again.instances[c][i].cloud == db.instances[c][i].cloud);
      CHECK(again.instances[c][i].obs_vec.vec() == db.instances[c][i].obs_vec.vec());
    }
  }
}

TEST_CASE("single-frame database and empty input") {
  const SceneState scene = make_scene({{0, 0, -0.25, 0.1}, {4, 90, 0.2, 0.2}});
  const SyntheticDescriptorBackend backend;
  const Frame home = render(scene, home_viewpoint(sim_defaults()), sim_defaults().intrinsics(), library());
  const Database db = build_database({home}, GroundTruthSegmenter(), backend);
  CHECK(db.size() == 2);
  CHECK(db.region_count() == 2);

  const Frame empty(0, home_viewpoint(sim_defaults()), sim_defaults().intrinsics());
  CHECK_THROWS_AS(build_database({empty}, GroundTruthSegmenter(), backend), NoRegions);
  CHECK_THROWS_AS(build_database({}, GroundTruthSegmenter(), backend), NoRegions);
}

TEST_CASE("association purity over generated scenes") {
  const SyntheticDescriptorBackend backend;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto inst = mvr::testing::seeded_instance(seed);
    const Database db = build_database(ring(inst.initial), GroundTruthSegmenter(), backend);
    std::set<int> truths;
    for (const auto& list : db.instances) {
      for (const auto& r : list) CHECK(r.truth_instance == list.front().truth_instance);
      truths.insert(list.front().truth_instance);
    }
    CHECK(static_cast<int>(truths.size()) == db.size());
  }
}
