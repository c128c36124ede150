#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "mvr/bench.hpp"
#include "mvr/localization.hpp"
#include "mvr/matching.hpp"
#include "support.hpp"

using namespace mvr;
using mvr::testing::library;
using mvr::testing::make_instance;
using mvr::testing::make_scene;
using mvr::testing::sim_defaults;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd with_similarity(double s) {
  Eigen::VectorXd d(2);
  d << s, std::sqrt(1 - s * s);
  return d;
}

ObjectRegion stub_region(double similarity, const UnitVec3d& obs = {}) {
  ObjectRegion r;
  r.descriptor = with_similarity(similarity);
  r.obs_vec = obs;
  return r;
}

Eigen::VectorXd query_descriptor() {
  Eigen::VectorXd q(2);
  q << 1, 0;
  return q;
}

UnitVec3d ring_obs(double azimuth_deg, double polar_deg = 45) {
  const double a = deg2rad(azimuth_deg), p = deg2rad(polar_deg);
  return UnitVec3d::normalized(Eigen::Vector3d(std::sin(p) * std::cos(a), std::sin(p) * std::sin(a), std::cos(p)));
}

// Ring database: one instance, a region every 45 degrees of azimuth.
Database ring_db() {
  Database db;
  db.instances.resize(1);
  db.centroids.assign(1, Eigen::Vector3d::Zero());
  for (int k = 0; k < 8; ++k) db.instances[0].push_back(stub_region(0.9 - 0.01 * k, ring_obs(45.0 * k)));
  return db;
}

CandidateList all_of(const Database& db) { return candidates_of(0, rank_regions(query_descriptor(), db)); }

std::set<int> pruned_azimuths(const CandidateList& list, const Database& db) {
  std::set<int> out;
  for (const auto& c : list.candidates) {
    if (c.pruned) out.insert(static_cast<int>(std::lround(rad2deg(db.region(c.ref).obs_vec.azimuth()))));
  }
  return out;
}

// Records calls and never returns a match.
class NullMatcher final : public MatcherBackend {
 public:
  Correspondences2D match(const RegionCrop&, const RegionCrop&, int, std::uint64_t) const override {
    ++calls;
    return {};
  }
  mutable int calls = 0;
};

BenchConfig noiseless_config() {
  BenchConfig c;
  c.sim = sim_defaults();
  return c;
}

// The ring region of `object` that shares the most oracle matches with `goal`.
const ObjectRegion* best_view(const Database& db, const RegionCrop& goal, int object) {
  const OracleMatcher m;
  const ObjectRegion* best = nullptr;
  std::size_t most = 0;
  for (const auto& list : db.instances) {
    for (const auto& r : list) {
      if (r.truth_instance != object) continue;
      const std::size_t n = m.match(goal, r.crop, 256, 0).size();
      if (n > most) {
        most = n;
        best = &r;
      }
    }
  }
  return best;
}

Eigen::Vector3d world_point(const SceneState& scene, int instance, int model_id, int point) {
  return scene.placements[static_cast<std::size_t>(instance)].pose.lift() *
         Eigen::Vector3d(library()[static_cast<std::size_t>(model_id)].points.col(point));
}

}  // namespace

TEST_CASE("retrieval with a single instance") {
  Database db;
  db.instances.resize(1);
  db.centroids.assign(1, Eigen::Vector3d::Zero());
  for (const double s : {0.2, 0.9, 0.5, 0.7, 0.1}) db.instances[0].push_back(stub_region(s));
  const CandidateList list = retrieve_candidates(query_descriptor(), db, 10);
  CHECK(list.instance == 0);
  REQUIRE(list.candidates.size() == 5);
  for (std::size_t i = 1; i < list.candidates.size(); ++i) {
    CHECK(list.candidates[i - 1].similarity >= list.candidates[i].similarity);
    CHECK(list.candidates[i].ref.instance == 0);
  }
  CHECK(list.candidates.front().ref.index == 1);
}

TEST_CASE("retrieval votes over the top ranked regions") {
  Database db;
  db.instances.resize(2);
  db.centroids.assign(2, Eigen::Vector3d::Zero());
  for (const double s : {0.99, 0.97, 0.95, 0.93, 0.91, 0.89, 0.2, 0.1}) db.instances[0].push_back(stub_region(s));
  for (const double s : {0.98, 0.96, 0.94, 0.92, 0.3, 0.25}) db.instances[1].push_back(stub_region(s));
  CHECK(retrieve_candidates(query_descriptor(), db, 10).instance == 0);
  const auto order = vote_instances(rank_regions(query_descriptor(), db), 10);
  CHECK(order == std::vector<int>{0, 1});
  CHECK(retrieve_candidates(query_descriptor(), db, 10, {0}).instance == 1);
  CHECK_THROWS_AS(retrieve_candidates(query_descriptor(), db, 10, {0, 1}), NoCandidates);
  CHECK_THROWS_AS(retrieve_candidates(query_descriptor(), Database{}, 10), NoCandidates);

  // Five votes each: the instance holding the best region wins.
  Database tie;
  tie.instances.resize(2);
  tie.centroids.assign(2, Eigen::Vector3d::Zero());
  for (const double s : {0.97, 0.95, 0.93, 0.91, 0.89}) tie.instances[0].push_back(stub_region(s));
  for (const double s : {0.99, 0.94, 0.92, 0.90, 0.88}) tie.instances[1].push_back(stub_region(s));
  CHECK(retrieve_candidates(query_descriptor(), tie, 10).instance == 1);
}

TEST_CASE("pruning after a rejection") {
  const Database db = ring_db();
  CandidateList zero = all_of(db);
  prune_after_rejection(zero, 0, db, 0.0);
  CHECK(pruned_azimuths(zero, db) == std::set<int>{0});

  CandidateList full = all_of(db);
  prune_after_rejection(full, 0, db, kPi * std::sqrt(2.0));
  for (const auto& c : full.candidates) CHECK(c.pruned);

  // Same elevation, 45 degrees apart: distance pi/4 > pi/6.
  CandidateList thirty = all_of(db);
  CHECK(std::abs(angular_distance(ring_obs(0), ring_obs(45)) - kPi / 4) < 1e-12);
  prune_after_rejection(thirty, 0, db, deg2rad(30.0));
  CHECK(pruned_azimuths(thirty, db) == std::set<int>{0});

  CandidateList fifty = all_of(db);
  prune_after_rejection(fifty, 0, db, deg2rad(50.0));
  CHECK(pruned_azimuths(fifty, db) == std::set<int>{0, 45, -45});

  // Visited candidates are never re-marked.
  CandidateList visited = all_of(db);
  visited.candidates[1].visited = true;
  prune_after_rejection(visited, 0, db, kPi * std::sqrt(2.0));
  CHECK_FALSE(visited.candidates[1].pruned);
}

TEST_CASE("crop resize maps between image and matching frames") {
  std::vector<CropSample> s(1);
  s[0].x = 105;
  s[0].y = 52;
  const RegionCrop wide(100, 50, 40, 10, s);
  const CropResize m = CropResize::of(wide, 256);
  CHECK(m.scale == doctest::Approx(256.0 / 40));
  CHECK(m.pad_x == 0);
  CHECK(m.pad_y == 15);
  CHECK((m.to_normalized({100, 50}) - Eigen::Vector2d(0, 15 * 6.4)).norm() < 1e-12);
  CHECK((m.to_normalized({120, 55}) - Eigen::Vector2d(128, 128)).norm() < 1e-12);
  Rng rng(3);
  std::uniform_real_distribution<double> u(0, 40);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Vector2d p(100 + u(rng), 50 + u(rng) / 4);
    CHECK((m.to_image(m.to_normalized(p)) - p).norm() < 1e-9);
  }
}

TEST_CASE("oracle matcher and lifting on a moved object") {
  const SceneState initial = make_scene({{4, 0, 0.1, 0.05}});
  const SceneState goal = make_scene({{4, 35, -0.05, 0.1}});
  const auto inst = make_instance(initial, goal);
  const Pipeline pipe(noiseless_config(), library());
  const Database db = pipe.build(pipe.ring_frames(initial, inst));
  const Frame gf = pipe.home_frame(goal, inst, false);
  const auto queries = make_query_regions(gf, segment(gf), pipe.descriptors());
  REQUIRE(queries.size() == 1);
  const RegionCrop& g = queries[0].crop;
  const ObjectRegion* cand = best_view(db, g, 0);
  REQUIRE(cand != nullptr);
  const int res = 256;

  const OracleMatcher exact;
  const Correspondences2D m2d = exact.match(g, cand->crop, res, 1);
  REQUIRE(m2d.size() >= 12);
  const CropResize gm = CropResize::of(g, res), cm = CropResize::of(cand->crop, res);
  for (const Match2D& m : m2d) {
    CHECK(m.goal.x() >= 0);
    CHECK(m.goal.x() < res);
    CHECK(m.goal.y() >= 0);
    CHECK(m.goal.y() < res);
    CHECK(m.candidate.x() >= 0);
    CHECK(m.candidate.x() < res);
    const Eigen::Vector2d gi = gm.to_image(m.goal), ci = cm.to_image(m.candidate);
    const CropSample* gs = g.at(static_cast<int>(std::floor(gi.x())), static_cast<int>(std::floor(gi.y())));
    const CropSample* cs = cand->crop.at(static_cast<int>(std::floor(ci.x())), static_cast<int>(std::floor(ci.y())));
    REQUIRE(gs != nullptr);
    REQUIRE(cs != nullptr);
    CHECK(gs->feature_id() == cs->feature_id());
  }

  // Lifted points sit on the object surface in the initial scene.
  const Correspondences3D m3d = lift_to_3d(m2d, g, *cand, res);
  CHECK(m3d.size() == static_cast<Eigen::Index>(m2d.size()));
  for (Eigen::Index i = 0; i < m3d.size(); ++i) {
    const CropSample* gs = g.at(static_cast<int>(std::floor(m3d.pixels(0, i))), static_cast<int>(std::floor(m3d.pixels(1, i))));
    REQUIRE(gs != nullptr);
    CHECK((m3d.points.col(i) - world_point(initial, 0, gs->model_id, gs->point_index)).norm() < 1e-6);
    CHECK(std::abs(m3d.pixels(0, i) - gs->u) < 1e-9);
  }

  CHECK(OracleMatcher({1.0, 0, 0}).match(g, cand->crop, res, 1).empty());
  const OracleMatcher noisy({0.2, 1.0, 0.2});
  const auto a = noisy.match(g, cand->crop, res, 9), b = noisy.match(g, cand->crop, res, 9);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].goal == b[i].goal);
    CHECK(a[i].candidate == b[i].candidate);
    CHECK(a[i].goal.x() >= 0);
    CHECK(a[i].goal.x() < res);
  }
  OracleMatcherConfig capped;
  capped.max_matches = 10;
  CHECK(OracleMatcher(capped).match(g, cand->crop, res, 1).size() == 10);

  const Correspondences2D three(m2d.begin(), m2d.begin() + 3);
  CHECK_THROWS_AS(lift_to_3d(three, g, *cand, res), TooFewCorrespondences);

  // Without depth on half the candidate pixels, those pairs drop out.
  ObjectRegion partial = *cand;
  std::vector<CropSample> ss = partial.crop.samples();
  for (std::size_t i = 0; i < ss.size(); i += 2) {
    ss[i].cloud_index = -1;
    ss[i].depth = std::nan("");
  }
  partial.crop = RegionCrop(cand->crop.x0(), cand->crop.y0(), cand->crop.width(), cand->crop.height(), ss);
  const Correspondences3D half = lift_to_3d(m2d, g, partial, res);
  CHECK(half.size() < static_cast<Eigen::Index>(m2d.size()));
  std::set<std::pair<double, double>> pix;
  for (Eigen::Index i = 0; i < half.size(); ++i) CHECK(pix.insert({half.pixels(0, i), half.pixels(1, i)}).second);
}

TEST_CASE("descriptor matcher pairs a crop with itself") {
  const SceneState scene = make_scene({{4, 0, 0.1, 0.05}});
  const Frame f = render(scene, home_viewpoint(sim_defaults()), sim_defaults().intrinsics(), library());
  const auto regions = extract_regions(f, segment(f));
  REQUIRE(regions.size() == 1);
  const DescriptorNNMatcher nn(library());
  const auto m = nn.match(regions[0].crop, regions[0].crop, 256, 0);
  CHECK(m.size() > regions[0].crop.samples().size() / 2);
  for (const Match2D& x : m) CHECK((x.goal - x.candidate).norm() < 256.0 / regions[0].crop.width());
}

TEST_CASE("solve_pose on exact correspondences") {
  const SimConfig& sim = sim_defaults();
  const Pose3d home = home_viewpoint(sim);
  const auto k = sim.intrinsics();
  const SceneState initial = make_scene({{3, 10, 0.05, 0.0}});
  for (const PlanarTransformd& motion : {PlanarTransformd(), PlanarTransformd(deg2rad(40.0), 0.1, 0.0)}) {
    SceneState goal = initial;
    goal.placements[0].pose = motion * initial.placements[0].pose;
    const PlanarTransformd& truth = motion;
    const Frame gf = render(goal, home, k, library());
    Correspondences3D m3d;
    m3d.pixels.resize(2, static_cast<Eigen::Index>(gf.samples().size()));
    m3d.points.resize(3, static_cast<Eigen::Index>(gf.samples().size()));
    for (std::size_t i = 0; i < gf.samples().size(); ++i) {
      const auto& s = gf.samples()[i];
      m3d.pixels.col(static_cast<Eigen::Index>(i)) = Eigen::Vector2d(s.u, s.v);
      m3d.points.col(static_cast<Eigen::Index>(i)) = world_point(initial, 0, s.model_id, s.point_index);
    }
    const PoseEstimate e = solve_pose(m3d, k, home, LocalizationConfig{}, 5);
    CHECK(e.accepted);
    CHECK(e.planar);
    CHECK(e.inlier_count == m3d.size());
    const double angle = Eigen::AngleAxisd(e.T.rotation().transpose() * truth.lift().rotation()).angle();
    CHECK(angle < 1e-6);
    CHECK((e.T.translation() - truth.lift().translation()).norm() < 1e-6);
  }
}

TEST_CASE("solve_pose with 40 percent outliers and unit pixel noise") {
  BenchConfig cfg = noiseless_config();
  const Pipeline pipe(cfg, library());
  const OracleMatcher noisy({0.0, 1.0, 0.4});
  Rng rng(71);
  std::uniform_real_distribution<double> yaw(-kPi, kPi), pos(-0.25, 0.25);
  std::uniform_int_distribution<int> model(0, static_cast<int>(library().size()) - 1);
  int pass = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const int m = model(rng);
    const SceneState initial = make_scene({{m, rad2deg(yaw(rng)), pos(rng), pos(rng)}});
    const SceneState goal = make_scene({{m, rad2deg(yaw(rng)), pos(rng), pos(rng)}});
    const auto inst = make_instance(initial, goal);
    const Database db = pipe.build(pipe.ring_frames(initial, inst));
    const Frame gf = pipe.home_frame(goal, inst, false);
    const auto queries = make_query_regions(gf, segment(gf), pipe.descriptors());
    REQUIRE(queries.size() == 1);
    const ObjectRegion* cand = best_view(db, queries[0].crop, 0);
    REQUIRE(cand != nullptr);
    const auto m2d = noisy.match(queries[0].crop, cand->crop, 256, derive_seed(71, t));
    bool ok = false;
    try {
      const auto e = solve_pose(lift_to_3d(m2d, queries[0].crop, *cand, 256), gf.intrinsics(), gf.viewpoint(),
                                LocalizationConfig{}, derive_seed(72, t));
      const auto err = planar_error(e.T, inst.true_offsets[0]);
      ok = e.accepted && err.rotation_deg < 1.0 && err.translation_cm < 0.5;
    } catch (const Error&) {
    }
    pass += ok ? 1 : 0;
  }
  CHECK(pass >= 95);
}

TEST_CASE("a goal view close to a ring view is accepted on the first candidate") {
  const auto inst0 = mvr::testing::seeded_instance(21);
  const SceneState& scene = inst0.initial;
  const auto inst = make_instance(scene, scene);
  const Pipeline pipe(noiseless_config(), library());
  const Database db = pipe.build(pipe.ring_frames(scene, inst));
  Frame gf = render(scene, inst.ring_viewpoints[2], inst.config.intrinsics(), library(), 1000);
  gf.strip_depth();
  const auto queries = make_query_regions(gf, segment(gf), pipe.descriptors());
  REQUIRE_FALSE(queries.empty());
  for (const auto& q : queries) {
    const ObjectEstimate e = estimate_object(q, db, pipe.matcher(), LocalizationConfig{});
    CHECK(e.pose.accepted);
    CHECK(e.matcher_invocations == 1);
  }
}

TEST_CASE("hidden side in a single-view database is not accepted") {
  const SceneState initial = make_scene({{4, 0, 0, 0}});
  const SceneState goal = make_scene({{4, 180, 0, 0}});
  const auto inst = make_instance(initial, goal);
  const Pipeline pipe(noiseless_config(), library());
  const Database single = pipe.build({pipe.home_frame(initial, inst, true)});
  const GoalEstimates est = pipe.localize(pipe.home_frame(goal, inst, false), single);
  REQUIRE(est.objects.size() == 1);
  CHECK_FALSE(est.objects[0].pose.accepted);

  const Database multi = pipe.build(pipe.ring_frames(initial, inst));
  const GoalEstimates ok = pipe.localize(pipe.home_frame(goal, inst, false), multi);
  REQUIRE(ok.objects.size() == 1);
  CHECK(ok.objects[0].pose.accepted);
}

TEST_CASE("maximal pruning stops after one matcher invocation") {
  const auto inst = mvr::testing::seeded_instance(22);
  const Pipeline pipe(noiseless_config(), library());
  const Database db = pipe.build(pipe.ring_frames(inst.initial, inst));
  const Frame gf = pipe.home_frame(inst.goal, inst, false);
  const auto queries = make_query_regions(gf, segment(gf), pipe.descriptors());
  REQUIRE_FALSE(queries.empty());
  LocalizationConfig cfg;
  cfg.prune_angle = kPi * std::sqrt(2.0);
  cfg.fallback_instances = false;
  const NullMatcher null;
  const ObjectEstimate e = estimate_object(queries[0], db, null, cfg);
  CHECK(e.matcher_invocations == 1);
  CHECK(null.calls == 1);
  CHECK_FALSE(e.pose.accepted);

  cfg.fallback_instances = true;
  const ObjectEstimate f = estimate_object(queries[0], db, null, cfg);
  CHECK(f.matcher_invocations == static_cast<int>(f.visited_instance_start.size()));
}

TEST_CASE("candidate traversal is monotone and skips pruned candidates") {
  const Pipeline pipe(noiseless_config(), library());
  const NullMatcher null;
  for (std::uint64_t seed = 30; seed < 36; ++seed) {
    const auto inst = mvr::testing::seeded_instance(seed);
    const Database db = pipe.build(pipe.ring_frames(inst.initial, inst));
    const Frame gf = pipe.home_frame(inst.goal, inst, false);
    for (const auto& q : make_query_regions(gf, segment(gf), pipe.descriptors())) {
      LocalizationConfig cfg;
      const ObjectEstimate e = estimate_object(q, db, null, cfg);
      std::vector<int> bounds = e.visited_instance_start;
      bounds.push_back(static_cast<int>(e.visited.size()));
      std::set<std::pair<int, int>> seen;
      for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
        for (int i = bounds[s]; i < bounds[s + 1]; ++i) {
          const auto& ri = e.visited[static_cast<std::size_t>(i)];
          CHECK(seen.insert({ri.instance, ri.index}).second);
          if (i > bounds[s]) {
            CHECK(e.visited_similarity[static_cast<std::size_t>(i) - 1] >= e.visited_similarity[static_cast<std::size_t>(i)]);
          }
          // Every earlier candidate was rejected, so none may lie within the prune ball.
          for (int j = bounds[s]; j < i; ++j) {
            const auto& rj = e.visited[static_cast<std::size_t>(j)];
            CHECK(angular_distance(db.region(ri).obs_vec, db.region(rj).obs_vec) >= cfg.prune_angle);
          }
        }
      }
    }
  }
}

TEST_CASE("three-object scene localizes every object") {
  const SceneState initial = make_scene({{0, 0, -0.25, 0.1}, {4, 90, 0.2, 0.2}, {8, -45, 0.05, -0.25}});
  const SceneState goal = make_scene({{0, 50, -0.2, -0.1}, {4, 30, 0.25, 0.0}, {8, 45, -0.05, 0.25}});
  const auto inst = make_instance(initial, goal);
  const Pipeline pipe(noiseless_config(), library());
  const Database db = pipe.build(pipe.ring_frames(initial, inst));
  const GoalEstimates est = pipe.localize(pipe.home_frame(goal, inst, false), db);
  REQUIRE(est.objects.size() == 3);
  std::set<int> instances;
  for (const auto& e : est.objects) {
    CHECK(e.pose.accepted);
    REQUIRE(e.instance >= 0);
    CHECK(db.instances[static_cast<std::size_t>(e.instance)].front().truth_instance == e.truth_instance);
    instances.insert(e.instance);
    const auto err = planar_error(e.pose.T, inst.true_offsets[static_cast<std::size_t>(e.truth_instance)]);
    CHECK(err.rotation_deg < 0.01);
    CHECK(err.translation_cm < 0.01);
  }
  CHECK(instances.size() == 3);
}

TEST_CASE("twin objects get distinct instances") {
  const Pipeline pipe(noiseless_config(), library());
  int resolved = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    SimConfig sim = sim_defaults();
    sim.seed = seed;
    const int model = static_cast<int>(seed % library().size());
    const auto inst = generate_instance(sim, library(), {model, model});
    const Database db = pipe.build(pipe.ring_frames(inst.initial, inst));
    REQUIRE(db.size() == 2);
    const GoalEstimates est = pipe.localize(pipe.home_frame(inst.goal, inst, false), db);
    resolved += est.duplicate_resolutions;
    std::set<int> assigned;
    for (const auto& e : est.objects) {
      if (e.instance >= 0) CHECK(assigned.insert(e.instance).second);
    }
  }
  CHECK(resolved >= 1);
}

TEST_CASE("an empty goal frame gives no estimates") {
  const auto inst = mvr::testing::seeded_instance(23);
  const Pipeline pipe(noiseless_config(), library());
  const Database db = pipe.build(pipe.ring_frames(inst.initial, inst));
  const Frame empty(1000, inst.home_viewpoint, inst.config.intrinsics());
  const GoalEstimates est = pipe.localize(empty, db);
  CHECK(est.objects.empty());
  CHECK(est.duplicate_resolutions == 0);
}
