#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mvr/bench.hpp"
#include "mvr/io.hpp"
#include "support.hpp"

using namespace mvr;
using mvr::testing::library;
using mvr::testing::seeded_instance;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mvr_test_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("instance round trip is exact") {
  for (std::uint64_t seed : {1u, 2u, 17u}) {
    const RearrangementInstance inst = seeded_instance(seed);
    const Json j = to_json(inst);
    const RearrangementInstance back = instance_from_json(j);
    CHECK(to_json(back).dump() == j.dump());
    REQUIRE(back.initial.size() == inst.initial.size());
    for (int i = 0; i < inst.initial.size(); ++i) {
      const auto& a = inst.goal.placements[static_cast<std::size_t>(i)].pose;
      const auto& b = back.goal.placements[static_cast<std::size_t>(i)].pose;
      CHECK(a.yaw() == b.yaw());
      CHECK(a.tx() == b.tx());
      CHECK(a.ty() == b.ty());
    }
    const auto path = scratch("inst.json");
    write_json(path, j);
    CHECK(to_json(instance_from_json(read_json(path))).dump() == j.dump());
  }
}

TEST_CASE("database round trip is exact, NaN depth travels as null") {
  BenchConfig cfg;
  const Pipeline pipe(cfg, library());
  const auto inst = seeded_instance(5);
  Database db = pipe.build(pipe.ring_frames(inst.initial, inst));
  REQUIRE(db.region_count() > 0);

  // Knock out one depth value.
  ObjectRegion& r = db.instances[0][0];
  std::vector<CropSample> samples = r.crop.samples();
  samples[0].depth = std::numeric_limits<double>::quiet_NaN();
  r.crop = RegionCrop(r.crop.x0(), r.crop.y0(), r.crop.width(), r.crop.height(), samples);

  const Json j = to_json(db);
  CHECK(j["instances"][0]["regions"][0]["crop"]["depth"][0].is_null());
  const Database back = database_from_json(j);
  CHECK(to_json(back).dump() == j.dump());
  CHECK(std::isnan(back.instances[0][0].crop.samples()[0].depth));
  CHECK(back.size() == db.size());
  CHECK(back.region_count() == db.region_count());
  for (std::size_t u = 0; u < db.instances.size(); ++u) {
    for (std::size_t k = 0; k < db.instances[u].size(); ++k) {
      CHECK(back.instances[u][k].descriptor == db.instances[u][k].descriptor);
      CHECK(back.instances[u][k].cloud == db.instances[u][k].cloud);
    }
  }

  // Localizing against the reloaded dump gives the same report.
  const Frame goal = pipe.home_frame(inst.goal, inst, false);
  const Database fresh = pipe.build(pipe.ring_frames(inst.initial, inst));
  const Database reloaded = database_from_json(to_json(fresh));
  CHECK(pose_report(pipe.localize(goal, fresh)).dump() == pose_report(pipe.localize(goal, reloaded)).dump());
}

TEST_CASE("config readers") {
  SimConfig sim;
  from_json(Json{{"max_objects", 4}}, sim);
  CHECK(sim.max_objects == 4);
  CHECK(sim.min_objects == 1);
  CHECK_THROWS_AS(from_json(Json{{"max_objcts", 4}}, sim), ConfigParse);
  CHECK_THROWS_AS(from_json(Json{{"max_objects", "four"}}, sim), ConfigParse);
  CHECK_THROWS_AS(from_json(Json::array(), sim), ConfigParse);

  BenchConfig bench;
  from_json(Json{{"scenes", 3}, {"planner", {{"thres_fail", 5}}}}, bench);
  CHECK(bench.scenes == 3);
  CHECK_THROWS_AS(from_json(Json{{"scenes", -1}}, bench), ConfigParse);
  CHECK_THROWS_AS(from_json(Json{{"planner", {{"bogus", 1}}}}, bench), ConfigParse);
  CHECK_THROWS_AS(from_json(Json{{"matcher", "sift"}}, bench), ConfigParse);

  BenchConfig round;
  round.seed = 99;
  round.oracle.outlier_rate = 0.3;
  BenchConfig back;
  from_json(to_json(round), back);
  CHECK(to_json(back).dump() == to_json(round).dump());
}

TEST_CASE("file errors") {
  CHECK_THROWS_AS(read_json(scratch("does_not_exist.json")), IOFailure);
  const auto bad = scratch("bad.json");
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(read_json(bad), ConfigParse);
  CHECK_THROWS_AS(instance_from_json(Json{{"format", "other"}}), ConfigParse);
  CHECK_THROWS_AS(database_from_json(Json{{"format", kInstanceFormat}}), ConfigParse);
}
