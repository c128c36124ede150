#include "mvr/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "mvr/bench.hpp"
#include "mvr/errors.hpp"
#include "mvr/io.hpp"
#include "mvr/render.hpp"

namespace mvr {

std::filesystem::path default_out_dir() {
  const char* env = std::getenv("REARRANGE_OUT_DIR");
  return env != nullptr && *env != '\0' ? std::filesystem::path(env) : std::filesystem::path("out");
}

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "bench config file (JSON)");
  sub->add_option("--seed", c.seed, "override the master seed");
  sub->add_option("--out", c.out, "output directory (default $REARRANGE_OUT_DIR or ./out)");
}

BenchConfig load_config(const Common& c) {
  BenchConfig cfg;
  if (!c.config.empty()) from_json(read_json(c.config), cfg);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.localization.seed = derive_seed(*c.seed, 0x10C);
    cfg.planner.seed = derive_seed(*c.seed, 0x97A);
  }
  return cfg;
}

std::filesystem::path out_dir(const Common& c) { return c.out.empty() ? default_out_dir() : std::filesystem::path(c.out); }

int cmd_gen(const Common& c, int count) {
  const BenchConfig cfg = load_config(c);
  const auto dir = out_dir(c);
  const ModelLibrary lib = generate_model_library(cfg.sim);
  const int n = count >= 0 ? count : cfg.scenes;
  Json files = Json::array();
  int written = 0, failed = 0;
  for (int i = 0; i < n; ++i) {
    SimConfig sim = cfg.sim;
    sim.seed = scene_seed(cfg, i);
    try {
      const RearrangementInstance inst = generate_instance(sim, lib);
      char name[64];
      std::snprintf(name, sizeof name, "scene_%04d.json", i);
      write_json(dir / "instances" / name, to_json(inst));
      files.push_back(Json{{"index", i}, {"seed", sim.seed}, {"objects", inst.initial.size()},
                           {"file", std::string("instances/") + name}});
      ++written;
    } catch (const PlacementFailure& e) {
      files.push_back(Json{{"index", i}, {"seed", sim.seed}, {"error", e.what()}});
      ++failed;
    }
  }
  write_json(dir / "manifest.json", Json{{"format", kManifestFormat},
                                         {"seed", cfg.seed},
                                         {"count", written},
                                         {"failed", failed},
                                         {"library", {{"seed", cfg.sim.library_seed}, {"size", cfg.sim.library_size}}},
                                         {"config", to_json(cfg)},
                                         {"instances", files}});
  std::cout << "wrote " << written << " instances to " << dir.string() << " (" << failed << " failed)\n";
  return 0;
}

RearrangementInstance load_instance(const std::string& path) { return instance_from_json(read_json(path)); }

int cmd_build_db(const Common& c, const std::string& instance_path, bool single_view) {
  BenchConfig cfg = load_config(c);
  const RearrangementInstance inst = load_instance(instance_path);
  cfg.sim = inst.config;
  const ModelLibrary lib = generate_model_library(inst.config);
  const Pipeline pipe(cfg, lib);
  const Database db = single_view ? pipe.build({pipe.home_frame(inst.initial, inst, true)})
                                  : pipe.build(pipe.ring_frames(inst.initial, inst));
  const auto dir = out_dir(c);
  write_json(dir / "database.json", to_json(db));
  std::cout << "database: " << db.size() << " instances, " << db.region_count() << " regions -> "
            << (dir / "database.json").string() << "\n";
  return 0;
}

int cmd_localize(const Common& c, const std::string& instance_path, const std::string& db_path) {
  BenchConfig cfg = load_config(c);
  const RearrangementInstance inst = load_instance(instance_path);
  cfg.sim = inst.config;
  const ModelLibrary lib = generate_model_library(inst.config);
  const Pipeline pipe(cfg, lib);
  const Database db = db_path.empty() ? pipe.build(pipe.ring_frames(inst.initial, inst))
                                      : database_from_json(read_json(db_path));
  const GoalEstimates est = pipe.localize(pipe.home_frame(inst.goal, inst, false), db);
  const auto dir = out_dir(c);
  write_json(dir / "poses.json", pose_report(est));
  int accepted = 0;
  for (const auto& e : est.objects) accepted += e.pose.accepted ? 1 : 0;
  std::cout << "localized " << est.objects.size() << " goal regions, " << accepted << " accepted -> "
            << (dir / "poses.json").string() << "\n";
  return 0;
}

int cmd_rearrange(const Common& c, const std::string& instance_path) {
  BenchConfig cfg = load_config(c);
  const RearrangementInstance inst = load_instance(instance_path);
  cfg.sim = inst.config;
  const ModelLibrary lib = generate_model_library(inst.config);
  const Pipeline pipe(cfg, lib);
  const Database db = pipe.build(pipe.ring_frames(inst.initial, inst));
  const GoalEstimates est = pipe.localize(pipe.home_frame(inst.goal, inst, false), db);
  const int k = inst.initial.size();
  const auto binding = bind_instances(db, inst.initial);
  const auto claims = claims_by_object(est, binding, k);
  std::vector<std::optional<PlanarTransformd>> offsets(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const ObjectEstimate* e = claims[static_cast<std::size_t>(j)];
    if (e != nullptr && e->pose.accepted) offsets[static_cast<std::size_t>(j)] = to_planar(e->pose.T);
  }
  const ExecutionResult res = plan_and_execute(inst.initial, offsets, cfg.planner);
  Json errors = Json::array();
  bool success = true;
  for (int j = 0; j < k; ++j) {
    const auto& a = res.final_scene.placements[static_cast<std::size_t>(j)].pose;
    const auto& b = inst.goal.placements[static_cast<std::size_t>(j)].pose;
    const double dyaw = rad2deg(std::abs(wrap_angle(a.yaw() - b.yaw())));
    const double dt = (a.translation() - b.translation()).norm() * 100;
    success = success && dyaw < cfg.planner.in_place_rotation_deg && dt < cfg.planner.in_place_translation * 100;
    errors.push_back(Json{{"object", j}, {"rotation_error_deg", dyaw}, {"translation_error_cm", dt}});
  }
  Json out = to_json(res);
  out["success"] = success;
  out["final_errors"] = errors;
  out["poses"] = pose_report(est);
  const auto dir = out_dir(c);
  write_json(dir / "rearrange.json", out);
  std::cout << "rearrange: " << (success ? "success" : "incomplete") << ", " << res.total_manipulations()
            << " manipulations in " << res.outer_iterations << " passes -> " << (dir / "rearrange.json").string()
            << "\n";
  return 0;
}

int cmd_bench(const Common& c, bool pose, int scenes) {
  BenchConfig cfg = load_config(c);
  if (scenes >= 0) cfg.scenes = scenes;
  const MetricsReport rep = pose ? run_pose_bench(cfg) : run_completion_bench(cfg);
  write_report(rep, out_dir(c));
  std::cout << format_table(rep);
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Multi-view image-goal rearrangement: datasets, databases, localization, planning, benchmarks"};
  app.require_subcommand(1);
  Common common;
  int count = -1, scenes = -1;
  std::string instance, database;
  bool single_view = false;

  auto* gen = app.add_subcommand("gen", "generate a dataset of instances");
  add_common(gen, common);
  gen->add_option("--count", count, "number of instances (default: config scenes)");

  auto* build = app.add_subcommand("build-db", "build the database of an instance's initial scene");
  add_common(build, common);
  build->add_option("--instance", instance, "instance file")->required();
  build->add_flag("--single-view", single_view, "use only the home view");

  auto* loc = app.add_subcommand("localize", "estimate goal poses of an instance");
  add_common(loc, common);
  loc->add_option("--instance", instance, "instance file")->required();
  loc->add_option("--database", database, "database dump (default: build from the ring)");

  auto* rearr = app.add_subcommand("rearrange", "perceive, plan and execute one instance");
  add_common(rearr, common);
  rearr->add_option("--instance", instance, "instance file")->required();

  auto* bp = app.add_subcommand("bench-pose", "pose-estimation benchmark");
  add_common(bp, common);
  bp->add_option("--scenes", scenes, "override the scene count");

  auto* bc = app.add_subcommand("bench-completion", "task-completion benchmark");
  add_common(bc, common);
  bc->add_option("--scenes", scenes, "override the scene count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (gen->parsed()) return cmd_gen(common, count);
    if (build->parsed()) return cmd_build_db(common, instance, single_view);
    if (loc->parsed()) return cmd_localize(common, instance, database);
    if (rearr->parsed()) return cmd_rearrange(common, instance);
    if (bp->parsed()) return cmd_bench(common, true, scenes);
    if (bc->parsed()) return cmd_bench(common, false, scenes);
  } catch (const ConfigParse& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IOFailure& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mvr
