#include "mvr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "mvr/errors.hpp"
#include "mvr/random.hpp"
#include "mvr/render.hpp"

namespace mvr {

namespace {

constexpr int kHomeFrameId = 1000;
constexpr const char* kMultiView = "multi-view";
constexpr const char* kSingleView = "single-view";

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

Json number_or_null(double x) { return std::isnan(x) ? Json(nullptr) : Json(x); }

}  // namespace

std::string to_string(MatcherKind k) { return k == MatcherKind::oracle ? "oracle" : "descriptor_nn"; }
std::string to_string(CompletionSetting s) { return s == CompletionSetting::one_step ? "one-step" : "multi-step"; }

Json to_json(const BenchConfig& c) {
  Json regimes = Json::array();
  for (const auto r : c.regimes) regimes.push_back(to_string(r));
  return Json{{"scenes", c.scenes},
              {"seed", c.seed},
              {"sim", to_json(c.sim)},
              {"matcher", to_string(c.matcher)},
              {"oracle", to_json(c.oracle)},
              {"nn_ratio", c.nn_ratio},
              {"segmentation", to_json(c.segmentation)},
              {"descriptor", to_json(c.descriptor)},
              {"database", to_json(c.database)},
              {"localization", to_json(c.localization)},
              {"planner", to_json(c.planner)},
              {"setting", to_string(c.setting)},
              {"regimes", regimes},
              {"single_view_ablation", c.single_view_ablation},
              {"max_rounds", c.max_rounds}};
}

void from_json(const Json& j, BenchConfig& c) {
  if (!j.is_object()) throw ConfigParse("bench config must be an object");
  static const std::vector<std::string> known{"scenes",       "seed",         "sim",        "matcher",
                                              "oracle",       "nn_ratio",     "segmentation", "descriptor",
                                              "database",     "localization", "planner",    "setting",
                                              "regimes",      "single_view_ablation", "max_rounds"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigParse("unknown key bench." + k);
  }
  try {
    if (j.contains("scenes")) c.scenes = j.at("scenes").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("nn_ratio")) c.nn_ratio = j.at("nn_ratio").get<double>();
    if (j.contains("single_view_ablation")) c.single_view_ablation = j.at("single_view_ablation").get<bool>();
    if (j.contains("max_rounds")) c.max_rounds = j.at("max_rounds").get<int>();
    if (j.contains("matcher")) {
      const auto m = j.at("matcher").get<std::string>();
      if (m == "oracle") {
        c.matcher = MatcherKind::oracle;
      } else if (m == "descriptor_nn") {
        c.matcher = MatcherKind::descriptor_nn;
      } else {
        throw ConfigParse("unknown matcher '" + m + "'");
      }
    }
    if (j.contains("setting")) {
      const auto s = j.at("setting").get<std::string>();
      if (s == "one-step") {
        c.setting = CompletionSetting::one_step;
      } else if (s == "multi-step") {
        c.setting = CompletionSetting::multi_step;
      } else {
        throw ConfigParse("unknown setting '" + s + "'");
      }
    }
    if (j.contains("regimes")) {
      c.regimes.clear();
      for (const auto& r : j.at("regimes")) c.regimes.push_back(parse_regime(r.get<std::string>()));
    }
  } catch (const Json::exception& e) {
    throw ConfigParse(std::string("bench: ") + e.what());
  }
  if (j.contains("sim")) from_json(j.at("sim"), c.sim);
  if (j.contains("oracle")) from_json(j.at("oracle"), c.oracle);
  if (j.contains("segmentation")) from_json(j.at("segmentation"), c.segmentation);
  if (j.contains("descriptor")) from_json(j.at("descriptor"), c.descriptor);
  if (j.contains("database")) from_json(j.at("database"), c.database);
  if (j.contains("localization")) from_json(j.at("localization"), c.localization);
  if (j.contains("planner")) from_json(j.at("planner"), c.planner);
  if (c.scenes < 0) throw ConfigParse("bench.scenes must be non-negative");
  if (c.max_rounds < 1) throw ConfigParse("bench.max_rounds must be positive");
}

std::uint64_t scene_seed(const BenchConfig& c, int index) {
  return derive_seed(c.seed, 0x5CE7E, static_cast<std::uint64_t>(index));
}

// --- pipeline ----------------------------------------------------------------

Pipeline::Pipeline(const BenchConfig& config, const ModelLibrary& library)
    : config_(config), library_(&library), segmenter_(config.segmentation), descriptors_(config.descriptor) {
  if (config.matcher == MatcherKind::oracle) {
    matcher_ = std::make_unique<OracleMatcher>(config.oracle);
  } else {
    matcher_ = std::make_unique<DescriptorNNMatcher>(library, config.nn_ratio);
  }
}

std::vector<Frame> Pipeline::ring_frames(const SceneState& scene, const RearrangementInstance& inst) const {
  std::vector<Frame> frames;
  const CameraIntrinsicsd k = inst.config.intrinsics();
  for (std::size_t i = 0; i < inst.ring_viewpoints.size(); ++i) {
    try {
      frames.push_back(render(scene, inst.ring_viewpoints[i], k, *library_, static_cast<int>(i)));
    } catch (const EmptyFrame&) {
    }
  }
  return frames;
}

Frame Pipeline::home_frame(const SceneState& scene, const RearrangementInstance& inst, bool with_depth) const {
  Frame f = render(scene, inst.home_viewpoint, inst.config.intrinsics(), *library_, kHomeFrameId);
  if (!with_depth) f.strip_depth();
  return f;
}

Database Pipeline::build(const std::vector<Frame>& frames) const {
  return build_database(frames, segmenter_, descriptors_, config_.database);
}

GoalEstimates Pipeline::localize(const Frame& goal, const Database& db) const {
  return estimate_all(goal, db, segmenter_, descriptors_, *matcher_, config_.localization);
}

std::vector<int> bind_instances(const Database& db, const SceneState& scene) {
  std::vector<int> out(static_cast<std::size_t>(db.size()), -1);
  for (int u = 0; u < db.size(); ++u) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < scene.size(); ++j) {
      const double d =
          (scene.placements[static_cast<std::size_t>(j)].pose.translation() - db.centroids[static_cast<std::size_t>(u)].head<2>())
              .norm();
      if (d < best) {
        best = d;
        out[static_cast<std::size_t>(u)] = j;
      }
    }
  }
  return out;
}

std::vector<const ObjectEstimate*> claims_by_object(const GoalEstimates& estimates, const std::vector<int>& binding,
                                                    int object_count) {
  std::vector<const ObjectEstimate*> out(static_cast<std::size_t>(object_count), nullptr);
  for (const ObjectEstimate& e : estimates.objects) {
    if (e.instance < 0 || e.instance >= static_cast<int>(binding.size())) continue;
    const int obj = binding[static_cast<std::size_t>(e.instance)];
    if (obj < 0 || obj >= object_count) continue;
    const ObjectEstimate*& slot = out[static_cast<std::size_t>(obj)];
    if (slot == nullptr || (e.pose.accepted && !slot->pose.accepted) ||
        (e.pose.accepted == slot->pose.accepted && e.pose.inlier_count > slot->pose.inlier_count)) {
      slot = &e;
    }
  }
  return out;
}

// --- metrics -----------------------------------------------------------------

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::vector<GroupMetrics> compute_metrics(const std::vector<ObjectRecord>& records) {
  std::vector<GroupMetrics> groups;
  std::vector<std::vector<double>> rot, trans;
  for (const ObjectRecord& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const GroupMetrics& g) { return g.regime == r.regime && g.database == r.database; });
    if (it == groups.end()) {
      GroupMetrics g;
      g.regime = r.regime;
      g.database = r.database;
      groups.push_back(g);
      rot.emplace_back();
      trans.emplace_back();
      it = groups.end() - 1;
    }
    const auto gi = static_cast<std::size_t>(it - groups.begin());
    ++it->objects;
    it->accepted += r.accepted ? 1 : 0;
    it->retrieval_correct += r.retrieval_correct ? 1 : 0;
    it->matcher_invocations += r.matcher_invocations;
    rot[gi].push_back(r.rotation_error_deg);
    trans[gi].push_back(r.translation_error_cm);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    groups[g].median_rotation_deg = median(rot[g]);
    groups[g].median_translation_cm = median(trans[g]);
  }
  return groups;
}

std::vector<CompletionMetrics> compute_completion(const std::vector<SceneRecord>& scenes) {
  std::vector<CompletionMetrics> out;
  std::vector<std::pair<int, int>> wins;
  for (const SceneRecord& s : scenes) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CompletionMetrics& c) { return c.regime == s.regime; });
    if (it == out.end()) {
      CompletionMetrics c;
      c.regime = s.regime;
      out.push_back(c);
      wins.emplace_back(0, 0);
      it = out.end() - 1;
    }
    auto& w = wins[static_cast<std::size_t>(it - out.begin())];
    ++it->scenes;
    w.first += s.one_step_success ? 1 : 0;
    w.second += s.multi_step_success ? 1 : 0;
    for (const int m : s.manipulations) ++it->manipulation_histogram[m];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].scenes == 0) continue;
    out[i].one_step_rate = 100.0 * wins[i].first / out[i].scenes;
    out[i].multi_step_rate = 100.0 * wins[i].second / out[i].scenes;
  }
  return out;
}

const GroupMetrics* MetricsReport::group(const std::string& regime, const std::string& database) const {
  for (const auto& g : groups) {
    if (g.regime == regime && g.database == database) return &g;
  }
  return nullptr;
}

const CompletionMetrics* MetricsReport::completion_for(const std::string& regime) const {
  for (const auto& c : completion) {
    if (c.regime == regime) return &c;
  }
  return nullptr;
}

// --- benches -----------------------------------------------------------------

namespace {

std::optional<RearrangementInstance> make_scene(const BenchConfig& c, const ModelLibrary& lib, RotationRegime regime,
                                                int index) {
  SimConfig sim = c.sim;
  sim.regime = regime;
  sim.seed = scene_seed(c, index);
  try {
    return generate_instance(sim, lib);
  } catch (const PlacementFailure&) {
    return std::nullopt;
  }
}

void record_estimates(const RearrangementInstance& inst, const Database& db, const GoalEstimates& est,
                      const std::string& regime, const char* database, int scene, std::vector<ObjectRecord>& out) {
  const std::vector<int> binding = bind_instances(db, inst.initial);
  const auto claims = claims_by_object(est, binding, inst.initial.size());
  std::vector<int> invocations(static_cast<std::size_t>(inst.initial.size()), 0);
  for (const ObjectEstimate& e : est.objects) {
    if (e.truth_instance >= 0 && e.truth_instance < inst.initial.size()) {
      invocations[static_cast<std::size_t>(e.truth_instance)] += e.matcher_invocations;
    }
  }
  for (int j = 0; j < inst.initial.size(); ++j) {
    const ObjectEstimate* e = claims[static_cast<std::size_t>(j)];
    ObjectRecord r;
    r.regime = regime;
    r.database = database;
    r.scene = scene;
    r.seed = inst.seed;
    r.object = j;
    r.model_id = inst.initial.placements[static_cast<std::size_t>(j)].model_id;
    r.matcher_invocations = invocations[static_cast<std::size_t>(j)];
    // Unclaimed objects and non-planar leftovers count as "no motion".
    Pose3d t;
    if (e != nullptr) {
      r.estimated = true;
      r.instance = e->instance;
      r.accepted = e->pose.accepted;
      r.inliers = e->pose.inlier_count;
      r.inlier_ratio = e->pose.inlier_ratio;
      r.candidates_visited = static_cast<int>(e->visited.size());
      r.retrieval_correct = e->truth_instance == j;
      if (is_planar(e->pose.T, PlanarityToleranced{})) t = e->pose.T;
    }
    const auto err = planar_error(t, inst.true_offsets[static_cast<std::size_t>(j)]);
    r.rotation_error_deg = err.rotation_deg;
    r.translation_error_cm = err.translation_cm;
    out.push_back(r);
  }
}

bool scene_matches_goal(const SceneState& scene, const SceneState& goal, const PlannerConfig& pc) {
  for (int j = 0; j < goal.size(); ++j) {
    const auto& a = scene.placements[static_cast<std::size_t>(j)].pose;
    const auto& b = goal.placements[static_cast<std::size_t>(j)].pose;
    const double dyaw = rad2deg(std::abs(wrap_angle(a.yaw() - b.yaw())));
    if (!(dyaw < pc.in_place_rotation_deg) || !((a.translation() - b.translation()).norm() < pc.in_place_translation)) {
      return false;
    }
  }
  return true;
}

}  // namespace

MetricsReport run_pose_bench(const BenchConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricsReport rep;
  rep.kind = "pose";
  rep.config = config;
  if (config.scenes > 0) {
    const ModelLibrary lib = generate_model_library(config.sim);
    const Pipeline pipe(config, lib);
    for (const RotationRegime regime : config.regimes) {
      for (int s = 0; s < config.scenes; ++s) {
        const auto inst = make_scene(config, lib, regime, s);
        if (!inst) {
          ++rep.skipped_scenes;
          continue;
        }
        const Frame goal = pipe.home_frame(inst->goal, *inst, false);
        try {
          const Database db = pipe.build(pipe.ring_frames(inst->initial, *inst));
          record_estimates(*inst, db, pipe.localize(goal, db), to_string(regime), kMultiView, s, rep.objects);
          if (config.single_view_ablation) {
            const Database single = pipe.build({pipe.home_frame(inst->initial, *inst, true)});
            record_estimates(*inst, single, pipe.localize(goal, single), to_string(regime), kSingleView, s,
                             rep.objects);
          }
        } catch (const NoRegions&) {
          ++rep.skipped_scenes;
        }
      }
    }
  }
  rep.groups = compute_metrics(rep.objects);
  rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

MetricsReport run_completion_bench(const BenchConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricsReport rep;
  rep.kind = "completion";
  rep.config = config;
  if (config.scenes > 0) {
    const ModelLibrary lib = generate_model_library(config.sim);
    const Pipeline pipe(config, lib);
    for (const RotationRegime regime : config.regimes) {
      for (int s = 0; s < config.scenes; ++s) {
        const auto inst = make_scene(config, lib, regime, s);
        if (!inst) {
          ++rep.skipped_scenes;
          continue;
        }
        const int k = inst->initial.size();
        SceneRecord rec;
        rec.regime = to_string(regime);
        rec.scene = s;
        rec.seed = inst->seed;
        rec.objects = k;
        rec.manipulations.assign(static_cast<std::size_t>(k), 0);
        const Frame goal = pipe.home_frame(inst->goal, *inst, false);
        SceneState current = inst->initial;
        bool done = false;
        for (int round = 1; round <= config.max_rounds && !done; ++round) {
          ++rec.rounds;
          Database db;
          try {
            db = pipe.build(pipe.ring_frames(current, *inst));
          } catch (const NoRegions&) {
            break;
          }
          const GoalEstimates est = pipe.localize(goal, db);
          for (const auto& e : est.objects) rec.matcher_invocations += e.matcher_invocations;
          const std::vector<int> binding = bind_instances(db, current);
          const auto claims = claims_by_object(est, binding, k);
          std::vector<std::optional<PlanarTransformd>> offsets(static_cast<std::size_t>(k));
          for (int j = 0; j < k; ++j) {
            const ObjectEstimate* e = claims[static_cast<std::size_t>(j)];
            if (e != nullptr && e->pose.accepted) offsets[static_cast<std::size_t>(j)] = to_planar(e->pose.T);
          }
          // Re-observation from home: locate the object against this round's
          // database and carry its reference pose by the observed motion.
          const SceneState reference = current;
          const Reobserver reobserve = [&](const SceneState& now, int object) -> std::optional<PlanarTransformd> {
            try {
              const GoalEstimates seen = pipe.localize(pipe.home_frame(now, *inst, false), db);
              const ObjectEstimate* e = claims_by_object(seen, binding, k)[static_cast<std::size_t>(object)];
              if (e == nullptr || !e->pose.accepted) return std::nullopt;
              return compose(to_planar(e->pose.T), reference.placements[static_cast<std::size_t>(object)].pose);
            } catch (const Error&) {
              return std::nullopt;
            }
          };
          PlannerConfig pc = config.planner;
          pc.seed = derive_seed(config.planner.seed, inst->seed, static_cast<std::uint64_t>(round));
          const ExecutionResult res = plan_and_execute(current, offsets, pc, reobserve);
          int most_goal_moves = 0;
          for (int j = 0; j < k; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            rec.goal_moves += res.goal_moves[jj];
            rec.buffer_moves += res.buffer_moves[jj];
            rec.manipulations[jj] += res.goal_moves[jj] + res.buffer_moves[jj];
            most_goal_moves = std::max(most_goal_moves, res.goal_moves[jj]);
          }
          current = res.final_scene;
          done = scene_matches_goal(current, inst->goal, config.planner);
          // One manipulation per object at most, buffer moves excluded.
          if (round == 1) rec.one_step_success = done && most_goal_moves <= 1;
        }
        rec.multi_step_success = done;
        rep.scenes.push_back(rec);
      }
    }
  }
  rep.completion = compute_completion(rep.scenes);
  rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// --- output ------------------------------------------------------------------

std::string objects_csv(const MetricsReport& rep) {
  std::ostringstream o;
  o << "regime,database,scene,seed,object,model_id,instance,estimated,accepted,retrieval_correct,"
       "rotation_error_deg,translation_error_cm,inliers,inlier_ratio,candidates_visited,matcher_invocations\n";
  for (const ObjectRecord& r : rep.objects) {
    o << r.regime << ',' << r.database << ',' << r.scene << ',' << r.seed << ',' << r.object << ',' << r.model_id
      << ',' << r.instance << ',' << r.estimated << ',' << r.accepted << ',' << r.retrieval_correct << ','
      << num(r.rotation_error_deg) << ',' << num(r.translation_error_cm) << ',' << r.inliers << ','
      << num(r.inlier_ratio) << ',' << r.candidates_visited << ',' << r.matcher_invocations << '\n';
  }
  return o.str();
}

std::string scenes_csv(const MetricsReport& rep) {
  std::ostringstream o;
  o << "regime,scene,seed,objects,rounds,one_step_success,multi_step_success,goal_moves,buffer_moves,"
       "manipulations,matcher_invocations\n";
  for (const SceneRecord& s : rep.scenes) {
    std::string manip;
    for (std::size_t i = 0; i < s.manipulations.size(); ++i) {
      manip += (i ? ";" : "") + std::to_string(s.manipulations[i]);
    }
    o << s.regime << ',' << s.scene << ',' << s.seed << ',' << s.objects << ',' << s.rounds << ','
      << s.one_step_success << ',' << s.multi_step_success << ',' << s.goal_moves << ',' << s.buffer_moves << ','
      << manip << ',' << s.matcher_invocations << '\n';
  }
  return o.str();
}

Json summary_json(const MetricsReport& rep) {
  Json groups = Json::array();
  for (const GroupMetrics& g : rep.groups) {
    groups.push_back(Json{{"regime", g.regime},
                          {"database", g.database},
                          {"objects", g.objects},
                          {"median_rotation_deg", number_or_null(g.median_rotation_deg)},
                          {"median_translation_cm", number_or_null(g.median_translation_cm)},
                          {"accepted", g.accepted},
                          {"retrieval_correct", g.retrieval_correct},
                          {"matcher_invocations", g.matcher_invocations}});
  }
  Json completion = Json::array();
  for (const CompletionMetrics& c : rep.completion) {
    Json hist = Json::object();
    for (const auto& [m, n] : c.manipulation_histogram) hist[std::to_string(m)] = n;
    completion.push_back(Json{{"regime", c.regime},
                              {"scenes", c.scenes},
                              {"one_step_rate", c.one_step_rate},
                              {"multi_step_rate", c.multi_step_rate},
                              {"manipulation_histogram", hist}});
  }
  return Json{{"kind", rep.kind},
              {"config", to_json(rep.config)},
              {"skipped_scenes", rep.skipped_scenes},
              {"objects", rep.objects.size()},
              {"groups", groups},
              {"completion", completion}};
}

std::string format_table(const MetricsReport& rep) {
  std::ostringstream o;
  char line[256];
  if (rep.kind == "pose") {
    std::snprintf(line, sizeof line, "%-8s %-12s %8s %12s %12s %9s %10s\n", "regime", "database", "objects",
                  "med |dθ| deg", "med |dt| cm", "accepted", "retrieval");
    o << line;
    for (const GroupMetrics& g : rep.groups) {
      std::snprintf(line, sizeof line, "%-8s %-12s %8d %12.4f %12.4f %9d %10d\n", g.regime.c_str(),
                    g.database.c_str(), g.objects, g.median_rotation_deg, g.median_translation_cm, g.accepted,
                    g.retrieval_correct);
      o << line;
    }
  } else {
    std::snprintf(line, sizeof line, "%-8s %8s %14s %16s\n", "regime", "scenes", "one-step %", "multi-step %");
    o << line;
    for (const CompletionMetrics& c : rep.completion) {
      std::snprintf(line, sizeof line, "%-8s %8d %14.1f %16.1f\n", c.regime.c_str(), c.scenes, c.one_step_rate,
                    c.multi_step_rate);
      o << line;
      o << "  manipulations per object:";
      for (const auto& [m, n] : c.manipulation_histogram) o << ' ' << m << 'x' << n;
      o << '\n';
    }
  }
  std::snprintf(line, sizeof line, "skipped scenes: %d\nwall clock: %.2f s\n", rep.skipped_scenes, rep.wall_clock_s);
  o << line;
  return o.str();
}

void write_report(const MetricsReport& rep, const std::filesystem::path& dir) {
  if (rep.kind == "pose") {
    write_text(dir / (rep.kind + "_objects.csv"), objects_csv(rep));
  } else {
    write_text(dir / (rep.kind + "_scenes.csv"), scenes_csv(rep));
  }
  write_json(dir / (rep.kind + "_summary.json"), summary_json(rep));
  write_text(dir / (rep.kind + "_table.txt"), format_table(rep));
}

}  // namespace mvr
