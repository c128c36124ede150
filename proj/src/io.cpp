#include "mvr/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mvr/errors.hpp"

namespace mvr {

namespace {

// Strict reader over one JSON object: every key must be consumed.
class Fields {
 public:
  Fields(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw ConfigParse(what_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const Json::exception& e) {
      throw ConfigParse(what_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void nested(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it != j_.end()) from_json(*it, out);
  }

  const Json* raw(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigParse("unknown key " + what_ + "." + k);
    }
  }

 private:
  const Json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

template <typename T>
T required(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigParse(std::string("missing key ") + key);
  try {
    return it->template get<T>();
  } catch (const Json::exception& e) {
    throw ConfigParse(std::string(key) + ": " + e.what());
  }
}

const Json& child(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigParse(std::string("missing key ") + key);
  return *it;
}

Json vec_json(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigParse("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// NaN is not representable in JSON; it travels as null.
Json number(double x) { return std::isnan(x) ? Json(nullptr) : Json(x); }
double number_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

Json planar_json(const PlanarTransformd& p) { return Json{{"yaw", p.yaw()}, {"tx", p.tx()}, {"ty", p.ty()}}; }

PlanarTransformd planar_from(const Json& j) {
  return {required<double>(j, "yaw"), required<double>(j, "tx"), required<double>(j, "ty")};
}

Json intrinsics_json(const CameraIntrinsicsd& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsicsd intrinsics_from(const Json& j) {
  CameraIntrinsicsd k;
  k.fx = required<double>(j, "fx");
  k.fy = required<double>(j, "fy");
  k.cx = required<double>(j, "cx");
  k.cy = required<double>(j, "cy");
  k.width = required<int>(j, "width");
  k.height = required<int>(j, "height");
  return k;
}

Json scene_json(const SceneState& s) {
  Json placements = Json::array();
  for (const Placement& p : s.placements) {
    placements.push_back(Json{{"model_id", p.model_id},
                              {"yaw", p.pose.yaw()},
                              {"tx", p.pose.tx()},
                              {"ty", p.pose.ty()},
                              {"footprint_radius", p.footprint_radius}});
  }
  return Json{{"table",
               {{"min_x", s.table.min_x}, {"max_x", s.table.max_x}, {"min_y", s.table.min_y}, {"max_y", s.table.max_y}}},
              {"placements", placements}};
}

SceneState scene_from(const Json& j) {
  SceneState s;
  const Json& t = child(j, "table");
  s.table = {required<double>(t, "min_x"), required<double>(t, "max_x"), required<double>(t, "min_y"),
             required<double>(t, "max_y")};
  for (const Json& p : child(j, "placements")) {
    Placement pl;
    pl.model_id = required<int>(p, "model_id");
    pl.pose = planar_from(p);
    pl.footprint_radius = required<double>(p, "footprint_radius");
    s.placements.push_back(pl);
  }
  return s;
}

}  // namespace

// --- configs -----------------------------------------------------------------

Json to_json(const SimConfig& c) {
  return Json{{"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"table_width", c.table_width},
              {"table_depth", c.table_depth},
              {"ring_viewpoints", c.ring_viewpoints},
              {"ring_radius", c.ring_radius},
              {"ring_elevation_deg", c.ring_elevation_deg},
              {"home_eye", vec_json(c.home_eye)},
              {"image_width", c.image_width},
              {"image_height", c.image_height},
              {"focal_px", c.focal_px},
              {"regime", to_string(c.regime)},
              {"actuation_noise", c.actuation_noise},
              {"seed", c.seed},
              {"library_seed", c.library_seed},
              {"library_size", c.library_size},
              {"point_spacing", c.point_spacing},
              {"point_descriptor_dim", c.point_descriptor_dim},
              {"vocabulary_size", c.vocabulary_size},
              {"placement_clearance", c.placement_clearance}};
}

void from_json(const Json& j, SimConfig& c) {
  Fields f(j, "sim");
  f.get("min_objects", c.min_objects);
  f.get("max_objects", c.max_objects);
  f.get("table_width", c.table_width);
  f.get("table_depth", c.table_depth);
  f.get("ring_viewpoints", c.ring_viewpoints);
  f.get("ring_radius", c.ring_radius);
  f.get("ring_elevation_deg", c.ring_elevation_deg);
  if (const Json* eye = f.raw("home_eye")) c.home_eye = vec_from(*eye);
  f.get("image_width", c.image_width);
  f.get("image_height", c.image_height);
  f.get("focal_px", c.focal_px);
  std::string regime = to_string(c.regime);
  f.get("regime", regime);
  c.regime = parse_regime(regime);
  f.get("actuation_noise", c.actuation_noise);
  f.get("seed", c.seed);
  f.get("library_seed", c.library_seed);
  f.get("library_size", c.library_size);
  f.get("point_spacing", c.point_spacing);
  f.get("point_descriptor_dim", c.point_descriptor_dim);
  f.get("vocabulary_size", c.vocabulary_size);
  f.get("placement_clearance", c.placement_clearance);
  f.finish();
  c.validate();
}

Json to_json(const OracleMatcherConfig& c) {
  return Json{{"drop_rate", c.drop_rate},
              {"pixel_sigma", c.pixel_sigma},
              {"outlier_rate", c.outlier_rate},
              {"max_view_angle_deg", c.max_view_angle_deg},
              {"max_matches", c.max_matches}};
}

void from_json(const Json& j, OracleMatcherConfig& c) {
  Fields f(j, "oracle");
  f.get("drop_rate", c.drop_rate);
  f.get("pixel_sigma", c.pixel_sigma);
  f.get("outlier_rate", c.outlier_rate);
  f.get("max_view_angle_deg", c.max_view_angle_deg);
  f.get("max_matches", c.max_matches);
  f.finish();
}

Json to_json(const SegmentNoise& c) {
  return Json{{"drop_probability", c.drop_probability}, {"erosion_radius", c.erosion_radius}, {"seed", c.seed}};
}

void from_json(const Json& j, SegmentNoise& c) {
  Fields f(j, "segmentation");
  f.get("drop_probability", c.drop_probability);
  f.get("erosion_radius", c.erosion_radius);
  f.get("seed", c.seed);
  f.finish();
}

Json to_json(const SyntheticDescriptorConfig& c) {
  return Json{{"dimension", c.dimension}, {"resolution", c.resolution}, {"grid", c.grid},
              {"vocabulary", c.vocabulary}, {"obs_weight", c.obs_weight}, {"seed", c.seed}};
}

void from_json(const Json& j, SyntheticDescriptorConfig& c) {
  Fields f(j, "descriptor");
  f.get("dimension", c.dimension);
  f.get("resolution", c.resolution);
  f.get("grid", c.grid);
  f.get("vocabulary", c.vocabulary);
  f.get("obs_weight", c.obs_weight);
  f.get("seed", c.seed);
  f.finish();
}

Json to_json(const KMeansConfig& c) {
  return Json{{"max_iterations", c.max_iterations}, {"restarts", c.restarts}, {"seed", c.seed}};
}

void from_json(const Json& j, KMeansConfig& c) {
  Fields f(j, "kmeans");
  f.get("max_iterations", c.max_iterations);
  f.get("restarts", c.restarts);
  f.get("seed", c.seed);
  f.finish();
}

Json to_json(const DatabaseConfig& c) { return Json{{"min_points", c.min_points}, {"kmeans", to_json(c.kmeans)}}; }

void from_json(const Json& j, DatabaseConfig& c) {
  Fields f(j, "database");
  f.get("min_points", c.min_points);
  f.nested("kmeans", c.kmeans);
  f.finish();
}

Json to_json(const RansacConfig& c) {
  return Json{{"max_iterations", c.max_iterations},
              {"reprojection_threshold", c.reprojection_threshold},
              {"confidence", c.confidence},
              {"min_inliers", c.min_inliers},
              {"min_inlier_ratio", c.min_inlier_ratio},
              {"refine_iterations", c.refine_iterations},
              {"seed", c.seed}};
}

void from_json(const Json& j, RansacConfig& c) {
  Fields f(j, "ransac");
  f.get("max_iterations", c.max_iterations);
  f.get("reprojection_threshold", c.reprojection_threshold);
  f.get("confidence", c.confidence);
  f.get("min_inliers", c.min_inliers);
  f.get("min_inlier_ratio", c.min_inlier_ratio);
  f.get("refine_iterations", c.refine_iterations);
  f.get("seed", c.seed);
  f.finish();
}

Json to_json(const LocalizationConfig& c) {
  return Json{{"top_n", c.top_n},
              {"prune_angle", c.prune_angle},
              {"match_resolution", c.match_resolution},
              {"ransac", to_json(c.ransac)},
              {"max_tilt", c.planarity.max_tilt},
              {"max_vertical", c.planarity.max_vertical},
              {"require_planar", c.require_planar},
              {"fallback_instances", c.fallback_instances},
              {"min_points", c.min_points},
              {"seed", c.seed}};
}

void from_json(const Json& j, LocalizationConfig& c) {
  Fields f(j, "localization");
  f.get("top_n", c.top_n);
  f.get("prune_angle", c.prune_angle);
  f.get("match_resolution", c.match_resolution);
  f.nested("ransac", c.ransac);
  f.get("max_tilt", c.planarity.max_tilt);
  f.get("max_vertical", c.planarity.max_vertical);
  f.get("require_planar", c.require_planar);
  f.get("fallback_instances", c.fallback_instances);
  f.get("min_points", c.min_points);
  f.get("seed", c.seed);
  f.finish();
}

Json to_json(const PlannerConfig& c) {
  return Json{{"thres_fail", c.thres_fail},
              {"outer_factor", c.outer_factor},
              {"collision_margin", c.collision_margin},
              {"in_place_translation", c.in_place_translation},
              {"in_place_rotation_deg", c.in_place_rotation_deg},
              {"actuation_noise", c.actuation_noise},
              {"buffer_attempts", c.buffer_attempts},
              {"seed", c.seed}};
}

void from_json(const Json& j, PlannerConfig& c) {
  Fields f(j, "planner");
  f.get("thres_fail", c.thres_fail);
  f.get("outer_factor", c.outer_factor);
  f.get("collision_margin", c.collision_margin);
  f.get("in_place_translation", c.in_place_translation);
  f.get("in_place_rotation_deg", c.in_place_rotation_deg);
  f.get("actuation_noise", c.actuation_noise);
  f.get("buffer_attempts", c.buffer_attempts);
  f.get("seed", c.seed);
  f.finish();
}

// --- instances ---------------------------------------------------------------

Json pose_to_json(const Pose3d& p) {
  const Eigen::Matrix4d m = p.matrix();
  Json a = Json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  }
  return a;
}

Pose3d pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 16) throw ConfigParse("pose must be 16 numbers");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = j[static_cast<std::size_t>(4 * r + c)].get<double>();
  }
  return Pose3d::from_matrix(m);
}

Json to_json(const RearrangementInstance& inst) {
  Json offsets = Json::array();
  for (const auto& t : inst.true_offsets) offsets.push_back(planar_json(t));
  Json ring = Json::array();
  for (const auto& v : inst.ring_viewpoints) ring.push_back(pose_to_json(v));
  return Json{{"format", kInstanceFormat},
              {"seed", inst.seed},
              {"library", {{"seed", inst.config.library_seed}, {"size", inst.config.library_size}}},
              {"config", to_json(inst.config)},
              {"initial", scene_json(inst.initial)},
              {"goal", scene_json(inst.goal)},
              {"true_offsets", offsets},
              {"home_viewpoint", pose_to_json(inst.home_viewpoint)},
              {"ring_viewpoints", ring}};
}

RearrangementInstance instance_from_json(const Json& j) {
  if (required<std::string>(j, "format") != kInstanceFormat) throw ConfigParse("not an instance file");
  RearrangementInstance inst;
  from_json(child(j, "config"), inst.config);
  inst.seed = required<std::uint64_t>(j, "seed");
  inst.initial = scene_from(child(j, "initial"));
  inst.goal = scene_from(child(j, "goal"));
  for (const Json& t : child(j, "true_offsets")) inst.true_offsets.push_back(planar_from(t));
  inst.home_viewpoint = pose_from_json(child(j, "home_viewpoint"));
  for (const Json& v : child(j, "ring_viewpoints")) inst.ring_viewpoints.push_back(pose_from_json(v));
  if (inst.initial.size() != inst.goal.size() || inst.true_offsets.size() != inst.goal.placements.size()) {
    throw ConfigParse("instance object counts disagree");
  }
  return inst;
}

// --- database ----------------------------------------------------------------

namespace {

Json crop_json(const RegionCrop& crop) {
  Json x = Json::array(), y = Json::array(), u = Json::array(), v = Json::array(), depth = Json::array(),
       model = Json::array(), point = Json::array(), word = Json::array(), truth = Json::array(),
       view = Json::array(), cloud = Json::array();
  for (const CropSample& s : crop.samples()) {
    x.push_back(s.x);
    y.push_back(s.y);
    u.push_back(s.u);
    v.push_back(s.v);
    depth.push_back(number(s.depth));
    model.push_back(s.model_id);
    point.push_back(s.point_index);
    word.push_back(s.word);
    truth.push_back(s.truth_instance);
    view.push_back(s.view_dir_local.x());
    view.push_back(s.view_dir_local.y());
    view.push_back(s.view_dir_local.z());
    cloud.push_back(s.cloud_index);
  }
  return Json{{"x0", crop.x0()},       {"y0", crop.y0()},       {"width", crop.width()}, {"height", crop.height()},
              {"x", x},                {"y", y},                {"u", u},                {"v", v},
              {"depth", depth},        {"model_id", model},     {"point_index", point},  {"word", word},
              {"truth_instance", truth}, {"view_dir_local", view}, {"cloud_index", cloud}};
}

RegionCrop crop_from(const Json& j) {
  const Json& x = child(j, "x");
  const std::size_t n = x.size();
  const Json &y = child(j, "y"), &u = child(j, "u"), &v = child(j, "v"), &depth = child(j, "depth"),
             &model = child(j, "model_id"), &point = child(j, "point_index"), &word = child(j, "word"),
             &truth = child(j, "truth_instance"), &view = child(j, "view_dir_local"), &cloud = child(j, "cloud_index");
  if (y.size() != n || u.size() != n || v.size() != n || depth.size() != n || model.size() != n ||
      point.size() != n || word.size() != n || truth.size() != n || view.size() != 3 * n || cloud.size() != n) {
    throw ConfigParse("crop sample columns differ in length");
  }
  std::vector<CropSample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    CropSample& s = samples[i];
    s.x = x[i].get<int>();
    s.y = y[i].get<int>();
    s.u = u[i].get<double>();
    s.v = v[i].get<double>();
    s.depth = number_from(depth[i]);
    s.model_id = model[i].get<int>();
    s.point_index = point[i].get<int>();
    s.word = word[i].get<int>();
    s.truth_instance = truth[i].get<int>();
    s.view_dir_local = {view[3 * i].get<float>(), view[3 * i + 1].get<float>(), view[3 * i + 2].get<float>()};
    s.cloud_index = cloud[i].get<int>();
  }
  return RegionCrop(required<int>(j, "x0"), required<int>(j, "y0"), required<int>(j, "width"),
                    required<int>(j, "height"), std::move(samples));
}

}  // namespace

Json to_json(const Database& db) {
  Json instances = Json::array();
  for (std::size_t u = 0; u < db.instances.size(); ++u) {
    Json regions = Json::array();
    for (const ObjectRegion& r : db.instances[u]) {
      Json g = Json::array();
      for (Eigen::Index i = 0; i < r.descriptor.size(); ++i) g.push_back(r.descriptor(i));
      Json points = Json::array();
      for (Eigen::Index i = 0; i < r.cloud.cols(); ++i) {
        for (int a = 0; a < 3; ++a) points.push_back(r.cloud(a, i));
      }
      regions.push_back(Json{{"source_frame_id", r.source_frame_id},
                             {"truth_instance", r.truth_instance},
                             {"viewpoint", pose_to_json(r.viewpoint)},
                             {"intrinsics", intrinsics_json(r.intrinsics)},
                             {"descriptor", g},
                             {"obs_vec", vec_json(r.obs_vec.vec())},
                             {"cloud", {{"centroid", vec_json(centroid(r.cloud))},
                                        {"count", r.cloud.cols()},
                                        {"points", points}}},
                             {"crop", crop_json(r.crop)}});
    }
    instances.push_back(Json{{"centroid", vec_json(db.centroids[u])}, {"regions", regions}});
  }
  return Json{{"format", kDatabaseFormat}, {"instances", instances}};
}

Database database_from_json(const Json& j) {
  if (required<std::string>(j, "format") != kDatabaseFormat) throw ConfigParse("not a database dump");
  Database db;
  for (const Json& inst : child(j, "instances")) {
    db.centroids.push_back(vec_from(child(inst, "centroid")));
    std::vector<ObjectRegion> list;
    for (const Json& rj : child(inst, "regions")) {
      ObjectRegion r;
      r.source_frame_id = required<int>(rj, "source_frame_id");
      r.truth_instance = required<int>(rj, "truth_instance");
      r.viewpoint = pose_from_json(child(rj, "viewpoint"));
      r.intrinsics = intrinsics_from(child(rj, "intrinsics"));
      const Json& g = child(rj, "descriptor");
      r.descriptor.resize(static_cast<Eigen::Index>(g.size()));
      for (std::size_t i = 0; i < g.size(); ++i) r.descriptor(static_cast<Eigen::Index>(i)) = g[i].get<double>();
      r.obs_vec = UnitVec3d::from_unit(vec_from(child(rj, "obs_vec")));
      const Json& cloud = child(rj, "cloud");
      const auto count = required<Eigen::Index>(cloud, "count");
      const Json& pts = child(cloud, "points");
      if (static_cast<Eigen::Index>(pts.size()) != 3 * count) throw ConfigParse("cloud point count mismatch");
      r.cloud.resize(3, count);
      for (Eigen::Index i = 0; i < count; ++i) {
        for (int a = 0; a < 3; ++a) r.cloud(a, i) = pts[static_cast<std::size_t>(3 * i + a)].get<double>();
      }
      r.crop = crop_from(child(rj, "crop"));
      list.push_back(std::move(r));
    }
    db.instances.push_back(std::move(list));
  }
  return db;
}

// --- reports -----------------------------------------------------------------

Json pose_report(const GoalEstimates& estimates) {
  Json objects = Json::array();
  for (const ObjectEstimate& e : estimates.objects) {
    const PlanarTransformd p = to_planar(e.pose.T);
    objects.push_back(Json{{"goal_label", e.goal_label},
                           {"instance", e.instance},
                           {"accepted", e.pose.accepted},
                           {"yaw_deg", rad2deg(p.yaw())},
                           {"tx_cm", p.tx() * 100},
                           {"ty_cm", p.ty() * 100},
                           {"T", pose_to_json(e.pose.T)},
                           {"inliers", e.pose.inlier_count},
                           {"inlier_ratio", e.pose.inlier_ratio},
                           {"correspondences", e.pose.correspondences},
                           {"candidate", {e.pose.candidate.instance, e.pose.candidate.index}},
                           {"candidates_visited", e.visited.size()},
                           {"matcher_invocations", e.matcher_invocations}});
  }
  return Json{{"objects", objects}, {"duplicate_resolutions", estimates.duplicate_resolutions}};
}

Json to_json(const ExecutionResult& r) {
  Json log = Json::array();
  for (const MoveRecord& m : r.log) {
    log.push_back(Json{{"step", m.step},
                       {"outer_iteration", m.outer_iteration},
                       {"object", m.object},
                       {"kind", to_string(m.kind)},
                       {"target_yaw_deg", rad2deg(m.target.yaw())},
                       {"target_tx", m.target.tx()},
                       {"target_ty", m.target.ty()},
                       {"collision", m.collision},
                       {"failure_count", m.failure_count}});
  }
  return Json{{"completed", r.completed},
              {"outer_iterations", r.outer_iterations},
              {"goal_moves", r.goal_moves},
              {"buffer_moves", r.buffer_moves},
              {"moves", log},
              {"final_scene", scene_json(r.final_scene)}};
}

// --- files -------------------------------------------------------------------

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOFailure("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigParse(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOFailure("cannot write " + path.string());
  out << text;
  if (!out) throw IOFailure("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(1) + "\n"); }

}  // namespace mvr
