#include "mvr/scene.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvr {

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::box: return "box";
    case ShapeFamily::cylinder: return "cylinder";
    case ShapeFamily::l_prism: return "l_prism";
  }
  return "unknown";
}

std::string to_string(RotationRegime r) { return r == RotationRegime::minor ? "minor" : "full"; }

RotationRegime parse_regime(const std::string& s) {
  if (s == "minor") return RotationRegime::minor;
  if (s == "full") return RotationRegime::full;
  throw ConfigParse("unknown rotation regime '" + s + "' (expected minor|full)");
}

double regime_half_range(RotationRegime r) {
  return r == RotationRegime::minor ? deg2rad(60.0) : deg2rad(180.0);
}

void SimConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigParse(std::string("invalid sim config: ") + what);
  };
  require(min_objects >= 1 && min_objects <= max_objects, "object count range");
  require(table_width > 0 && table_depth > 0, "table size");
  require(ring_viewpoints >= 1, "ring viewpoint count");
  require(ring_radius > 0, "ring radius");
  require(ring_elevation_deg > 0 && ring_elevation_deg < 90, "ring elevation");
  require(image_width > 0 && image_height > 0 && focal_px > 0, "camera");
  require(actuation_noise >= 0, "actuation noise");
  require(library_size >= 1, "library size");
  require(point_spacing > 0, "point spacing");
  require(point_descriptor_dim >= 2, "point descriptor dimension");
  require(vocabulary_size >= 16, "vocabulary size");
  require(placement_clearance >= 0, "placement clearance");
}

CameraIntrinsicsd SimConfig::intrinsics() const {
  CameraIntrinsicsd k;
  k.fx = k.fy = focal_px;
  k.cx = image_width / 2.0 - 0.5;
  k.cy = image_height / 2.0 - 0.5;
  k.width = image_width;
  k.height = image_height;
  return k;
}

namespace {

constexpr int kSectors = 8;
constexpr double kSectorWordProbability = 0.8;

struct SurfaceSamples {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;

  void add(const Eigen::Vector3d& p, const Eigen::Vector3d& n) {
    points.push_back(p);
    normals.push_back(n);
  }
};

bool point_in_polygon(const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) &&
        p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      inside = !inside;
    }
  }
  return inside;
}

// Jittered grid over [0, lu] x [0, lv]; calls emit(s, t) per sample.
template <typename Emit>
void stratified(double lu, double lv, double spacing, Rng& rng, Emit&& emit) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int nu = std::max(1, static_cast<int>(std::ceil(lu / spacing)));
  const int nv = std::max(1, static_cast<int>(std::ceil(lv / spacing)));
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      const double s = (i + unit(rng)) * lu / nu;
      const double t = (j + unit(rng)) * lv / nv;
      emit(s, t);
    }
  }
}

// Extrusion of a counter-clockwise polygon from z = 0 to z = height.
void sample_prism(const std::vector<Eigen::Vector2d>& poly, double height, double spacing, Rng& rng,
                  SurfaceSamples& out) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d a = poly[i];
    const Eigen::Vector2d b = poly[(i + 1) % poly.size()];
    const Eigen::Vector2d d = b - a;
    const double len = d.norm();
    const Eigen::Vector2d dir = d / len;
    const Eigen::Vector3d n(dir.y(), -dir.x(), 0.0);
    stratified(len, height, spacing, rng, [&](double s, double t) {
      const Eigen::Vector2d q = a + dir * s;
      out.add({q.x(), q.y(), t}, n);
    });
  }
  Eigen::Vector2d lo = poly.front(), hi = poly.front();
  for (const auto& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Eigen::Vector2d ext = hi - lo;
  for (const double z : {height, 0.0}) {
    const Eigen::Vector3d n(0, 0, z > 0 ? 1.0 : -1.0);
    stratified(ext.x(), ext.y(), spacing, rng, [&](double s, double t) {
      const Eigen::Vector2d q = lo + Eigen::Vector2d(s, t);
      if (point_in_polygon(poly, q)) out.add({q.x(), q.y(), z}, n);
    });
  }
}

void sample_cylinder(double radius, double height, double spacing, Rng& rng, SurfaceSamples& out) {
  const double circumference = 2 * std::numbers::pi * radius;
  stratified(circumference, height, spacing, rng, [&](double s, double t) {
    const double a = s / radius;
    const Eigen::Vector3d n(std::cos(a), std::sin(a), 0.0);
    out.add({radius * n.x(), radius * n.y(), t}, n);
  });
  for (const double z : {height, 0.0}) {
    const Eigen::Vector3d n(0, 0, z > 0 ? 1.0 : -1.0);
    stratified(2 * radius, 2 * radius, spacing, rng, [&](double s, double t) {
      const Eigen::Vector2d q(s - radius, t - radius);
      if (q.norm() <= radius) out.add({q.x(), q.y(), z}, n);
    });
  }
}

int sector_of(const Eigen::Vector3d& p, const Eigen::Vector3d& n) {
  if (std::abs(n.z()) > 0.9) return kSectors;
  const double a = std::atan2(p.y(), p.x()) + std::numbers::pi;
  return std::min(kSectors - 1, static_cast<int>(a / (2 * std::numbers::pi) * kSectors));
}

Eigen::MatrixXf make_codebook(const SimConfig& config) {
  Rng rng(derive_seed(config.library_seed, 0xC0DE));
  std::normal_distribution<float> gauss(0.f, 1.f);
  Eigen::MatrixXf code(config.point_descriptor_dim, config.vocabulary_size);
  for (Eigen::Index j = 0; j < code.cols(); ++j) {
    for (Eigen::Index i = 0; i < code.rows(); ++i) code(i, j) = gauss(rng);
    code.col(j).normalize();
  }
  return code;
}

ObjectModel make_model(const SimConfig& config, const Eigen::MatrixXf& codebook, int model_id) {
  Rng rng(derive_seed(config.library_seed, 0x0B1EC7, static_cast<std::uint64_t>(model_id)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  ObjectModel m;
  m.model_id = model_id;
  m.family = static_cast<ShapeFamily>(model_id % 3);

  SurfaceSamples s;
  const double spacing = config.point_spacing;
  switch (m.family) {
    case ShapeFamily::box: {
      const double w = between(0.04, 0.10), d = between(0.04, 0.10);
      m.height = between(0.04, 0.14);
      const std::vector<Eigen::Vector2d> poly{{-w / 2, -d / 2}, {w / 2, -d / 2}, {w / 2, d / 2}, {-w / 2, d / 2}};
      sample_prism(poly, m.height, spacing, rng, s);
      m.footprint_radius = std::hypot(w / 2, d / 2);
      break;
    }
    case ShapeFamily::cylinder: {
      const double r = between(0.025, 0.06);
      m.height = between(0.05, 0.16);
      sample_cylinder(r, m.height, spacing, rng, s);
      m.footprint_radius = r;
      break;
    }
    case ShapeFamily::l_prism: {
      const double side = between(0.06, 0.11);
      const double arm = side * between(0.3, 0.5);
      const double h = side / 2;
      m.height = between(0.04, 0.12);
      const std::vector<Eigen::Vector2d> poly{{-h, -h},      {h, -h},  {h, -h + arm},
                                              {-h + arm, -h + arm}, {-h + arm, h}, {-h, h}};
      sample_prism(poly, m.height, spacing, rng, s);
      m.footprint_radius = std::hypot(h, h);
      break;
    }
  }

  const auto n = static_cast<Eigen::Index>(s.points.size());
  m.points.resize(3, n);
  m.normals.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.points.col(i) = s.points[static_cast<std::size_t>(i)];
    m.normals.col(i) = s.normals[static_cast<std::size_t>(i)];
  }

  // Each surface sector carries its own dominant word so that the word
  // layout of a view depends on which side of the object is seen.
  std::vector<int> vocab(static_cast<std::size_t>(config.vocabulary_size));
  std::iota(vocab.begin(), vocab.end(), 0);
  std::shuffle(vocab.begin(), vocab.end(), rng);
  std::uniform_int_distribution<int> any_word(0, config.vocabulary_size - 1);
  std::normal_distribution<float> gauss(0.f, 1.f);

  const int dpt = config.point_descriptor_dim;
  m.words.resize(static_cast<std::size_t>(n));
  m.feature_ids.resize(static_cast<std::size_t>(n));
  m.descriptors.resize(dpt, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int sector = sector_of(m.points.col(i), m.normals.col(i));
    const int word = unit(rng) < kSectorWordProbability ? vocab[static_cast<std::size_t>(sector)]
                                                        : any_word(rng);
    Eigen::VectorXf unique(dpt);
    for (int k = 0; k < dpt; ++k) unique(k) = gauss(rng);
    m.descriptors.col(i) = (0.6f * codebook.col(word) + 0.8f * unique.normalized()).normalized();
    m.words[static_cast<std::size_t>(i)] = word;
    m.feature_ids[static_cast<std::size_t>(i)] = make_feature_id(model_id, static_cast<int>(i));
  }
  return m;
}

class LayoutSampler {
 public:
  LayoutSampler(const TableBounds& table, double clearance, Rng& rng)
      : table_(table), clearance_(clearance), rng_(rng) {}

  Eigen::Vector2d sample_position(double radius, std::vector<Placement>& placed) {
    if (2 * radius > table_.max_x - table_.min_x || 2 * radius > table_.max_y - table_.min_y) {
      throw PlacementFailure("object footprint is larger than the table");
    }
    // Discs also keep `clearance` from the table edge.
    const double inset = radius + clearance_;
    if (2 * inset > table_.max_x - table_.min_x || 2 * inset > table_.max_y - table_.min_y) {
      throw PlacementFailure("object footprint plus clearance is larger than the table");
    }
    std::uniform_real_distribution<double> ux(table_.min_x + inset, table_.max_x - inset);
    std::uniform_real_distribution<double> uy(table_.min_y + inset, table_.max_y - inset);
    while (attempts_ < kMaxAttempts) {
      ++attempts_;
      const Eigen::Vector2d c(ux(rng_), uy(rng_));
      const bool clear = std::none_of(placed.begin(), placed.end(), [&](const Placement& p) {
        return discs_overlap(c, radius, p.pose.translation(), p.footprint_radius, clearance_);
      });
      if (clear) return c;
    }
    throw PlacementFailure("rejection sampling exceeded 10000 attempts");
  }

 private:
  static constexpr int kMaxAttempts = 10000;
  TableBounds table_;
  double clearance_;
  Rng& rng_;
  int attempts_ = 0;
};

TableBounds table_of(const SimConfig& c) {
  return {-c.table_width / 2, c.table_width / 2, -c.table_depth / 2, c.table_depth / 2};
}

}  // namespace

ModelLibrary generate_model_library(const SimConfig& config) {
  config.validate();
  const Eigen::MatrixXf codebook = make_codebook(config);
  ModelLibrary lib;
  lib.reserve(static_cast<std::size_t>(config.library_size));
  for (int i = 0; i < config.library_size; ++i) lib.push_back(make_model(config, codebook, i));
  return lib;
}

bool discs_overlap(const Eigen::Vector2d& a, double ra, const Eigen::Vector2d& b, double rb,
                   double gap) {
  return (a - b).norm() < ra + rb + gap;
}

bool is_collision_free(const SceneState& scene, double gap) {
  const auto& ps = scene.placements;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!scene.table.contains_disc(ps[i].pose.translation(), ps[i].footprint_radius)) return false;
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      if (discs_overlap(ps[i].pose.translation(), ps[i].footprint_radius, ps[j].pose.translation(),
                        ps[j].footprint_radius, gap)) {
        return false;
      }
    }
  }
  return true;
}

Pose3d home_viewpoint(const SimConfig& config) {
  return look_at<double>(config.home_eye, Eigen::Vector3d::Zero());
}

std::vector<Pose3d> ring_viewpoints(const SimConfig& config) {
  std::vector<Pose3d> out;
  const double height = config.ring_radius * std::tan(deg2rad(config.ring_elevation_deg));
  for (int k = 0; k < config.ring_viewpoints; ++k) {
    const double az = 2 * std::numbers::pi * k / config.ring_viewpoints;
    const Eigen::Vector3d eye(config.ring_radius * std::cos(az), config.ring_radius * std::sin(az),
                              height);
    out.push_back(look_at<double>(eye, Eigen::Vector3d::Zero()));
  }
  return out;
}

RearrangementInstance generate_instance(const SimConfig& config, const ModelLibrary& library) {
  config.validate();
  if (library.empty()) throw PlacementFailure("model library is empty");
  Rng rng(derive_seed(config.seed, 0x5CE7E));
  std::uniform_int_distribution<int> count_dist(config.min_objects, config.max_objects);
  const int count = count_dist(rng);
  std::vector<int> ids(library.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<int> chosen;
  for (int i = 0; i < count; ++i) chosen.push_back(ids[static_cast<std::size_t>(i) % ids.size()]);
  return generate_instance(config, library, chosen);
}

RearrangementInstance generate_instance(const SimConfig& config, const ModelLibrary& library,
                                        const std::vector<int>& model_ids) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0x1A70));
  std::uniform_real_distribution<double> yaw_dist(-std::numbers::pi, std::numbers::pi);
  const double half = regime_half_range(config.regime);
  std::uniform_real_distribution<double> rot_dist(-half, half);

  RearrangementInstance inst;
  inst.config = config;
  inst.seed = config.seed;
  inst.initial.table = inst.goal.table = table_of(config);

  LayoutSampler goal_sampler(inst.goal.table, config.placement_clearance, rng);
  for (const int id : model_ids) {
    const ObjectModel& m = library.at(static_cast<std::size_t>(id));
    const Eigen::Vector2d c = goal_sampler.sample_position(m.footprint_radius, inst.goal.placements);
    inst.goal.placements.push_back({id, PlanarTransformd(yaw_dist(rng), c.x(), c.y()), m.footprint_radius});
  }

  LayoutSampler initial_sampler(inst.initial.table, config.placement_clearance, rng);
  for (const Placement& g : inst.goal.placements) {
    const double delta = rot_dist(rng);
    const Eigen::Vector2d c = initial_sampler.sample_position(g.footprint_radius, inst.initial.placements);
    const PlanarTransformd start(g.pose.yaw() - delta, c.x(), c.y());
    inst.initial.placements.push_back({g.model_id, start, g.footprint_radius});
    inst.true_offsets.push_back(g.pose * start.inverse());
  }

  inst.home_viewpoint = home_viewpoint(config);
  inst.ring_viewpoints = ring_viewpoints(config);
  return inst;
}

SceneState apply_move(const SceneState& scene, int object, const PlanarTransformd& target,
                      double noise_sigma, Rng& rng) {
  if (object < 0 || object >= scene.size()) throw UnknownObject("apply_move: no such object");
  const Placement& mover = scene.placements[static_cast<std::size_t>(object)];
  if (!scene.table.contains_disc(target.translation(), mover.footprint_radius)) {
    throw CollisionAtTarget("target footprint leaves the table");
  }
  for (int i = 0; i < scene.size(); ++i) {
    if (i == object) continue;
    const Placement& other = scene.placements[static_cast<std::size_t>(i)];
    if (discs_overlap(target.translation(), mover.footprint_radius, other.pose.translation(),
                      other.footprint_radius)) {
      throw CollisionAtTarget("target footprint overlaps object " + std::to_string(i));
    }
  }
  SceneState out = scene;
  PlanarTransformd placed = target;
  if (noise_sigma > 0) {
    std::normal_distribution<double> n(0.0, noise_sigma);
    const double dyaw = n(rng), dx = n(rng), dy = n(rng);
    placed = PlanarTransformd(target.yaw() + dyaw, target.tx() + dx, target.ty() + dy);
  }
  out.placements[static_cast<std::size_t>(object)].pose = placed;
  return out;
}

}  // namespace mvr
