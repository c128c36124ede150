#include "mvr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "mvr/random.hpp"

namespace mvr {

CropResize CropResize::of(const RegionCrop& crop, int resolution) {
  CropResize c;
  const double side = std::max(crop.width(), crop.height());
  c.x0 = crop.x0();
  c.y0 = crop.y0();
  c.pad_x = (side - crop.width()) / 2.0;
  c.pad_y = (side - crop.height()) / 2.0;
  c.scale = side > 0 ? resolution / side : 1.0;
  c.resolution = resolution;
  return c;
}

Eigen::Vector2d CropResize::to_normalized(const Eigen::Vector2d& p) const {
  return {(p.x() - x0 + pad_x) * scale, (p.y() - y0 + pad_y) * scale};
}

Eigen::Vector2d CropResize::to_image(const Eigen::Vector2d& p) const {
  return {p.x() / scale - pad_x + x0, p.y() / scale - pad_y + y0};
}

namespace {

Eigen::Vector2d pixel_center(const CropSample& s) { return {s.x + 0.5, s.y + 0.5}; }

}  // namespace

Correspondences2D OracleMatcher::match(const RegionCrop& goal, const RegionCrop& candidate, int resolution,
                                       std::uint64_t seed) const {
  const CropResize gmap = CropResize::of(goal, resolution);
  const CropResize cmap = CropResize::of(candidate, resolution);
  std::unordered_map<std::int64_t, const CropSample*> by_id;
  by_id.reserve(candidate.samples().size());
  for (const CropSample& s : candidate.samples()) by_id.emplace(s.feature_id(), &s);

  const double cos_limit = std::cos(config_.max_view_angle_deg * std::numbers::pi / 180.0);
  std::vector<std::pair<const CropSample*, const CropSample*>> pairs;
  for (const CropSample& g : goal.samples()) {
    const auto it = by_id.find(g.feature_id());
    if (it == by_id.end()) continue;
    if (g.view_dir_local.dot(it->second->view_dir_local) < cos_limit) continue;
    pairs.emplace_back(&g, it->second);
  }
  if (config_.max_matches > 0 && static_cast<int>(pairs.size()) > config_.max_matches) {
    std::vector<std::pair<const CropSample*, const CropSample*>> kept;
    const std::size_t n = pairs.size(), m = static_cast<std::size_t>(config_.max_matches);
    for (std::size_t i = 0; i < m; ++i) kept.push_back(pairs[i * n / m]);
    pairs = std::move(kept);
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any(0, candidate.samples().empty() ? 0 : candidate.samples().size() - 1);
  const double hi = std::nextafter(static_cast<double>(resolution), 0.0);

  Correspondences2D out;
  for (const auto& [g, c] : pairs) {
    if (config_.drop_rate > 0 && unit(rng) < config_.drop_rate) continue;
    const CropSample* cand = c;
    if (config_.outlier_rate > 0 && unit(rng) < config_.outlier_rate) cand = &candidate.samples()[any(rng)];
    Match2D m;
    m.goal = gmap.to_normalized({g->u, g->v});
    if (config_.pixel_sigma > 0) {
      m.goal.x() = std::clamp(m.goal.x() + config_.pixel_sigma * gauss(rng), 0.0, hi);
      m.goal.y() = std::clamp(m.goal.y() + config_.pixel_sigma * gauss(rng), 0.0, hi);
    }
    m.candidate = cmap.to_normalized(pixel_center(*cand));
    out.push_back(m);
  }
  return out;
}

Correspondences2D DescriptorNNMatcher::match(const RegionCrop& goal, const RegionCrop& candidate, int resolution,
                                             std::uint64_t /*seed*/) const {
  Correspondences2D out;
  const auto& gs = goal.samples();
  const auto& cs = candidate.samples();
  if (gs.empty() || cs.size() < 2) return out;
  auto descriptor = [this](const CropSample& s) {
    return library_->at(static_cast<std::size_t>(s.model_id)).descriptors.col(s.point_index);
  };
  const Eigen::Index dim = descriptor(gs.front()).size();
  Eigen::MatrixXf gd(dim, static_cast<Eigen::Index>(gs.size()));
  Eigen::MatrixXf cd(dim, static_cast<Eigen::Index>(cs.size()));
  for (std::size_t i = 0; i < gs.size(); ++i) gd.col(static_cast<Eigen::Index>(i)) = descriptor(gs[i]);
  for (std::size_t j = 0; j < cs.size(); ++j) cd.col(static_cast<Eigen::Index>(j)) = descriptor(cs[j]);
  // Unit descriptors: squared distance = 2 - 2 dot.
  const Eigen::MatrixXf dots = gd.transpose() * cd;

  std::vector<Eigen::Index> best_goal(cs.size());
  for (Eigen::Index j = 0; j < dots.cols(); ++j) dots.col(j).maxCoeff(&best_goal[static_cast<std::size_t>(j)]);

  const CropResize gmap = CropResize::of(goal, resolution);
  const CropResize cmap = CropResize::of(candidate, resolution);
  for (Eigen::Index i = 0; i < dots.rows(); ++i) {
    Eigen::Index first = -1;
    float d1 = -2, d2 = -2;
    for (Eigen::Index j = 0; j < dots.cols(); ++j) {
      const float d = dots(i, j);
      if (d > d1) {
        d2 = d1;
        d1 = d;
        first = j;
      } else if (d > d2) {
        d2 = d;
      }
    }
    if (best_goal[static_cast<std::size_t>(first)] != i) continue;
    const double dist1 = std::sqrt(std::max(0.0, 2.0 - 2.0 * d1));
    const double dist2 = std::sqrt(std::max(0.0, 2.0 - 2.0 * d2));
    if (dist1 >= ratio_ * dist2) continue;
    const CropSample& g = gs[static_cast<std::size_t>(i)];
    out.push_back({gmap.to_normalized({g.u, g.v}), cmap.to_normalized(pixel_center(cs[static_cast<std::size_t>(first)]))});
  }
  return out;
}

}  // namespace mvr
