#include "mvr/localization.hpp"

#include <algorithm>
#include <map>

#include "mvr/random.hpp"

namespace mvr {

std::vector<RankedRegion> rank_regions(const Eigen::VectorXd& descriptor, const Database& db) {
  std::vector<RankedRegion> out;
  out.reserve(static_cast<std::size_t>(db.region_count()));
  for (int u = 0; u < db.size(); ++u) {
    const auto& list = db.instances[static_cast<std::size_t>(u)];
    for (int i = 0; i < static_cast<int>(list.size()); ++i) {
      out.push_back({{u, i}, descriptor.dot(list[static_cast<std::size_t>(i)].descriptor)});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedRegion& a, const RankedRegion& b) { return a.similarity > b.similarity; });
  return out;
}

std::vector<int> vote_instances(const std::vector<RankedRegion>& ranked, int top_n, const std::vector<int>& excluded) {
  struct Tally {
    int votes = 0;
    double best = -2;
  };
  std::map<int, Tally> tally;
  int taken = 0;
  for (const RankedRegion& r : ranked) {
    if (taken >= top_n) break;
    if (std::find(excluded.begin(), excluded.end(), r.ref.instance) != excluded.end()) continue;
    Tally& t = tally[r.ref.instance];
    ++t.votes;
    t.best = std::max(t.best, r.similarity);
    ++taken;
  }
  std::vector<int> order;
  for (const auto& [u, t] : tally) order.push_back(u);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Tally& ta = tally.at(a);
    const Tally& tb = tally.at(b);
    if (ta.votes != tb.votes) return ta.votes > tb.votes;
    return ta.best > tb.best;
  });
  return order;
}

CandidateList candidates_of(int instance, const std::vector<RankedRegion>& ranked) {
  CandidateList list;
  list.instance = instance;
  for (const RankedRegion& r : ranked) {
    if (r.ref.instance == instance) list.candidates.push_back({r.ref, r.similarity});
  }
  return list;
}

CandidateList retrieve_candidates(const Eigen::VectorXd& descriptor, const Database& db, int top_n,
                                  const std::vector<int>& excluded) {
  if (db.empty()) throw NoCandidates("database is empty");
  const auto ranked = rank_regions(descriptor, db);
  const auto order = vote_instances(ranked, top_n, excluded);
  if (order.empty()) throw NoCandidates("every database instance is excluded");
  return candidates_of(order.front(), ranked);
}

void prune_after_rejection(CandidateList& list, std::size_t rejected, const Database& db, double angle) {
  Candidate& r = list.candidates.at(rejected);
  r.pruned = true;
  const UnitVec3d& e = db.region(r.ref).obs_vec;
  for (Candidate& c : list.candidates) {
    if (c.visited || c.pruned) continue;
    if (angular_distance(db.region(c.ref).obs_vec, e) < angle) c.pruned = true;
  }
}

Correspondences3D lift_to_3d(const Correspondences2D& matches, const RegionCrop& goal, const ObjectRegion& candidate,
                             int resolution) {
  const CropResize gmap = CropResize::of(goal, resolution);
  const CropResize cmap = CropResize::of(candidate.crop, resolution);
  std::vector<Eigen::Vector2d> px;
  std::vector<Eigen::Vector3d> pts;
  std::vector<std::pair<double, double>> seen;
  for (const Match2D& m : matches) {
    const Eigen::Vector2d c = cmap.to_image(m.candidate);
    const CropSample* s = candidate.crop.at(static_cast<int>(std::floor(c.x())), static_cast<int>(std::floor(c.y())));
    if (s == nullptr || s->cloud_index < 0 || !std::isfinite(s->depth)) continue;
    const Eigen::Vector2d g = gmap.to_image(m.goal);
    const std::pair<double, double> key{g.x(), g.y()};
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    px.push_back(g);
    pts.push_back(candidate.cloud.col(s->cloud_index));
  }
  if (px.size() < 4) {
    throw TooFewCorrespondences(std::to_string(px.size()) + " lifted correspondences, need 4");
  }
  Correspondences3D out;
  out.pixels.resize(2, static_cast<Eigen::Index>(px.size()));
  out.points.resize(3, static_cast<Eigen::Index>(px.size()));
  for (std::size_t i = 0; i < px.size(); ++i) {
    out.pixels.col(static_cast<Eigen::Index>(i)) = px[i];
    out.points.col(static_cast<Eigen::Index>(i)) = pts[i];
  }
  return out;
}

PoseEstimate solve_pose(const Correspondences3D& m3d, const CameraIntrinsicsd& intr, const Pose3d& goal_viewpoint,
                        const LocalizationConfig& config, std::uint64_t seed) {
  RansacConfig rc = config.ransac;
  rc.seed = seed;
  const RansacResult r = ransac_pnp(m3d.pixels, m3d.points, intr, rc);
  PoseEstimate e;
  e.world_to_cam = r.world_to_cam;
  e.T = compose(goal_viewpoint, r.world_to_cam);
  e.correspondences = static_cast<int>(m3d.size());
  e.inlier_count = static_cast<int>(r.inliers.size());
  e.inlier_ratio = m3d.size() > 0 ? static_cast<double>(e.inlier_count) / static_cast<double>(m3d.size()) : 0.0;
  e.planar = is_planar(e.T, config.planarity);
  e.accepted = e.inlier_count >= rc.min_inliers && e.inlier_ratio >= rc.min_inlier_ratio &&
               (e.planar || !config.require_planar);
  return e;
}

ObjectEstimate estimate_object(const QueryRegion& query, const Database& db, const MatcherBackend& matcher,
                               const LocalizationConfig& config, const std::vector<int>& excluded) {
  if (db.empty()) throw NoCandidates("database is empty");
  ObjectEstimate out;
  out.goal_label = query.label;
  out.truth_instance = query.truth_instance;

  const auto ranked = rank_regions(query.descriptor, db);
  const auto order = vote_instances(ranked, config.top_n, excluded);
  if (order.empty()) return out;
  out.instance = order.front();

  const std::uint64_t query_seed = derive_seed(config.seed, static_cast<std::uint64_t>(query.label + 1));
  std::optional<PoseEstimate> best_effort;
  const std::size_t walks = config.fallback_instances ? order.size() : 1;
  for (std::size_t w = 0; w < walks; ++w) {
    CandidateList list = candidates_of(order[w], ranked);
    out.visited_instance_start.push_back(static_cast<int>(out.visited.size()));
    for (std::size_t i = 0; i < list.candidates.size(); ++i) {
      Candidate& c = list.candidates[i];
      if (c.visited || c.pruned) continue;
      c.visited = true;
      out.visited.push_back(c.ref);
      out.visited_similarity.push_back(c.similarity);
      const ObjectRegion& region = db.region(c.ref);
      const std::uint64_t pair_seed =
          derive_seed(query_seed, static_cast<std::uint64_t>(c.ref.instance), static_cast<std::uint64_t>(c.ref.index));
      ++out.matcher_invocations;
      const Correspondences2D m2d = matcher.match(query.crop, region.crop, config.match_resolution, pair_seed);
      std::optional<PoseEstimate> est;
      try {
        const Correspondences3D m3d = lift_to_3d(m2d, query.crop, region, config.match_resolution);
        est = solve_pose(m3d, query.intrinsics, query.viewpoint, config, derive_seed(pair_seed, 0x9A9));
        est->candidate = c.ref;
      } catch (const TooFewCorrespondences&) {
      } catch (const DegenerateGeometry&) {
      }
      if (est && est->accepted) {
        out.instance = list.instance;
        out.pose = *est;
        return out;
      }
      if (est && est->planar && (!best_effort || est->inlier_count > best_effort->inlier_count)) {
        best_effort = est;
      }
      prune_after_rejection(list, i, db, config.prune_angle);
    }
  }
  if (best_effort) {
    out.pose = *best_effort;
    out.pose.accepted = false;
  }
  return out;
}

namespace {

// Stronger claim on an instance: accepted first, then inlier ratio, then count.
bool stronger(const ObjectEstimate& a, const ObjectEstimate& b) {
  if (a.pose.accepted != b.pose.accepted) return a.pose.accepted;
  if (a.pose.inlier_ratio != b.pose.inlier_ratio) return a.pose.inlier_ratio > b.pose.inlier_ratio;
  if (a.pose.inlier_count != b.pose.inlier_count) return a.pose.inlier_count > b.pose.inlier_count;
  return a.goal_label < b.goal_label;
}

}  // namespace

GoalEstimates estimate_all(const Frame& goal_frame, const Database& db, const Segmenter& segmenter,
                           const DescriptorBackend& descriptors, const MatcherBackend& matcher,
                           const LocalizationConfig& config) {
  GoalEstimates out;
  if (goal_frame.empty()) return out;
  const auto queries = make_query_regions(goal_frame, segmenter.segment(goal_frame), descriptors, config.min_points);
  std::vector<std::vector<int>> excluded(queries.size());
  for (const QueryRegion& q : queries) out.objects.push_back(estimate_object(q, db, matcher, config));

  const std::size_t guard = queries.size() * static_cast<std::size_t>(std::max(1, db.size())) + 1;
  for (std::size_t round = 0; round < guard; ++round) {
    std::optional<std::size_t> loser;
    for (std::size_t a = 0; a < out.objects.size() && !loser; ++a) {
      for (std::size_t b = a + 1; b < out.objects.size(); ++b) {
        if (out.objects[a].instance < 0 || out.objects[a].instance != out.objects[b].instance) continue;
        loser = stronger(out.objects[a], out.objects[b]) ? b : a;
        break;
      }
    }
    if (!loser) break;
    excluded[*loser].push_back(out.objects[*loser].instance);
    out.objects[*loser] = estimate_object(queries[*loser], db, matcher, config, excluded[*loser]);
    ++out.duplicate_resolutions;
  }
  return out;
}

}  // namespace mvr
