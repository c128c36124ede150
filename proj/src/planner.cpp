#include "mvr/planner.hpp"

#include <numbers>

#include "mvr/errors.hpp"

namespace mvr {

std::string to_string(MoveKind k) {
  switch (k) {
    case MoveKind::goal: return "goal";
    case MoveKind::buffer: return "buffer";
    case MoveKind::blocked: return "blocked";
    case MoveKind::in_place: return "in_place";
  }
  return "unknown";
}

int ExecutionResult::manipulations(int object) const {
  return goal_moves.at(static_cast<std::size_t>(object)) + buffer_moves.at(static_cast<std::size_t>(object));
}

int ExecutionResult::total_manipulations() const {
  int n = 0;
  for (std::size_t i = 0; i < goal_moves.size(); ++i) n += goal_moves[i] + buffer_moves[i];
  return n;
}

bool check_collision(const SceneState& scene, int object, const PlanarTransformd& target, double margin) {
  if (object < 0 || object >= scene.size()) throw UnknownObject("object " + std::to_string(object) + " not in scene");
  const double r = scene.placements[static_cast<std::size_t>(object)].footprint_radius + margin;
  const Eigen::Vector2d c = target.translation();
  if (!scene.table.contains_disc(c, r)) return true;
  for (int j = 0; j < scene.size(); ++j) {
    if (j == object) continue;
    const Placement& p = scene.placements[static_cast<std::size_t>(j)];
    if ((c - p.pose.translation()).norm() < r + p.footprint_radius) return true;
  }
  return false;
}

Pose3d correct_pose(int object, PlanState& state, const PlanarTransformd& goal_placement, const SceneState& scene,
                    const Reobserver* reobserve) {
  auto& tracked = state.tracked_poses.at(static_cast<std::size_t>(object));
  if (reobserve != nullptr && *reobserve) {
    const auto seen = (*reobserve)(scene, object);
    if (!seen) throw ReobservationFailed("object " + std::to_string(object) + " not localized from home");
    tracked = *seen;
  }
  return compose(goal_placement, invert(tracked)).lift();
}

PlanarTransformd find_buffer_pose(const SceneState& scene, int object, Rng& rng, double margin, int attempts,
                                  const std::vector<Disc>& reserved) {
  if (object < 0 || object >= scene.size()) throw UnknownObject("object " + std::to_string(object) + " not in scene");
  const double r = scene.placements[static_cast<std::size_t>(object)].footprint_radius;
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> ux(scene.table.min_x, scene.table.max_x);
  std::uniform_real_distribution<double> uy(scene.table.min_y, scene.table.max_y);
  for (int i = 0; i < attempts; ++i) {
    const double a = yaw(rng), x = ux(rng), y = uy(rng);
    const PlanarTransformd t(a, x, y);
    if (check_collision(scene, object, t, margin)) continue;
    const bool clear = std::none_of(reserved.begin(), reserved.end(), [&](const Disc& d) {
      return (t.translation() - d.center).norm() < r + margin + d.radius;
    });
    if (clear) return t;
  }
  throw NoBufferSpace("no collision-free buffer pose after " + std::to_string(attempts) + " attempts");
}

namespace {

bool within(const PlanarTransformd& a, const PlanarTransformd& b, const PlannerConfig& c) {
  const double dyaw = std::abs(wrap_angle(a.yaw() - b.yaw())) * 180.0 / std::numbers::pi;
  return dyaw < c.in_place_rotation_deg && (a.translation() - b.translation()).norm() < c.in_place_translation;
}

}  // namespace

ExecutionResult plan_and_execute(const SceneState& scene, const std::vector<std::optional<PlanarTransformd>>& offsets,
                                 const PlannerConfig& config, const Reobserver& reobserve) {
  const int k = scene.size();
  if (static_cast<int>(offsets.size()) != k) throw UnknownObject("one offset per object is required");
  ExecutionResult res;
  res.goal_moves.assign(static_cast<std::size_t>(k), 0);
  res.buffer_moves.assign(static_cast<std::size_t>(k), 0);
  res.final_scene = scene;

  PlanState state;
  state.failure_counts.assign(static_cast<std::size_t>(k), 0);
  std::vector<std::optional<PlanarTransformd>> goals(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    state.remaining.push_back(i);
    state.tracked_poses.push_back(scene.placements[static_cast<std::size_t>(i)].pose);
    if (offsets[static_cast<std::size_t>(i)]) {
      goals[static_cast<std::size_t>(i)] = compose(*offsets[static_cast<std::size_t>(i)], state.tracked_poses.back());
    }
  }
  std::vector<bool> moved(static_cast<std::size_t>(k), false);
  Rng rng(config.seed);
  int step = 0;
  auto log = [&](int obj, MoveKind kind, const PlanarTransformd& target, bool collision) {
    res.log.push_back({step++, state.outer_iterations, obj, kind, target, collision,
                       state.failure_counts[static_cast<std::size_t>(obj)]});
  };

  SceneState& current = res.final_scene;
  const int thres_outer = config.outer_factor * k;
  while (!state.remaining.empty()) {
    ++state.outer_iterations;
    std::vector<int> kept;
    for (const int obj : state.remaining) {
      const auto o = static_cast<std::size_t>(obj);
      int& cnt = state.failure_counts[o];
      if (!goals[o]) {
        ++cnt;
        log(obj, MoveKind::blocked, state.tracked_poses[o], true);
        kept.push_back(obj);
        continue;
      }
      Pose3d correction;
      try {
        const bool refresh = config.actuation_noise > 0 && moved[o];
        correction = correct_pose(obj, state, *goals[o], current, refresh ? &reobserve : nullptr);
      } catch (const ReobservationFailed&) {
        ++cnt;
        log(obj, MoveKind::blocked, state.tracked_poses[o], true);
        kept.push_back(obj);
        continue;
      }
      const PlanarTransformd target = compose(to_planar(correction), state.tracked_poses[o]);
      if (within(state.tracked_poses[o], target, config)) {
        log(obj, MoveKind::in_place, target, false);
        continue;
      }
      if (!check_collision(current, obj, target, config.collision_margin)) {
        current = apply_move(current, obj, target, config.actuation_noise, rng);
        state.tracked_poses[o] = target;
        moved[o] = true;
        ++res.goal_moves[o];
        log(obj, MoveKind::goal, target, false);
        continue;
      }
      ++cnt;
      log(obj, MoveKind::blocked, target, true);
      kept.push_back(obj);
      if (cnt <= config.thres_fail) continue;
      // Keep clear of where the other remaining objects still have to go.
      std::vector<Disc> reserved;
      for (const int other : state.remaining) {
        const auto oo = static_cast<std::size_t>(other);
        if (other == obj || !goals[oo]) continue;
        reserved.push_back({goals[oo]->translation(), current.placements[oo].footprint_radius});
      }
      std::optional<PlanarTransformd> buffer;
      try {
        buffer = find_buffer_pose(current, obj, rng, config.collision_margin, config.buffer_attempts, reserved);
      } catch (const NoBufferSpace&) {
        try {
          buffer = find_buffer_pose(current, obj, rng, config.collision_margin, config.buffer_attempts);
        } catch (const NoBufferSpace&) {
        }
      }
      if (!buffer) continue;
      current = apply_move(current, obj, *buffer, config.actuation_noise, rng);
      state.tracked_poses[o] = *buffer;
      moved[o] = true;
      ++res.buffer_moves[o];
      log(obj, MoveKind::buffer, *buffer, false);
    }
    state.remaining = std::move(kept);
    if (state.remaining.empty() || state.outer_iterations > thres_outer) break;
  }
  res.outer_iterations = state.outer_iterations;
  res.completed = state.remaining.empty();
  return res;
}

SceneState replay(const SceneState& scene, const std::vector<MoveRecord>& log) {
  SceneState s = scene;
  Rng unused(0);
  for (const MoveRecord& r : log) {
    if (r.kind == MoveKind::goal || r.kind == MoveKind::buffer) s = apply_move(s, r.object, r.target, 0.0, unused);
  }
  return s;
}

}  // namespace mvr
