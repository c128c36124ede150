#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvr/geometry.hpp"
#include "mvr/random.hpp"
#include "mvr/scene.hpp"

namespace mvr {

struct PlannerConfig {
  int thres_fail = 3;
  int outer_factor = 2;            // outer-iteration cap = outer_factor * K
  double collision_margin = 0.01;  // meters
  double in_place_translation = 0.02;
  double in_place_rotation_deg = 5.0;
  double actuation_noise = 0.0;
  int buffer_attempts = 1000;
  std::uint64_t seed = 17;
};

enum class MoveKind { goal, buffer, blocked, in_place };
std::string to_string(MoveKind k);

/// One planner decision. `goal` and `buffer` records are executed moves;
/// `blocked` is a failed collision check; `in_place` removes an object
/// without touching it.
struct MoveRecord {
  int step = 0;
  int outer_iteration = 0;
  int object = -1;
  MoveKind kind = MoveKind::goal;
  PlanarTransformd target;
  bool collision = false;
  int failure_count = 0;
};

struct PlanState {
  std::vector<int> remaining;
  std::vector<int> failure_counts;
  int outer_iterations = 0;
  std::vector<PlanarTransformd> tracked_poses;
};

struct ExecutionResult {
  std::vector<MoveRecord> log;
  bool completed = false;
  std::vector<int> goal_moves;
  std::vector<int> buffer_moves;
  int outer_iterations = 0;
  SceneState final_scene;

  int manipulations(int object) const;
  int total_manipulations() const;
};

/// True iff the target disc, grown by `margin`, meets another object's disc
/// or leaves the table. Throws UnknownObject.
bool check_collision(const SceneState& scene, int object, const PlanarTransformd& target, double margin);

/// Observed current pose of an object, or nullopt when it cannot be localized.
using Reobserver = std::function<std::optional<PlanarTransformd>(const SceneState& scene, int object)>;

/// Offset that carries the tracked pose onto the goal placement. With a
/// reobserver the tracked pose is refreshed first; throws
/// ReobservationFailed when that observation is unavailable.
Pose3d correct_pose(int object, PlanState& state, const PlanarTransformd& goal_placement, const SceneState& scene,
                    const Reobserver* reobserve = nullptr);

struct Disc {
  Eigen::Vector2d center;
  double radius = 0;
};

/// Rejection-samples a collision-free pose on the table, also avoiding
/// `reserved` discs. Throws NoBufferSpace.
PlanarTransformd find_buffer_pose(const SceneState& scene, int object, Rng& rng, double margin = 0.01,
                                  int attempts = 1000, const std::vector<Disc>& reserved = {});

/// The iterative attempt loop. `offsets[i]` is the estimated current-to-goal
/// motion of object i, or nullopt when its estimate was not accepted.
ExecutionResult plan_and_execute(const SceneState& scene, const std::vector<std::optional<PlanarTransformd>>& offsets,
                                 const PlannerConfig& config, const Reobserver& reobserve = {});

/// Re-applies the executed moves of a log without noise.
SceneState replay(const SceneState& scene, const std::vector<MoveRecord>& log);

}  // namespace mvr
