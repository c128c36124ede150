#pragma once

#include <vector>

#include "mvr/bench.hpp"
#include "mvr/scene.hpp"

namespace mvr::testing {

struct Spot {
  int model_id;
  double yaw_deg, x, y;
};

inline const SimConfig& sim_defaults() {
  static const SimConfig config;
  return config;
}

inline const ModelLibrary& library() {
  static const ModelLibrary lib = generate_model_library(sim_defaults());
  return lib;
}

inline SceneState make_scene(const std::vector<Spot>& spots) {
  SceneState s;
  for (const auto& p : spots) {
    s.placements.push_back(Placement{p.model_id, PlanarTransformd(deg2rad(p.yaw_deg), p.x, p.y),
                                     library().at(static_cast<std::size_t>(p.model_id)).footprint_radius});
  }
  return s;
}

inline RearrangementInstance make_instance(const SceneState& initial, const SceneState& goal) {
  RearrangementInstance inst;
  inst.config = sim_defaults();
  inst.initial = initial;
  inst.goal = goal;
  for (int i = 0; i < initial.size(); ++i) {
    inst.true_offsets.push_back(goal.placements[static_cast<std::size_t>(i)].pose *
                                initial.placements[static_cast<std::size_t>(i)].pose.inverse());
  }
  inst.home_viewpoint = home_viewpoint(inst.config);
  inst.ring_viewpoints = ring_viewpoints(inst.config);
  return inst;
}

inline RearrangementInstance seeded_instance(std::uint64_t seed, RotationRegime regime = RotationRegime::full) {
  SimConfig c = sim_defaults();
  c.seed = seed;
  c.regime = regime;
  return generate_instance(c, library());
}

// Exact true offsets as the planner input.
inline std::vector<std::optional<PlanarTransformd>> exact_offsets(const RearrangementInstance& inst) {
  return {inst.true_offsets.begin(), inst.true_offsets.end()};
}

}  // namespace mvr::testing
