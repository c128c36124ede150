#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvr/io.hpp"
#include "mvr/localization.hpp"
#include "mvr/matching.hpp"
#include "mvr/perception_db.hpp"
#include "mvr/planner.hpp"
#include "mvr/scene.hpp"
#include "mvr/segment.hpp"

namespace mvr {

enum class MatcherKind { oracle, descriptor_nn };
enum class CompletionSetting { one_step, multi_step };

std::string to_string(MatcherKind k);
std::string to_string(CompletionSetting s);

struct BenchConfig {
  int scenes = 50;
  std::uint64_t seed = 1;
  SimConfig sim;
  MatcherKind matcher = MatcherKind::oracle;
  OracleMatcherConfig oracle;
  double nn_ratio = 0.8;
  SegmentNoise segmentation;
  SyntheticDescriptorConfig descriptor;
  DatabaseConfig database;
  LocalizationConfig localization;
  PlannerConfig planner;
  CompletionSetting setting = CompletionSetting::multi_step;
  std::vector<RotationRegime> regimes{RotationRegime::minor, RotationRegime::full};
  bool single_view_ablation = true;
  int max_rounds = 3;  // perception + planning rounds in the multi-step setting
};

Json to_json(const BenchConfig& c);
void from_json(const Json& j, BenchConfig& c);

/// Seed of scene `index`; shared by every regime and database variant.
std::uint64_t scene_seed(const BenchConfig& c, int index);

/// The perception stack assembled from a bench config.
class Pipeline {
 public:
  Pipeline(const BenchConfig& config, const ModelLibrary& library);

  const ModelLibrary& library() const { return *library_; }
  const Segmenter& segmenter() const { return segmenter_; }
  const DescriptorBackend& descriptors() const { return descriptors_; }
  const MatcherBackend& matcher() const { return *matcher_; }

  // Ring frames of `scene`; viewpoints that see nothing are skipped.
  std::vector<Frame> ring_frames(const SceneState& scene, const RearrangementInstance& inst) const;
  Frame home_frame(const SceneState& scene, const RearrangementInstance& inst, bool with_depth) const;
  Database build(const std::vector<Frame>& frames) const;
  GoalEstimates localize(const Frame& goal, const Database& db) const;

 private:
  BenchConfig config_;
  const ModelLibrary* library_;
  GroundTruthSegmenter segmenter_;
  SyntheticDescriptorBackend descriptors_;
  std::unique_ptr<MatcherBackend> matcher_;
};

/// Physical object (placement index) nearest in the plane to each database
/// instance centroid.
std::vector<int> bind_instances(const Database& db, const SceneState& scene);

/// The goal estimate claiming each object through `binding`: an accepted
/// claim wins, then the higher inlier count. Null for unclaimed objects.
std::vector<const ObjectEstimate*> claims_by_object(const GoalEstimates& estimates, const std::vector<int>& binding,
                                                    int object_count);

struct ObjectRecord {
  std::string regime;
  std::string database;  // "multi-view" or "single-view"
  int scene = 0;
  std::uint64_t seed = 0;
  int object = 0;
  int model_id = 0;
  int instance = -1;
  bool estimated = false;
  bool accepted = false;
  bool retrieval_correct = false;
  double rotation_error_deg = 0;
  double translation_error_cm = 0;
  int inliers = 0;
  double inlier_ratio = 0;
  int candidates_visited = 0;
  int matcher_invocations = 0;
};

struct SceneRecord {
  std::string regime;
  int scene = 0;
  std::uint64_t seed = 0;
  int objects = 0;
  int rounds = 0;
  bool one_step_success = false;
  bool multi_step_success = false;
  int goal_moves = 0;
  int buffer_moves = 0;
  std::vector<int> manipulations;  // per object, all rounds
  int matcher_invocations = 0;
};

struct GroupMetrics {
  std::string regime;
  std::string database;
  int objects = 0;
  double median_rotation_deg = 0;
  double median_translation_cm = 0;
  int accepted = 0;
  int retrieval_correct = 0;
  int matcher_invocations = 0;
};

struct CompletionMetrics {
  std::string regime;
  int scenes = 0;
  double one_step_rate = 0;   // percent
  double multi_step_rate = 0;
  std::map<int, int> manipulation_histogram;  // manipulations per object -> count
};

struct MetricsReport {
  std::string kind;  // "pose" or "completion"
  BenchConfig config;
  std::vector<ObjectRecord> objects;
  std::vector<SceneRecord> scenes;
  std::vector<GroupMetrics> groups;
  std::vector<CompletionMetrics> completion;
  int skipped_scenes = 0;
  double wall_clock_s = 0;  // human-readable output only

  const GroupMetrics* group(const std::string& regime, const std::string& database) const;
  const CompletionMetrics* completion_for(const std::string& regime) const;
};

/// Median with the midpoint rule for even counts; NaN when empty.
double median(std::vector<double> values);

/// Groups object records by (regime, database) and fills the medians.
std::vector<GroupMetrics> compute_metrics(const std::vector<ObjectRecord>& records);
std::vector<CompletionMetrics> compute_completion(const std::vector<SceneRecord>& scenes);

MetricsReport run_pose_bench(const BenchConfig& config);
MetricsReport run_completion_bench(const BenchConfig& config);

/// Machine-readable: pose_objects.csv or completion_scenes.csv, plus
/// <kind>_summary.json. Human-readable: <kind>_table.txt.
void write_report(const MetricsReport& report, const std::filesystem::path& dir);
std::string objects_csv(const MetricsReport& report);
std::string scenes_csv(const MetricsReport& report);
Json summary_json(const MetricsReport& report);
std::string format_table(const MetricsReport& report);

}  // namespace mvr
