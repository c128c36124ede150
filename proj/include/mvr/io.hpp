#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mvr/localization.hpp"
#include "mvr/matching.hpp"
#include "mvr/perception_db.hpp"
#include "mvr/planner.hpp"
#include "mvr/scene.hpp"
#include "mvr/segment.hpp"

namespace mvr {

using Json = nlohmann::ordered_json;

inline constexpr const char* kInstanceFormat = "mvr-instance/1";
inline constexpr const char* kDatabaseFormat = "mvr-database/1";
inline constexpr const char* kManifestFormat = "mvr-dataset/1";

// Config objects. Readers start from defaults, accept any subset of keys and
// reject unknown ones with ConfigParse.
Json to_json(const SimConfig& c);
void from_json(const Json& j, SimConfig& c);
Json to_json(const OracleMatcherConfig& c);
void from_json(const Json& j, OracleMatcherConfig& c);
Json to_json(const SegmentNoise& c);
void from_json(const Json& j, SegmentNoise& c);
Json to_json(const SyntheticDescriptorConfig& c);
void from_json(const Json& j, SyntheticDescriptorConfig& c);
Json to_json(const KMeansConfig& c);
void from_json(const Json& j, KMeansConfig& c);
Json to_json(const DatabaseConfig& c);
void from_json(const Json& j, DatabaseConfig& c);
Json to_json(const RansacConfig& c);
void from_json(const Json& j, RansacConfig& c);
Json to_json(const LocalizationConfig& c);
void from_json(const Json& j, LocalizationConfig& c);
Json to_json(const PlannerConfig& c);
void from_json(const Json& j, PlannerConfig& c);

Json pose_to_json(const Pose3d& p);  // 16 numbers, row-major
Pose3d pose_from_json(const Json& j);

Json to_json(const RearrangementInstance& inst);
RearrangementInstance instance_from_json(const Json& j);

Json to_json(const Database& db);
Database database_from_json(const Json& j);

/// One record per goal region: instance, acceptance, T as yaw/tx/ty and 4x4,
/// inlier statistics and traversal counts.
Json pose_report(const GoalEstimates& estimates);

Json to_json(const ExecutionResult& r);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mvr
