#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "tiered/desk.hpp"
#include "tiered/partitioner.hpp"
#include "tiered/profiler.hpp"
#include "tiered/simulator.hpp"
#include "tiered/splitter.hpp"

namespace tiered {

using Json = nlohmann::ordered_json;

inline constexpr int kDocumentVersion = 1;

/// Input name -> content digest of the file it was read from.
using InputDigests = std::map<std::string, std::string>;

/**
 * Every JSON artifact is {"format": "tieredrag.<kind>", "version": 1,
 * "inputs": {...}, <payload fields>}. Readers check kind and version and
 * throw Format on a mismatch.
 */
Json make_document(const std::string& kind, const InputDigests& inputs);
void check_document(const Json& doc, const std::string& kind);
InputDigests document_inputs(const Json& doc);

/// Throws StaleInput unless `doc` names `path`'s current digest under `name`.
void require_input(const Json& doc, const std::string& name, const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const Json& doc);
Json read_json(const std::filesystem::path& path);
/// Canonical text: two-space indent and a trailing newline.
std::string dump_json(const Json& doc);

void to_json(Json& j, const AccessProfile& p);
void from_json(const Json& j, AccessProfile& p);
void to_json(Json& j, const CoveragePoint& p);
void from_json(const Json& j, CoveragePoint& p);
void to_json(Json& j, const CoverageCurve& c);
void from_json(const Json& j, CoverageCurve& c);
void to_json(Json& j, const SigmaMax& s);
void from_json(const Json& j, SigmaMax& s);
void to_json(Json& j, const LatencySample& s);
void from_json(const Json& j, LatencySample& s);
void to_json(Json& j, const PiecewiseLinear& f);
void from_json(const Json& j, PiecewiseLinear& f);
void to_json(Json& j, const LatencyModel& m);
void from_json(const Json& j, LatencyModel& m);
void to_json(Json& j, const SloConfig& s);
void from_json(const Json& j, SloConfig& s);
void to_json(Json& j, const LlmModel& m);
void from_json(const Json& j, LlmModel& m);
void to_json(Json& j, const MemoryModel& m);
void from_json(const Json& j, MemoryModel& m);
void to_json(Json& j, const PartitionStep& s);
void from_json(const Json& j, PartitionStep& s);
void to_json(Json& j, const PartitionPlan& p);
void from_json(const Json& j, PartitionPlan& p);
void to_json(Json& j, const ShardMap& m);
void from_json(const Json& j, ShardMap& m);
void to_json(Json& j, const HitRateModel& h);
void from_json(const Json& j, HitRateModel& h);
void to_json(Json& j, const Scenario& s);
void from_json(const Json& j, Scenario& s);
void to_json(Json& j, const SweepRow& r);
void from_json(const Json& j, SweepRow& r);

} // namespace tiered
