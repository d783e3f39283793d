#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slicesec/matrix.hpp"
#include "slicesec/util.hpp"

namespace slicesec::ingest {

struct MissingColumn : Error {
    using Error::Error;
};
struct BadLabel : Error {
    using Error::Error;
};
struct UnknownMetric : Error {
    using Error::Error;
};
struct EmptyInput : Error {
    using Error::Error;
};
struct Unachievable : Error {
    using Error::Error;
};
struct ShardEmpty : Error {
    using Error::Error;
};

// One telemetry reading as exported per entity: metric plus optional
// sub-dimension (attribute), one-second timestamps.
struct TelemetrySample {
    std::string entity_id;
    std::int64_t timestamp = 0;  // epoch seconds
    std::string metric;
    std::string attribute;  // empty for scalar metrics
    double value = 0.0;
};

// Ordered (metric, attribute) pairs defining the wide-schema columns.
struct MetricManifest {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string label_column = "label";

    // the shipped default: 42 columns expanding the generic slice metrics
    static MetricManifest default_manifest();
    static MetricManifest from_json_file(const std::filesystem::path& path);
    std::string to_json_string() const;

    static std::string column_name(const std::string& metric, const std::string& attribute);
    std::optional<std::size_t> index_of(const std::string& metric, const std::string& attribute) const;
};

struct BehavioralDataset {
    std::string entity_id;
    std::vector<std::int64_t> timestamps;  // strictly increasing
    std::vector<std::string> columns;
    Matrix matrix;            // rows x columns
    std::vector<int> labels;  // empty until labeled
    bool labeled = false;
};

struct FlowRecord {
    std::vector<double> features;  // length 78
    int label = 0;
    std::string attack_tag;  // empty for benign
};

inline constexpr std::size_t kFlowFeatureCount = 78;

struct FlowSchema {
    std::vector<std::string> features;  // 78 column names in order
    std::string label;

    static FlowSchema from_json_file(const std::filesystem::path& path);
    std::string to_json_string() const;
};

struct ParsedFlows {
    std::vector<FlowRecord> records;
    std::size_t skipped = 0;  // rows dropped for non-finite features
};

ParsedFlows parse_flow_csv(const std::filesystem::path& path, const FlowSchema& schema);

// telemetry CSV: entity_id,timestamp,metric,attribute,value
std::vector<TelemetrySample> parse_telemetry_csv(const std::filesystem::path& path);

// Wide table over the manifest columns, one row per distinct timestamp.
// Gaps forward-fill from the most recent earlier sample; cells before a
// key's first sample are 0.
BehavioralDataset expand_telemetry(const std::vector<TelemetrySample>& samples,
                                   const MetricManifest& manifest);

// Union of input timestamps; each table forward-fills into rows it lacks.
BehavioralDataset timestamp_join(const std::vector<BehavioralDataset>& tables);

// copy with columns renamed to "<entity_id>.<column>"
BehavioralDataset with_entity_prefix(BehavioralDataset ds);

struct AttackWindow {
    std::int64_t start = 0;
    std::int64_t end = 0;  // inclusive
};

std::vector<AttackWindow> read_windows_json(const std::filesystem::path& path);

// rows with a timestamp inside any window (inclusive) get label 1
BehavioralDataset label_windows(BehavioralDataset ds, std::vector<AttackWindow> windows);

// Downsample one class so class proportions hit (benign_ratio, 1-benign_ratio)
// within one row, then reshuffle. Deterministic in (ds, ratio, seed).
BehavioralDataset rebalance(const BehavioralDataset& ds, double benign_ratio, std::uint64_t seed);

struct ShardAssignment {
    int id = 0;
    std::string file;
    std::optional<std::uint64_t> expected_rows;
    std::optional<double> expected_malignant_pct;
};

struct ShardSpec {
    std::vector<ShardAssignment> assignments;

    static ShardSpec from_json_file(const std::filesystem::path& path);
    std::string to_json_string() const;
};

struct PartitionResult {
    std::map<int, std::vector<FlowRecord>> shards;
    std::map<int, std::size_t> skipped;    // per shard
    std::vector<std::string> warnings;     // expected_rows / expected_malignant_pct mismatches
};

// Source files may be relative to base_dir. Expected-row counts are checked
// exactly; malignant percentage within 0.1 points.
PartitionResult partition_non_iid(const ShardSpec& spec, const FlowSchema& schema,
                                  const std::filesystem::path& base_dir = {});

void write_behavioral_csv(const BehavioralDataset& ds, const std::filesystem::path& path);
BehavioralDataset read_behavioral_csv(const std::filesystem::path& path,
                                      const std::string& label_column = "label");

}  // namespace slicesec::ingest
