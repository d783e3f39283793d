#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slicesec/util.hpp"

namespace slicesec::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// stable exit-code contract for scripting
inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 2;         // empty or invalid data
inline constexpr int kExitUsage = 64;       // bad flags / unknown subcommand
inline constexpr int kExitFormat = 65;      // malformed input file
inline constexpr int kExitUnavailable = 69; // bind failure

struct DataError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct UnavailableError : Error {
    using Error::Error;
};

// every command writes one of these next to its outputs
struct RunManifest {
    std::string command;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> input_digests;  // (path, digest)
    std::vector<std::string> output_paths;
    std::int64_t started_at = 0;
    std::int64_t finished_at = 0;

    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
    void write(const std::filesystem::path& dir) const;
};

RunManifest begin_manifest(const std::string& command, const std::string& config_text,
                           std::uint64_t seed);

struct FeaturizeArgs {
    std::string telemetry_csv;
    std::string manifest_path;  // empty -> shipped default manifest
    std::string windows_path;   // empty -> no attack windows
    std::string out_path;
    std::string entity;  // empty -> all entities (joined when more than one)
    double benign_ratio = 0.9;
    bool no_rebalance = false;
    std::uint64_t seed = 0;
};
int cmd_featurize(const FeaturizeArgs& args);

struct TrainArgs {
    std::string algo;  // knn | dt | rf | mlp
    std::string data_path;
    std::string schema_path;  // present -> flow CSV, absent -> behavioral CSV
    std::string out_model;
    int cv_folds = 0;  // 0 -> plain 90/10 fit
    std::uint64_t seed = 0;
    // classical knobs
    int knn_k = 5;
    int max_depth = -1;
    int min_samples_split = 2;
    int rf_trees = 100;
    int rf_features_per_split = 0;
    // mlp knobs
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 0.001;
    std::string optimizer = "Adam";
    double eval_split = 0.1;
};
int cmd_train(const TrainArgs& args);

struct FederateArgs {
    std::string plan_path;
    std::string shards_path;
    std::string schema_path;
    std::string out_dir;
    bool wire = false;
    int base_port = 18500;
};
int cmd_federate(const FederateArgs& args);

struct AnalyzeArgs {
    std::string mode;  // roc | pca | divergence | anova | describe
    std::string data_path;
    std::string second_path;  // divergence only
    std::string out_dir;
};
int cmd_analyze(const AnalyzeArgs& args);

struct ServeArgs {
    std::string registry_dir;
    std::string model_path;
    std::string schema_path;
    std::string bind = "127.0.0.1:8080";
    double threshold = 0.5;
    std::string latency_report;
};
int cmd_serve(const ServeArgs& args);

}  // namespace slicesec::cli
