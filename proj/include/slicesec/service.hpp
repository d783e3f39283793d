#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicesec/util.hpp"

namespace slicesec::service {

struct NotFound : Error {
    using Error::Error;
};
struct CorruptWeights : Error {
    using Error::Error;
};
struct SchemaMismatch : Error {
    using Error::Error;
};
struct NoActiveModel : Error {
    using Error::Error;
};
struct BadDimension : Error {
    using Error::Error;
};
struct NonFiniteFeature : Error {
    using Error::Error;
};

// digest binding a model to the feature manifest it was trained against
std::string schema_digest(const std::string& canonical_schema);

struct ModelRecord {
    std::string model_id;
    std::string kind;  // mlp | knn | dt | rf
    int version = 0;   // assigned by the registry on put
    std::vector<std::uint8_t> weights;  // serialized model document
    std::string schema_hash;
    std::int64_t created_at = 0;  // epoch seconds
    nlohmann::json metrics_snapshot;  // optional, null when absent
};

struct ModelSummary {
    std::string model_id;
    std::string kind;
    int version = 0;
    std::string schema_hash;
    std::int64_t created_at = 0;
};

// Append-only model pool: every record goes to records.jsonl, the derived
// index.json is rewritten after each put. Records are immutable; versions
// auto-increment per model_id.
class Registry {
public:
    explicit Registry(std::filesystem::path data_dir);

    int put(ModelRecord record);  // returns the assigned version
    ModelRecord get(const std::string& model_id, std::optional<int> version = std::nullopt) const;
    std::vector<ModelSummary> list() const;

private:
    void load();
    std::filesystem::path data_dir_;
    mutable std::mutex mu_;
    std::map<std::pair<std::string, int>, ModelRecord> records_;
    std::map<std::string, int> latest_;
};

struct Prediction {
    int label = 0;
    double score = 0.0;
};

// deserialized model of any kind, ready for eval-mode inference
class LoadedModel {
public:
    static std::shared_ptr<const LoadedModel> from_record(const ModelRecord& record);
    Prediction predict(std::span<const double> features) const;
    std::size_t input_dim() const { return input_dim_; }

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    std::size_t input_dim_ = 0;
};

struct PredictionResponse {
    std::string label;  // "benign" | "malignant"
    double score = 0.0;
    std::string model_id;
    int model_version = 0;
    std::int64_t latency_micros = 0;
};

struct LatencySnapshot {
    std::uint64_t count = 0;
    std::int64_t p50_micros = 0;
    std::int64_t p95_micros = 0;
    std::int64_t p99_micros = 0;
};

// rolling log-bucket histogram of server-side handling latencies
class LatencyHistogram {
public:
    void observe(std::int64_t micros);
    LatencySnapshot snapshot() const;
    nlohmann::json to_json() const;

private:
    static constexpr int kBuckets = 64;
    mutable std::mutex mu_;
    std::uint64_t counts_[kBuckets] = {};
    std::uint64_t total_ = 0;
};

// The serving core: holds the active model behind an atomic swap and routes
// predictions through it. Thread-safe.
class SecurityAgent {
public:
    SecurityAgent(Registry& registry, std::string serving_schema_hash, double threshold = 0.5);

    // swap is atomic: in-flight predictions finish on the model they started with
    void activate(const std::string& model_id, int version);
    PredictionResponse predict(std::span<const double> features);
    LatencySnapshot latency() const { return histogram_.snapshot(); }
    nlohmann::json metrics_json() const { return histogram_.to_json(); }
    bool has_active() const;

private:
    struct ActiveEntry {
        std::string model_id;
        int version = 0;
        std::shared_ptr<const LoadedModel> model;
    };
    Registry& registry_;
    std::string serving_schema_hash_;
    double threshold_;
    mutable std::shared_mutex active_mu_;
    std::shared_ptr<const ActiveEntry> active_;
    LatencyHistogram histogram_;
};

// HTTP facade: POST /predict, PUT /models/{id}, GET /models,
// GET /models/{id}/{version|latest}, POST /models/{id}/{version}/activate,
// GET /healthz, GET /metrics.
class HttpServer {
public:
    HttpServer(SecurityAgent& agent, Registry& registry);
    ~HttpServer();

    // one line per request on stderr: {"method":..,"path":..,"status":..}
    void enable_request_log();
    // blocks until stop(); returns false if the bind failed
    bool serve(const std::string& host, int port);
    // binds to an ephemeral port and serves in the background; returns the port
    int serve_background(const std::string& host);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace slicesec::service
