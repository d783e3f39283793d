#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicesec/matrix.hpp"
#include "slicesec/neuralnet.hpp"
#include "slicesec/util.hpp"

namespace slicesec::fl {

struct EmptyUpdates : Error {
    using Error::Error;
};
struct LengthMismatch : Error {
    using Error::Error;
};
struct ClientFailure : Error {
    using Error::Error;
};

struct ClientConfig {
    int client_id = 0;
    double learning_rate = 0.001;
    nn::OptimizerKind optimizer = nn::OptimizerKind::sgd;
    int epochs = 10;
    int shard_id = 0;
};

enum class Aggregation { uniform, sample_weighted };

struct FlPlan {
    int rounds = 2;
    std::vector<ClientConfig> clients;
    Aggregation aggregation = Aggregation::uniform;
    double eval_split = 0.1;
    std::uint64_t seed = 0;
    int batch_size = 32;

    static FlPlan from_json(const nlohmann::json& j);
    static FlPlan from_json_file(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

struct ShardData {
    Matrix features;  // raw, n x 78
    std::vector<int> labels;
};

using ShardMap = std::map<int, ShardData>;

// Records every payload that crosses the client/server boundary so tests can
// assert nothing but weights and metrics ever travels.
class AuditLog {
public:
    void record(const std::string& direction, const std::string& payload);
    std::vector<std::string> entries() const;

private:
    mutable std::mutex mu_;
    std::vector<std::string> log_;
};

// everything one client reports back after local training
struct ClientUpdate {
    int client_id = 0;
    nn::FlatWeights weights;
    double final_loss = 0.0;
    double eval_accuracy = 0.0;
    double train_time_s = 0.0;
    std::uint64_t sample_count = 0;          // training rows backing the update
    std::vector<double> std_mean, std_stddev;  // client preprocessing statistics

    nlohmann::json to_json(int round) const;
    static ClientUpdate from_json(const nlohmann::json& j);
};

class ClientEndpoint {
public:
    virtual ~ClientEndpoint() = default;
    virtual int client_id() const = 0;
    virtual ClientUpdate run_round(const nn::FlatWeights& global, int round) = 0;
    virtual double evaluate(const nn::FlatWeights& global) = 0;
};

// local simulation client: owns its shard split, trains in-process
std::unique_ptr<ClientEndpoint> make_local_client(const ClientConfig& config,
                                                  const ShardData& shard, const FlPlan& plan);

struct ClientRoundStats {
    int client_id = 0;
    double final_loss = 0.0;
    double eval_accuracy = 0.0;
    double divergence = 0.0;  // against the pre-round global
    double train_time_s = 0.0;
};

struct RoundReport {
    int round = 0;  // 1-based
    std::vector<ClientRoundStats> per_client;
    double global_accuracy = 0.0;
    double aggregate_time_s = 0.0;
};

// Coordinate-wise mean (uniform) or sample-count weighted mean; 64-bit
// pairwise tree reduction for reproducible summation.
nn::FlatWeights aggregate(const std::vector<nn::FlatWeights>& updates, Aggregation mode,
                          const std::vector<std::uint64_t>* counts = nullptr);

struct RoundOutcome {
    nn::FlatWeights global;
    RoundReport report;
    // client preprocessing statistics reported with the updates, in client order
    std::vector<std::vector<double>> std_means;
    std::vector<std::vector<double>> std_stddevs;
};

// One federated round: broadcast, train all clients concurrently, barrier,
// divergence bookkeeping, aggregate, evaluate the aggregate on every client.
RoundOutcome run_round(const nn::FlatWeights& global, const FlPlan& plan,
                       const std::vector<std::unique_ptr<ClientEndpoint>>& clients,
                       int round_index, AuditLog* audit = nullptr);

struct ExperimentResult {
    std::vector<RoundReport> rounds;
    nn::FlatWeights final_weights;
    nn::Standardizer pooled_standardizer;  // uniform mean of client statistics
    double total_time_s = 0.0;
};

ExperimentResult run_experiment(const FlPlan& plan, const ShardMap& shards,
                                AuditLog* audit = nullptr);
// same loop over caller-supplied endpoints (wire mode uses HTTP endpoints)
ExperimentResult run_experiment(const FlPlan& plan,
                                const std::vector<std::unique_ptr<ClientEndpoint>>& clients,
                                AuditLog* audit = nullptr);

// deterministic record (no wall-clock content) and the timing sidecar
nlohmann::json experiment_record_json(const FlPlan& plan, const ExperimentResult& result,
                                      const std::string& final_weights_ref);
nlohmann::json experiment_timings_json(const ExperimentResult& result);

struct CentralizedConfig {
    double learning_rate = 0.001;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    int epochs = 10;
    int batch_size = 32;
    double eval_split = 0.1;
    std::uint64_t seed = 0;
};

struct CentralizedResult {
    nn::MlpModel model;
    nn::Standardizer standardizer;
    nn::TrainHistory history;
    double eval_accuracy = 0.0;
    double train_time_s = 0.0;
};

// pools every shard into one dataset and trains a single model on it
CentralizedResult centralized_train(const ShardMap& shards, const CentralizedConfig& config);

// Wire mode: hosts each client behind an HTTP endpoint on 127.0.0.1 and runs
// the experiment over {broadcast, update, metrics} JSON messages.
ExperimentResult run_experiment_wire(const FlPlan& plan, const ShardMap& shards, int base_port,
                                     AuditLog* audit = nullptr);

// stratified train/eval split used by clients and centralized training
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};
SplitIndices stratified_split(const std::vector<int>& labels, double eval_fraction,
                              std::uint64_t seed);

}  // namespace slicesec::fl
