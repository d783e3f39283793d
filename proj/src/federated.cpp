#include "slicesec/federated.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include <httplib.h>

#include "slicesec/analytics.hpp"

namespace slicesec::fl {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string aggregation_to_string(Aggregation mode) {
    return mode == Aggregation::uniform ? "uniform" : "sample_weighted";
}

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "uniform") return Aggregation::uniform;
    if (s == "sample_weighted") return Aggregation::sample_weighted;
    throw Error("unknown aggregation mode '" + s + "'");
}

}  // namespace

FlPlan FlPlan::from_json(const json& j) {
    FlPlan p;
    p.rounds = j.at("rounds").get<int>();
    p.aggregation = aggregation_from_string(j.value("aggregation", std::string("uniform")));
    p.eval_split = j.value("eval_split", 0.1);
    p.seed = j.value("seed", std::uint64_t{0});
    p.batch_size = j.value("batch_size", 32);
    for (const auto& c : j.at("clients")) {
        ClientConfig cc;
        cc.client_id = c.at("client_id").get<int>();
        cc.learning_rate = c.at("learning_rate").get<double>();
        cc.optimizer = nn::optimizer_from_string(c.at("optimizer").get<std::string>());
        cc.epochs = c.at("epochs").get<int>();
        cc.shard_id = c.value("shard_id", cc.client_id);
        p.clients.push_back(cc);
    }
    if (p.rounds < 1) throw Error("plan: rounds must be >= 1");
    if (p.clients.empty()) throw Error("plan: clients must be non-empty");
    if (!(p.eval_split > 0.0 && p.eval_split < 1.0)) throw Error("plan: eval_split must be in (0,1)");
    for (const auto& c : p.clients) {
        if (!(c.learning_rate > 0.0)) throw Error("plan: learning_rate must be positive");
        if (c.epochs < 1) throw Error("plan: epochs must be >= 1");
    }
    return p;
}

FlPlan FlPlan::from_json_file(const std::filesystem::path& path) {
    return from_json(json::parse(read_file(path)));
}

json FlPlan::to_json() const {
    json j;
    j["rounds"] = rounds;
    j["aggregation"] = aggregation_to_string(aggregation);
    j["eval_split"] = eval_split;
    j["seed"] = seed;
    j["batch_size"] = batch_size;
    j["clients"] = json::array();
    for (const auto& c : clients) {
        json cc;
        cc["client_id"] = c.client_id;
        cc["learning_rate"] = c.learning_rate;
        cc["optimizer"] = nn::optimizer_to_string(c.optimizer);
        cc["epochs"] = c.epochs;
        cc["shard_id"] = c.shard_id;
        j["clients"].push_back(cc);
    }
    return j;
}

void AuditLog::record(const std::string& direction, const std::string& payload) {
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back(direction + ":" + payload);
}

std::vector<std::string> AuditLog::entries() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
}

json ClientUpdate::to_json(int round) const {
    json j;
    j["type"] = "update";
    j["client_id"] = client_id;
    j["round"] = round;
    j["weights"] = base64_encode(nn::flat_to_bytes(weights));
    j["metrics"]["final_loss"] = final_loss;
    j["metrics"]["eval_accuracy"] = eval_accuracy;
    j["metrics"]["train_time_s"] = train_time_s;
    j["metrics"]["sample_count"] = sample_count;
    j["metrics"]["std_mean"] = std_mean;
    j["metrics"]["std_stddev"] = std_stddev;
    return j;
}

ClientUpdate ClientUpdate::from_json(const json& j) {
    if (j.at("type") != "update") throw Error("expected update message");
    ClientUpdate u;
    u.client_id = j.at("client_id").get<int>();
    u.weights = nn::flat_from_bytes(base64_decode(j.at("weights").get<std::string>()));
    const auto& m = j.at("metrics");
    u.final_loss = m.at("final_loss").get<double>();
    u.eval_accuracy = m.at("eval_accuracy").get<double>();
    u.train_time_s = m.at("train_time_s").get<double>();
    u.sample_count = m.at("sample_count").get<std::uint64_t>();
    u.std_mean = m.at("std_mean").get<std::vector<double>>();
    u.std_stddev = m.at("std_stddev").get<std::vector<double>>();
    return u;
}

SplitIndices stratified_split(const std::vector<int>& labels, double eval_fraction,
                              std::uint64_t seed) {
    SplitIndices out;
    std::vector<std::size_t> class_rows[2];
    for (std::size_t r = 0; r < labels.size(); ++r)
        class_rows[labels[r] != 0 ? 1 : 0].push_back(r);
    for (int cls = 0; cls < 2; ++cls) {
        auto& rows = class_rows[cls];
        if (rows.empty()) continue;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cls) + 11));
        rng.shuffle(rows);
        auto want = static_cast<std::size_t>(
            std::llround(static_cast<double>(rows.size()) * eval_fraction));
        want = std::min(want, rows.size() - 1);  // keep at least one training row per class
        out.eval.insert(out.eval.end(), rows.begin(), rows.begin() + static_cast<long>(want));
        out.train.insert(out.train.end(), rows.begin() + static_cast<long>(want), rows.end());
    }
    if (out.eval.empty() && out.train.size() > 1) {
        out.eval.push_back(out.train.back());
        out.train.pop_back();
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.eval.begin(), out.eval.end());
    return out;
}

namespace {

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), src.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(src.row(rows[i]).begin(), src.row(rows[i]).end(), out.row(i).begin());
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& src, const std::vector<std::size_t>& rows) {
    std::vector<int> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = src[rows[i]];
    return out;
}

class LocalClient : public ClientEndpoint {
public:
    LocalClient(const ClientConfig& config, const ShardData& shard, const FlPlan& plan)
        : config_(config), plan_seed_(plan.seed), batch_size_(plan.batch_size) {
        if (shard.features.rows == 0)
            throw ClientFailure("client " + std::to_string(config.client_id) + ": empty shard");
        auto split = stratified_split(shard.labels, plan.eval_split,
                                      derive_seed(plan.seed, 0x517 + static_cast<std::uint64_t>(config.client_id)));
        Matrix train_raw = gather_rows(shard.features, split.train);
        standardizer_ = nn::Standardizer::fit(train_raw);
        train_x_ = standardizer_.transform(train_raw);
        train_y_ = gather_labels(shard.labels, split.train);
        eval_x_ = standardizer_.transform(gather_rows(shard.features, split.eval));
        eval_y_ = gather_labels(shard.labels, split.eval);
    }

    int client_id() const override { return config_.client_id; }

    ClientUpdate run_round(const nn::FlatWeights& global, int round) override {
        auto start = Clock::now();
        nn::MlpModel model = nn::unflatten(global);
        nn::TrainConfig tc;
        tc.epochs = config_.epochs;
        tc.batch_size = batch_size_;
        tc.seed = derive_seed(derive_seed(plan_seed_, static_cast<std::uint64_t>(config_.client_id)),
                              static_cast<std::uint64_t>(round));
        auto opt = nn::make_optimizer(config_.optimizer, config_.learning_rate);
        nn::TrainHistory history = nn::train(model, train_x_, train_y_, tc, opt);

        ClientUpdate u;
        u.client_id = config_.client_id;
        u.weights = nn::flatten(model);
        u.final_loss = history.epochs.back().loss;
        u.eval_accuracy = eval_y_.empty() ? 0.0 : nn::evaluate_accuracy(model, eval_x_, eval_y_);
        u.sample_count = train_y_.size();
        u.std_mean = standardizer_.mean;
        u.std_stddev = standardizer_.stddev;
        u.train_time_s = seconds_since(start);
        return u;
    }

    double evaluate(const nn::FlatWeights& global) override {
        if (eval_y_.empty()) return 0.0;
        return nn::evaluate_accuracy(nn::unflatten(global), eval_x_, eval_y_);
    }

private:
    ClientConfig config_;
    std::uint64_t plan_seed_;
    int batch_size_;
    nn::Standardizer standardizer_;
    Matrix train_x_, eval_x_;
    std::vector<int> train_y_, eval_y_;
};

// pairwise (tree) reduction over vectors; dst accumulates in place
std::vector<double> pairwise_sum(std::vector<std::vector<double>> vectors) {
    while (vectors.size() > 1) {
        std::size_t half = (vectors.size() + 1) / 2;
        for (std::size_t i = 0; i + half < vectors.size(); ++i) {
            auto& a = vectors[i];
            const auto& b = vectors[i + half];
            for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
        }
        vectors.resize(half);
    }
    return std::move(vectors.front());
}

}  // namespace

std::unique_ptr<ClientEndpoint> make_local_client(const ClientConfig& config,
                                                  const ShardData& shard, const FlPlan& plan) {
    return std::make_unique<LocalClient>(config, shard, plan);
}

nn::FlatWeights aggregate(const std::vector<nn::FlatWeights>& updates, Aggregation mode,
                          const std::vector<std::uint64_t>* counts) {
    if (updates.empty()) throw EmptyUpdates("aggregate: no updates");
    std::size_t len = updates.front().values.size();
    for (const auto& u : updates)
        if (u.values.size() != len) throw LengthMismatch("aggregate: update length mismatch");

    std::vector<std::vector<double>> terms;
    terms.reserve(updates.size());
    if (mode == Aggregation::uniform) {
        for (const auto& u : updates) terms.push_back(u.values);
        auto sum = pairwise_sum(std::move(terms));
        double inv = 1.0 / static_cast<double>(updates.size());
        for (auto& x : sum) x *= inv;
        return {std::move(sum)};
    }
    if (counts == nullptr || counts->size() != updates.size())
        throw Error("aggregate: sample_weighted requires per-update counts");
    double total = 0.0;
    for (auto c : *counts) total += static_cast<double>(c);
    if (total <= 0.0) throw Error("aggregate: sample counts sum to zero");
    for (std::size_t i = 0; i < updates.size(); ++i) {
        std::vector<double> scaled = updates[i].values;
        double w = static_cast<double>((*counts)[i]) / total;
        for (auto& x : scaled) x *= w;
        terms.push_back(std::move(scaled));
    }
    return {pairwise_sum(std::move(terms))};
}

RoundOutcome run_round(const nn::FlatWeights& global, const FlPlan& plan,
                       const std::vector<std::unique_ptr<ClientEndpoint>>& clients,
                       int round_index, AuditLog* audit) {
    if (clients.empty()) throw Error("run_round: no clients");

    std::vector<ClientUpdate> updates(clients.size());
    std::vector<std::string> failures(clients.size());
    {
        std::vector<std::thread> workers;
        workers.reserve(clients.size());
        for (std::size_t i = 0; i < clients.size(); ++i) {
            workers.emplace_back([&, i] {
                try {
                    if (audit) audit->record("to_client", "weights");
                    updates[i] = clients[i]->run_round(global, round_index);
                    if (audit) {
                        audit->record("to_server", "weights");
                        audit->record("to_server", "metrics");
                    }
                } catch (const std::exception& e) {
                    failures[i] = e.what();
                }
            });
        }
        for (auto& w : workers) w.join();  // aggregation barrier
    }
    for (std::size_t i = 0; i < clients.size(); ++i)
        if (!failures[i].empty())
            throw ClientFailure("round " + std::to_string(round_index) + ", client " +
                                std::to_string(clients[i]->client_id()) + ": " + failures[i]);

    RoundOutcome out;
    out.report.round = round_index;
    for (const auto& u : updates) {
        ClientRoundStats s;
        s.client_id = u.client_id;
        s.final_loss = u.final_loss;
        s.eval_accuracy = u.eval_accuracy;
        s.train_time_s = u.train_time_s;
        // divergence is taken against the pre-aggregation global
        s.divergence = analytics::cosine_divergence(u.weights.values, global.values);
        out.report.per_client.push_back(s);
    }

    auto agg_start = Clock::now();
    std::vector<nn::FlatWeights> weight_list;
    std::vector<std::uint64_t> counts;
    for (auto& u : updates) {
        weight_list.push_back(std::move(u.weights));
        counts.push_back(u.sample_count);
        out.std_means.push_back(std::move(u.std_mean));
        out.std_stddevs.push_back(std::move(u.std_stddev));
    }
    out.global = aggregate(weight_list, plan.aggregation,
                           plan.aggregation == Aggregation::sample_weighted ? &counts : nullptr);
    out.report.aggregate_time_s = seconds_since(agg_start);

    std::vector<double> accs(clients.size(), 0.0);
    {
        std::vector<std::thread> workers;
        for (std::size_t i = 0; i < clients.size(); ++i) {
            workers.emplace_back([&, i] {
                try {
                    if (audit) audit->record("to_client", "weights");
                    accs[i] = clients[i]->evaluate(out.global);
                    if (audit) audit->record("to_server", "metrics");
                } catch (const std::exception& e) {
                    failures[i] = e.what();
                }
            });
        }
        for (auto& w : workers) w.join();
    }
    for (std::size_t i = 0; i < clients.size(); ++i)
        if (!failures[i].empty())
            throw ClientFailure("round " + std::to_string(round_index) + " eval, client " +
                                std::to_string(clients[i]->client_id()) + ": " + failures[i]);
    out.report.global_accuracy =
        std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
    return out;
}

ExperimentResult run_experiment(const FlPlan& plan,
                                const std::vector<std::unique_ptr<ClientEndpoint>>& clients,
                                AuditLog* audit) {
    auto start = Clock::now();
    ExperimentResult result;
    nn::FlatWeights global = nn::flatten(nn::init_model(derive_seed(plan.seed, 0x91071)));
    for (int round = 1; round <= plan.rounds; ++round) {
        RoundOutcome outcome = run_round(global, plan, clients, round, audit);
        global = std::move(outcome.global);
        result.rounds.push_back(std::move(outcome.report));
        if (round == 1) {
            // pooled preprocessing statistics: uniform mean of client standardizers
            nn::Standardizer pooled;
            std::size_t dim = outcome.std_means.empty() ? 0 : outcome.std_means.front().size();
            pooled.mean.assign(dim, 0.0);
            pooled.stddev.assign(dim, 0.0);
            double inv = 1.0 / static_cast<double>(outcome.std_means.size());
            for (std::size_t i = 0; i < outcome.std_means.size(); ++i) {
                for (std::size_t c = 0; c < dim; ++c) {
                    pooled.mean[c] += outcome.std_means[i][c] * inv;
                    pooled.stddev[c] += outcome.std_stddevs[i][c] * inv;
                }
            }
            result.pooled_standardizer = std::move(pooled);
        }
    }
    result.final_weights = std::move(global);
    result.total_time_s = seconds_since(start);
    return result;
}

ExperimentResult run_experiment(const FlPlan& plan, const ShardMap& shards, AuditLog* audit) {
    std::vector<std::unique_ptr<ClientEndpoint>> clients;
    for (const auto& c : plan.clients) {
        auto it = shards.find(c.shard_id);
        if (it == shards.end())
            throw Error("run_experiment: no shard " + std::to_string(c.shard_id) + " for client " +
                        std::to_string(c.client_id));
        clients.push_back(make_local_client(c, it->second, plan));
    }
    return run_experiment(plan, clients, audit);
}

json experiment_record_json(const FlPlan& plan, const ExperimentResult& result,
                            const std::string& final_weights_ref) {
    json j;
    j["plan"] = plan.to_json();
    j["rounds"] = json::array();
    for (const auto& r : result.rounds) {
        json jr;
        jr["round"] = r.round;
        jr["global_accuracy"] = r.global_accuracy;
        jr["per_client"] = json::array();
        for (const auto& c : r.per_client) {
            json jc;
            jc["client_id"] = c.client_id;
            jc["final_loss"] = c.final_loss;
            jc["eval_accuracy"] = c.eval_accuracy;
            jc["divergence"] = c.divergence;
            jr["per_client"].push_back(std::move(jc));
        }
        j["rounds"].push_back(std::move(jr));
    }
    j["final_weights_ref"] = final_weights_ref;
    auto bytes = nn::flat_to_bytes(result.final_weights);
    j["final_weights_digest"] = fnv1a64_hex(std::span<const std::uint8_t>(bytes.data(), bytes.size()));
    return j;
}

json experiment_timings_json(const ExperimentResult& result) {
    json j;
    j["rounds"] = json::array();
    for (const auto& r : result.rounds) {
        json jr;
        jr["round"] = r.round;
        jr["aggregate_time_s"] = r.aggregate_time_s;
        jr["per_client"] = json::array();
        for (const auto& c : r.per_client) {
            json jc;
            jc["client_id"] = c.client_id;
            jc["train_time_s"] = c.train_time_s;
            jr["per_client"].push_back(std::move(jc));
        }
        j["rounds"].push_back(std::move(jr));
    }
    j["total_s"] = result.total_time_s;
    return j;
}

CentralizedResult centralized_train(const ShardMap& shards, const CentralizedConfig& config) {
    std::size_t total_rows = 0;
    for (const auto& [id, shard] : shards) total_rows += shard.features.rows;
    if (total_rows == 0) throw Error("centralized_train: empty pool");

    Matrix pooled(total_rows, nn::kInputDim);
    std::vector<int> labels;
    labels.reserve(total_rows);
    std::size_t r = 0;
    for (const auto& [id, shard] : shards) {
        if (shard.features.cols != nn::kInputDim)
            throw Error("centralized_train: shard " + std::to_string(id) + " has " +
                        std::to_string(shard.features.cols) + " columns");
        for (std::size_t i = 0; i < shard.features.rows; ++i, ++r)
            std::copy(shard.features.row(i).begin(), shard.features.row(i).end(), pooled.row(r).begin());
        labels.insert(labels.end(), shard.labels.begin(), shard.labels.end());
    }

    auto start = Clock::now();
    auto split = stratified_split(labels, config.eval_split, derive_seed(config.seed, 0xce47));
    Matrix train_raw = gather_rows(pooled, split.train);
    CentralizedResult result;
    result.standardizer = nn::Standardizer::fit(train_raw);
    Matrix train_x = result.standardizer.transform(train_raw);
    std::vector<int> train_y = gather_labels(labels, split.train);

    result.model = nn::init_model(derive_seed(config.seed, 0x91071));
    nn::TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.seed = derive_seed(config.seed, 0x7e41);
    auto opt = nn::make_optimizer(config.optimizer, config.learning_rate);
    result.history = nn::train(result.model, train_x, train_y, tc, opt);
    result.train_time_s = seconds_since(start);

    Matrix eval_x = result.standardizer.transform(gather_rows(pooled, split.eval));
    std::vector<int> eval_y = gather_labels(labels, split.eval);
    result.eval_accuracy = eval_y.empty() ? 0.0 : nn::evaluate_accuracy(result.model, eval_x, eval_y);
    return result;
}

// ---------------------------------------------------------------------------
// wire mode
// ---------------------------------------------------------------------------

namespace {

// hosts one local client behind HTTP; speaks the broadcast/update protocol
class ClientServer {
public:
    ClientServer(std::unique_ptr<ClientEndpoint> client, int port)
        : client_(std::move(client)), port_(port) {
        server_.Post("/fl/round", [this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body);
            if (body.at("type") != "broadcast") {
                res.status = 400;
                return;
            }
            int round = body.at("round").get<int>();
            auto weights = nn::flat_from_bytes(base64_decode(body.at("weights").get<std::string>()));
            ClientUpdate u = client_->run_round(weights, round);
            res.set_content(u.to_json(round).dump(), "application/json");
        });
        server_.Post("/fl/eval", [this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body);
            auto weights = nn::flat_from_bytes(base64_decode(body.at("weights").get<std::string>()));
            json reply;
            reply["type"] = "metrics";
            reply["client_id"] = client_->client_id();
            reply["accuracy"] = client_->evaluate(weights);
            res.set_content(reply.dump(), "application/json");
        });
        thread_ = std::thread([this] { server_.listen("127.0.0.1", port_); });
        server_.wait_until_ready();
    }

    ~ClientServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }

private:
    std::unique_ptr<ClientEndpoint> client_;
    int port_;
    httplib::Server server_;
    std::thread thread_;
};

class HttpClientEndpoint : public ClientEndpoint {
public:
    HttpClientEndpoint(int client_id, int port, AuditLog* audit)
        : client_id_(client_id), port_(port), audit_(audit) {}

    int client_id() const override { return client_id_; }

    ClientUpdate run_round(const nn::FlatWeights& global, int round) override {
        httplib::Client http("127.0.0.1", port_);
        http.set_read_timeout(600, 0);
        json broadcast;
        broadcast["type"] = "broadcast";
        broadcast["round"] = round;
        broadcast["weights"] = base64_encode(nn::flat_to_bytes(global));
        auto res = http.Post("/fl/round", broadcast.dump(), "application/json");
        if (!res || res->status != 200)
            throw ClientFailure("wire client " + std::to_string(client_id_) + ": round call failed");
        json reply = json::parse(res->body);
        // payload keys observed on the wire, for boundary auditing
        if (audit_) {
            for (const auto& [key, value] : reply.items()) audit_->record("wire_to_server", key);
        }
        return ClientUpdate::from_json(reply);
    }

    double evaluate(const nn::FlatWeights& global) override {
        httplib::Client http("127.0.0.1", port_);
        http.set_read_timeout(600, 0);
        json msg;
        msg["type"] = "broadcast";
        msg["round"] = -1;
        msg["weights"] = base64_encode(nn::flat_to_bytes(global));
        auto res = http.Post("/fl/eval", msg.dump(), "application/json");
        if (!res || res->status != 200)
            throw ClientFailure("wire client " + std::to_string(client_id_) + ": eval call failed");
        json reply = json::parse(res->body);
        if (audit_) {
            for (const auto& [key, value] : reply.items()) audit_->record("wire_to_server", key);
        }
        return reply.at("accuracy").get<double>();
    }

private:
    int client_id_;
    int port_;
    AuditLog* audit_;
};

}  // namespace

ExperimentResult run_experiment_wire(const FlPlan& plan, const ShardMap& shards, int base_port,
                                     AuditLog* audit) {
    std::vector<std::unique_ptr<ClientServer>> servers;
    std::vector<std::unique_ptr<ClientEndpoint>> endpoints;
    int port = base_port;
    for (const auto& c : plan.clients) {
        auto it = shards.find(c.shard_id);
        if (it == shards.end())
            throw Error("run_experiment_wire: no shard " + std::to_string(c.shard_id));
        servers.push_back(std::make_unique<ClientServer>(make_local_client(c, it->second, plan), port));
        endpoints.push_back(std::make_unique<HttpClientEndpoint>(c.client_id, port, audit));
        ++port;
    }
    return run_experiment(plan, endpoints, audit);
}

}  // namespace slicesec::fl
