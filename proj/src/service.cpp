#include "slicesec/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "slicesec/classical.hpp"
#include "slicesec/neuralnet.hpp"

namespace slicesec::service {

using nlohmann::json;

std::string schema_digest(const std::string& canonical_schema) {
    return "fnv1a64:" + fnv1a64_hex(canonical_schema);
}

namespace {

json record_to_json(const ModelRecord& r) {
    json j;
    j["model_id"] = r.model_id;
    j["kind"] = r.kind;
    j["version"] = r.version;
    j["weights_b64"] = base64_encode(std::span<const std::uint8_t>(r.weights.data(), r.weights.size()));
    j["schema_hash"] = r.schema_hash;
    j["created_at"] = r.created_at;
    if (!r.metrics_snapshot.is_null()) j["metrics"] = r.metrics_snapshot;
    return j;
}

ModelRecord record_from_json(const json& j) {
    ModelRecord r;
    r.model_id = j.at("model_id").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.version = j.at("version").get<int>();
    r.weights = base64_decode(j.at("weights_b64").get<std::string>());
    r.schema_hash = j.at("schema_hash").get<std::string>();
    r.created_at = j.value("created_at", std::int64_t{0});
    if (j.contains("metrics")) r.metrics_snapshot = j.at("metrics");
    return r;
}

}  // namespace

Registry::Registry(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
    std::filesystem::create_directories(data_dir_);
    load();
}

void Registry::load() {
    auto log_path = data_dir_ / "records.jsonl";
    if (!std::filesystem::exists(log_path)) return;
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ModelRecord r = record_from_json(json::parse(line));
        auto key = std::make_pair(r.model_id, r.version);
        latest_[r.model_id] = std::max(latest_[r.model_id], r.version);
        records_[key] = std::move(r);
    }
}

int Registry::put(ModelRecord record) {
    // weights must deserialize for the declared kind before anything is stored
    {
        ModelRecord probe = record;
        probe.version = 0;
        LoadedModel::from_record(probe);
    }
    std::lock_guard<std::mutex> lock(mu_);
    int version = latest_[record.model_id] + 1;
    record.version = version;
    if (record.created_at == 0)
        record.created_at = std::chrono::duration_cast<std::chrono::seconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();

    auto log_path = data_dir_ / "records.jsonl";
    {
        std::ofstream out(log_path, std::ios::app);
        if (!out) throw Error("registry: cannot append to " + log_path.string());
        out << record_to_json(record).dump() << "\n";
        out.flush();
    }
    latest_[record.model_id] = version;
    records_[{record.model_id, version}] = std::move(record);

    json index;
    for (const auto& [id, v] : latest_) index[id] = v;
    write_file_atomic(data_dir_ / "index.json", index.dump(2) + "\n");
    return version;
}

ModelRecord Registry::get(const std::string& model_id, std::optional<int> version) const {
    std::lock_guard<std::mutex> lock(mu_);
    int v;
    if (version) {
        v = *version;
    } else {
        auto it = latest_.find(model_id);
        if (it == latest_.end() || it->second == 0)
            throw NotFound("registry: no model '" + model_id + "'");
        v = it->second;
    }
    auto it = records_.find({model_id, v});
    if (it == records_.end())
        throw NotFound("registry: no model '" + model_id + "' version " + std::to_string(v));
    return it->second;
}

std::vector<ModelSummary> Registry::list() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<ModelSummary> out;
    for (const auto& [key, r] : records_)
        out.push_back({r.model_id, r.kind, r.version, r.schema_hash, r.created_at});
    return out;
}

struct LoadedModel::Impl {
    std::string kind;
    // exactly one of these is populated, per kind
    nn::MlpModel mlp;
    nn::Standardizer mlp_std;
    classical::KnnModel knn;
    std::unique_ptr<classical::TreeNode> tree;
    classical::ForestModel forest;
};

std::shared_ptr<const LoadedModel> LoadedModel::from_record(const ModelRecord& record) {
    auto model = std::make_shared<LoadedModel>();
    auto impl = std::make_shared<Impl>();
    impl->kind = record.kind;
    json doc;
    try {
        doc = json::parse(record.weights.begin(), record.weights.end());
        if (doc.at("kind") != record.kind)
            throw Error("declared kind '" + record.kind + "' but payload says '" +
                        doc.at("kind").get<std::string>() + "'");
        if (record.kind == "mlp") {
            auto [m, s] = nn::mlp_from_json(doc);
            impl->mlp = std::move(m);
            impl->mlp_std = std::move(s);
            model->input_dim_ = nn::kInputDim;
        } else if (record.kind == "knn") {
            impl->knn = classical::knn_from_json(doc);
            model->input_dim_ = impl->knn.train_features.cols;
        } else if (record.kind == "dt") {
            impl->tree = classical::dt_from_json(doc);
            model->input_dim_ = doc.at("input_dim").get<std::size_t>();
        } else if (record.kind == "rf") {
            impl->forest = classical::rf_from_json(doc);
            model->input_dim_ = doc.at("input_dim").get<std::size_t>();
        } else {
            throw Error("unknown model kind '" + record.kind + "'");
        }
    } catch (const std::exception& e) {
        throw CorruptWeights(std::string("model weights rejected: ") + e.what());
    }
    model->impl_ = std::move(impl);
    return model;
}

Prediction LoadedModel::predict(std::span<const double> features) const {
    if (impl_->kind == "mlp") {
        auto z = impl_->mlp_std.transform_row(features);
        Matrix batch(1, nn::kInputDim);
        std::copy(z.begin(), z.end(), batch.row(0).begin());
        Matrix probs = nn::forward(impl_->mlp, batch, nn::Mode::eval);
        double score = probs(0, 1);
        return {score >= 0.5 ? 1 : 0, score};
    }
    if (impl_->kind == "knn") {
        auto p = classical::knn_predict(impl_->knn, features);
        return {p.label, p.score};
    }
    if (impl_->kind == "dt") {
        auto p = classical::dt_predict(*impl_->tree, features);
        return {p.label, p.score};
    }
    auto p = classical::rf_predict(impl_->forest, features);
    return {p.label, p.score};
}

void LatencyHistogram::observe(std::int64_t micros) {
    // bucket i covers [2^(i/4) .. 2^((i+1)/4)) microseconds, roughly
    int bucket = 0;
    if (micros > 0) {
        double lg = std::log2(static_cast<double>(micros));
        bucket = std::clamp(static_cast<int>(lg * 4.0), 0, kBuckets - 1);
    }
    std::lock_guard<std::mutex> lock(mu_);
    counts_[bucket]++;
    total_++;
}

LatencySnapshot LatencyHistogram::snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    LatencySnapshot snap;
    snap.count = total_;
    if (total_ == 0) return snap;
    auto percentile = [&](double p) -> std::int64_t {
        std::uint64_t target = static_cast<std::uint64_t>(std::ceil(p * static_cast<double>(total_)));
        target = std::max<std::uint64_t>(target, 1);
        std::uint64_t seen = 0;
        for (int i = 0; i < kBuckets; ++i) {
            seen += counts_[i];
            if (seen >= target)
                return static_cast<std::int64_t>(std::ceil(std::pow(2.0, (i + 1) / 4.0)));
        }
        return 0;
    };
    snap.p50_micros = percentile(0.50);
    snap.p95_micros = percentile(0.95);
    snap.p99_micros = percentile(0.99);
    return snap;
}

json LatencyHistogram::to_json() const {
    LatencySnapshot snap = snapshot();
    json j;
    j["count"] = snap.count;
    j["p50_micros"] = snap.p50_micros;
    j["p95_micros"] = snap.p95_micros;
    j["p99_micros"] = snap.p99_micros;
    return j;
}

SecurityAgent::SecurityAgent(Registry& registry, std::string serving_schema_hash, double threshold)
    : registry_(registry), serving_schema_hash_(std::move(serving_schema_hash)),
      threshold_(threshold) {}

void SecurityAgent::activate(const std::string& model_id, int version) {
    ModelRecord record = registry_.get(model_id, version);
    if (record.schema_hash != serving_schema_hash_)
        throw SchemaMismatch("activate: model schema " + record.schema_hash +
                             " does not match serving schema " + serving_schema_hash_);
    auto entry = std::make_shared<ActiveEntry>();
    entry->model_id = record.model_id;
    entry->version = record.version;
    entry->model = LoadedModel::from_record(record);
    std::unique_lock lock(active_mu_);
    active_ = std::move(entry);
}

bool SecurityAgent::has_active() const {
    std::shared_lock lock(active_mu_);
    return active_ != nullptr;
}

PredictionResponse SecurityAgent::predict(std::span<const double> features) {
    auto start = std::chrono::steady_clock::now();
    std::shared_ptr<const ActiveEntry> entry;
    {
        std::shared_lock lock(active_mu_);
        entry = active_;
    }
    if (!entry) throw NoActiveModel("predict: no active model");
    if (features.size() != entry->model->input_dim())
        throw BadDimension("predict: got " + std::to_string(features.size()) +
                           " features, active schema wants " +
                           std::to_string(entry->model->input_dim()));
    for (double v : features)
        if (!std::isfinite(v)) throw NonFiniteFeature("predict: non-finite feature");

    Prediction p = entry->model->predict(features);
    PredictionResponse resp;
    resp.score = p.score;
    resp.label = p.score >= threshold_ ? "malignant" : "benign";
    resp.model_id = entry->model_id;
    resp.model_version = entry->version;
    resp.latency_micros = std::chrono::duration_cast<std::chrono::microseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
    histogram_.observe(resp.latency_micros);
    return resp;
}

// ---------------------------------------------------------------------------
// HTTP facade
// ---------------------------------------------------------------------------

struct HttpServer::Impl {
    SecurityAgent& agent;
    Registry& registry;
    httplib::Server server;
    std::thread background;

    Impl(SecurityAgent& a, Registry& r) : agent(a), registry(r) { routes(); }

    static json error_body(const std::string& code, const std::string& message) {
        json j;
        j["error"] = code;
        j["message"] = message;
        return j;
    }

    void routes() {
        server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"status\":\"ok\"}", "application/json");
        });

        server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(agent.metrics_json().dump(), "application/json");
        });

        server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                json body = json::parse(req.body);
                auto features = body.at("features").get<std::vector<double>>();
                PredictionResponse p = agent.predict(features);
                json j;
                j["label"] = p.label;
                j["score"] = p.score;
                j["model_id"] = p.model_id;
                j["model_version"] = p.model_version;
                j["latency_micros"] = p.latency_micros;
                res.set_content(j.dump(), "application/json");
            } catch (const NoActiveModel& e) {
                res.status = 409;
                res.set_content(error_body("NoActiveModel", e.what()).dump(), "application/json");
            } catch (const BadDimension& e) {
                res.status = 400;
                res.set_content(error_body("BadDimension", e.what()).dump(), "application/json");
            } catch (const NonFiniteFeature& e) {
                res.status = 400;
                res.set_content(error_body("NonFiniteFeature", e.what()).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(error_body("BadRequest", e.what()).dump(), "application/json");
            }
        });

        server.Put(R"(/models/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                json body = json::parse(req.body);
                ModelRecord r;
                r.model_id = req.matches[1];
                r.kind = body.at("kind").get<std::string>();
                r.weights = base64_decode(body.at("weights_b64").get<std::string>());
                r.schema_hash = body.at("schema_hash").get<std::string>();
                if (body.contains("metrics")) r.metrics_snapshot = body.at("metrics");
                int version = registry.put(std::move(r));
                json j;
                j["model_id"] = std::string(req.matches[1]);
                j["version"] = version;
                res.set_content(j.dump(), "application/json");
            } catch (const CorruptWeights& e) {
                res.status = 422;
                res.set_content(error_body("CorruptWeights", e.what()).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(error_body("BadRequest", e.what()).dump(), "application/json");
            }
        });

        server.Get("/models", [this](const httplib::Request&, httplib::Response& res) {
            json j = json::array();
            for (const auto& s : registry.list()) {
                json e;
                e["model_id"] = s.model_id;
                e["kind"] = s.kind;
                e["version"] = s.version;
                e["schema_hash"] = s.schema_hash;
                e["created_at"] = s.created_at;
                j.push_back(std::move(e));
            }
            res.set_content(j.dump(), "application/json");
        });

        server.Get(R"(/models/([^/]+)/([^/]+))",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       try {
                           std::string id = req.matches[1];
                           std::string ver = req.matches[2];
                           std::optional<int> version;
                           if (ver != "latest") version = std::stoi(ver);
                           ModelRecord r = registry.get(id, version);
                           res.set_content(record_to_json(r).dump(), "application/json");
                       } catch (const NotFound& e) {
                           res.status = 404;
                           res.set_content(error_body("NotFound", e.what()).dump(), "application/json");
                       } catch (const std::exception& e) {
                           res.status = 400;
                           res.set_content(error_body("BadRequest", e.what()).dump(), "application/json");
                       }
                   });

        server.Post(R"(/models/([^/]+)/(\d+)/activate)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        try {
                            agent.activate(req.matches[1], std::stoi(req.matches[2]));
                            res.set_content("{\"status\":\"activated\"}", "application/json");
                        } catch (const NotFound& e) {
                            res.status = 404;
                            res.set_content(error_body("NotFound", e.what()).dump(),
                                            "application/json");
                        } catch (const SchemaMismatch& e) {
                            res.status = 409;
                            res.set_content(error_body("SchemaMismatch", e.what()).dump(),
                                            "application/json");
                        } catch (const std::exception& e) {
                            res.status = 400;
                            res.set_content(error_body("BadRequest", e.what()).dump(),
                                            "application/json");
                        }
                    });
    }
};

HttpServer::HttpServer(SecurityAgent& agent, Registry& registry)
    : impl_(std::make_unique<Impl>(agent, registry)) {}

HttpServer::~HttpServer() { stop(); }

void HttpServer::enable_request_log() {
    impl_->server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        json line;
        line["method"] = req.method;
        line["path"] = req.path;
        line["status"] = res.status;
        std::fprintf(stderr, "%s\n", line.dump().c_str());
    });
}

bool HttpServer::serve(const std::string& host, int port) {
    return impl_->server.listen(host, port);
}

int HttpServer::serve_background(const std::string& host) {
    int port = impl_->server.bind_to_any_port(host);
    if (port < 0) return -1;
    impl_->background = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void HttpServer::stop() {
    impl_->server.stop();
    if (impl_->background.joinable()) impl_->background.join();
}

}  // namespace slicesec::service
