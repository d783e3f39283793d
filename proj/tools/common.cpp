#include <chrono>

#include "cli_util.hpp"

namespace slicesec::cli {

using nlohmann::json;

namespace {

std::int64_t now_epoch_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

RunManifest begin_manifest(const std::string& command, const std::string& config_text,
                           std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.config_digest = "fnv1a64:" + fnv1a64_hex(config_text);
    m.seed = seed;
    m.started_at = now_epoch_seconds();
    return m;
}

void RunManifest::add_input(const std::filesystem::path& path) {
    input_digests.emplace_back(path.string(), "fnv1a64:" + file_digest(path));
}

void RunManifest::add_output(const std::filesystem::path& path) {
    output_paths.push_back(path.string());
}

void RunManifest::write(const std::filesystem::path& dir) const {
    json j;
    j["command"] = command;
    j["config_digest"] = config_digest;
    j["seed"] = seed;
    j["tool_version"] = kToolVersion;
    j["started_at"] = started_at;
    j["finished_at"] = now_epoch_seconds();
    j["inputs"] = json::array();
    for (const auto& [path, digest] : input_digests) {
        json e;
        e["path"] = path;
        e["digest"] = digest;
        j["inputs"].push_back(std::move(e));
    }
    j["outputs"] = output_paths;
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "run_manifest.json", j.dump(2) + "\n");
}

LoadedTrainingData load_training_data(const std::string& data_path,
                                      const std::string& schema_path) {
    LoadedTrainingData out;
    if (!std::filesystem::exists(data_path)) throw DataError("no such file: " + data_path);
    if (!schema_path.empty()) {
        require_exists(schema_path);
        ingest::FlowSchema schema;
        try {
            schema = ingest::FlowSchema::from_json_file(schema_path);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(schema_path + ": " + e.what());
        }
        ingest::ParsedFlows parsed;
        try {
            parsed = ingest::parse_flow_csv(data_path, schema);
        } catch (const ingest::MissingColumn& e) {
            throw FormatError(e.what());
        } catch (const ingest::BadLabel& e) {
            throw FormatError(e.what());
        } catch (const Error& e) {
            throw FormatError(std::string(data_path) + ": " + e.what());
        }
        if (parsed.records.empty()) throw DataError(data_path + ": no valid rows");
        out.features = Matrix(parsed.records.size(), parsed.records.front().features.size());
        out.labels.reserve(parsed.records.size());
        for (std::size_t r = 0; r < parsed.records.size(); ++r) {
            const auto& rec = parsed.records[r];
            std::copy(rec.features.begin(), rec.features.end(), out.features.row(r).begin());
            out.labels.push_back(rec.label);
        }
        out.schema_hash = service::schema_digest(schema.to_json_string());
        return out;
    }

    ingest::BehavioralDataset ds;
    try {
        ds = ingest::read_behavioral_csv(data_path);
    } catch (const Error& e) {
        throw FormatError(std::string(data_path) + ": " + e.what());
    }
    if (!ds.labeled) throw DataError(data_path + ": dataset has no label column");
    if (ds.matrix.rows == 0) throw DataError(data_path + ": no rows");
    out.features = std::move(ds.matrix);
    out.labels = std::move(ds.labels);
    out.schema_hash = behavioral_schema_hash(ds.columns);
    return out;
}

std::string behavioral_schema_hash(const std::vector<std::string>& columns) {
    std::string canonical = "behavioral:";
    for (const auto& c : columns) {
        canonical += c;
        canonical += ',';
    }
    return service::schema_digest(canonical);
}

}  // namespace slicesec::cli
