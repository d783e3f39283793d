#pragma once

// helpers shared by the CLI commands only

#include <filesystem>
#include <string>

#include <json.hpp>

#include "commands.hpp"
#include "slicesec/ingest.hpp"
#include "slicesec/matrix.hpp"
#include "slicesec/service.hpp"

namespace slicesec::cli {

struct LoadedTrainingData {
    Matrix features;
    std::vector<int> labels;
    std::string schema_hash;
};

// --schema present: flow CSV through the schema manifest; otherwise a labeled
// behavioral CSV. Throws DataError / FormatError with file context.
LoadedTrainingData load_training_data(const std::string& data_path, const std::string& schema_path);

std::string behavioral_schema_hash(const std::vector<std::string>& columns);

inline void require_exists(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline std::filesystem::path manifest_dir_for(const std::filesystem::path& out) {
    if (std::filesystem::is_directory(out) || out.extension().empty()) return out;
    auto parent = out.parent_path();
    return parent.empty() ? std::filesystem::path(".") : parent;
}

}  // namespace slicesec::cli
