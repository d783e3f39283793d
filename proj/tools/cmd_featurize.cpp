#include <iostream>
#include <map>

#include "cli_util.hpp"

namespace slicesec::cli {

int cmd_featurize(const FeaturizeArgs& args) {
    RunManifest manifest = begin_manifest(
        "featurize",
        args.telemetry_csv + "|" + args.manifest_path + "|" + args.windows_path + "|" +
            format_double(args.benign_ratio) + "|" + (args.no_rebalance ? "raw" : "rebalanced"),
        args.seed);

    if (!std::filesystem::exists(args.telemetry_csv))
        throw DataError("no such file: " + args.telemetry_csv);
    manifest.add_input(args.telemetry_csv);

    std::vector<ingest::TelemetrySample> samples;
    try {
        samples = ingest::parse_telemetry_csv(args.telemetry_csv);
    } catch (const ingest::MissingColumn& e) {
        throw FormatError(e.what());
    } catch (const Error& e) {
        throw FormatError(args.telemetry_csv + ": " + e.what());
    }
    if (!args.entity.empty()) {
        std::erase_if(samples, [&](const auto& s) { return s.entity_id != args.entity; });
    }
    if (samples.empty()) throw DataError("no samples");

    ingest::MetricManifest metric_manifest = ingest::MetricManifest::default_manifest();
    if (!args.manifest_path.empty()) {
        require_exists(args.manifest_path);
        manifest.add_input(args.manifest_path);
        try {
            metric_manifest = ingest::MetricManifest::from_json_file(args.manifest_path);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(args.manifest_path + ": " + e.what());
        }
    }

    std::map<std::string, std::vector<ingest::TelemetrySample>> by_entity;
    for (auto& s : samples) by_entity[s.entity_id].push_back(std::move(s));

    ingest::BehavioralDataset table;
    if (by_entity.size() == 1) {
        table = ingest::expand_telemetry(by_entity.begin()->second, metric_manifest);
    } else {
        std::vector<ingest::BehavioralDataset> tables;
        for (const auto& [entity, entity_samples] : by_entity)
            tables.push_back(
                ingest::with_entity_prefix(ingest::expand_telemetry(entity_samples, metric_manifest)));
        table = ingest::timestamp_join(tables);
    }

    std::vector<ingest::AttackWindow> windows;
    if (!args.windows_path.empty()) {
        require_exists(args.windows_path);
        manifest.add_input(args.windows_path);
        try {
            windows = ingest::read_windows_json(args.windows_path);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(args.windows_path + ": " + e.what());
        }
    }
    table = ingest::label_windows(std::move(table), std::move(windows));

    if (!args.no_rebalance) {
        try {
            table = ingest::rebalance(table, args.benign_ratio, args.seed);
        } catch (const ingest::Unachievable& e) {
            throw DataError(e.what());
        }
    }

    ingest::write_behavioral_csv(table, args.out_path);
    manifest.add_output(args.out_path);
    manifest.write(manifest_dir_for(args.out_path));

    std::cout << "featurize: " << table.matrix.rows << " rows x " << table.columns.size()
              << " features -> " << args.out_path << "\n";
    return kExitOk;
}

}  // namespace slicesec::cli
