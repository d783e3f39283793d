#include <iostream>
#include <sstream>

#include "cli_util.hpp"
#include "slicesec/federated.hpp"
#include "slicesec/svg.hpp"

namespace slicesec::cli {

using nlohmann::json;

namespace {

fl::ShardMap shards_from_partition(ingest::PartitionResult& partition) {
    fl::ShardMap shards;
    for (auto& [id, records] : partition.shards) {
        fl::ShardData data;
        data.features = Matrix(records.size(), ingest::kFlowFeatureCount);
        data.labels.reserve(records.size());
        for (std::size_t r = 0; r < records.size(); ++r) {
            std::copy(records[r].features.begin(), records[r].features.end(),
                      data.features.row(r).begin());
            data.labels.push_back(records[r].label);
        }
        shards.emplace(id, std::move(data));
    }
    return shards;
}

}  // namespace

int cmd_federate(const FederateArgs& args) {
    RunManifest manifest = begin_manifest(
        "federate", args.plan_path + "|" + args.shards_path + "|" + (args.wire ? "wire" : "local"),
        0);

    fl::FlPlan plan;
    try {
        plan = fl::FlPlan::from_json(parse_json_file(args.plan_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(args.plan_path + ": " + e.what());
    }
    manifest.seed = plan.seed;
    manifest.add_input(args.plan_path);

    ingest::ShardSpec spec;
    require_exists(args.shards_path);
    try {
        spec = ingest::ShardSpec::from_json_file(args.shards_path);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(args.shards_path + ": " + e.what());
    }
    manifest.add_input(args.shards_path);

    ingest::FlowSchema schema;
    require_exists(args.schema_path);
    try {
        schema = ingest::FlowSchema::from_json_file(args.schema_path);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(args.schema_path + ": " + e.what());
    }
    manifest.add_input(args.schema_path);

    ingest::PartitionResult partition;
    try {
        partition = ingest::partition_non_iid(spec, schema,
                                              std::filesystem::path(args.shards_path).parent_path());
    } catch (const ingest::ShardEmpty& e) {
        throw DataError(e.what());
    } catch (const ingest::MissingColumn& e) {
        throw FormatError(e.what());
    }
    for (const auto& w : partition.warnings) std::cerr << "warning: " << w << "\n";

    fl::ShardMap shards = shards_from_partition(partition);

    std::filesystem::path out_dir(args.out_dir);
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::filesystem::path& path, const std::string& content) {
        write_file_atomic(path, content);
        written.push_back(path);
        manifest.add_output(path);
    };

    try {
        fl::ExperimentResult result = args.wire
                                          ? fl::run_experiment_wire(plan, shards, args.base_port)
                                          : fl::run_experiment(plan, shards);

        auto weight_bytes = nn::flat_to_bytes(result.final_weights);
        emit(out_dir / "final_weights.bin",
             std::string(weight_bytes.begin(), weight_bytes.end()));
        emit(out_dir / "experiment.json",
             fl::experiment_record_json(plan, result, "final_weights.bin").dump(2) + "\n");
        emit(out_dir / "timings.json", fl::experiment_timings_json(result).dump(2) + "\n");

        json model_doc = nn::mlp_to_json(nn::unflatten(result.final_weights),
                                         result.pooled_standardizer);
        model_doc["schema_hash"] = service::schema_digest(schema.to_json_string());
        emit(out_dir / "final_model.json", model_doc.dump() + "\n");

        std::ostringstream div_csv;
        div_csv << "round,client_id,divergence\n";
        for (const auto& r : result.rounds)
            for (const auto& c : r.per_client)
                div_csv << r.round << ',' << c.client_id << ',' << format_double(c.divergence)
                        << '\n';
        emit(out_dir / "divergence.csv", div_csv.str());

        std::ostringstream acc_csv;
        acc_csv << "round,global_accuracy\n";
        svg::Series acc_series{"global accuracy", {}};
        for (const auto& r : result.rounds) {
            acc_csv << r.round << ',' << format_double(r.global_accuracy) << '\n';
            acc_series.points.emplace_back(static_cast<double>(r.round), r.global_accuracy);
        }
        emit(out_dir / "accuracy_vs_round.csv", acc_csv.str());
        svg::write_line_chart(out_dir / "accuracy_vs_round.svg", "accuracy by federated round",
                              "round", "accuracy", {acc_series});
        written.push_back(out_dir / "accuracy_vs_round.svg");
        manifest.add_output(out_dir / "accuracy_vs_round.svg");

        manifest.write(out_dir);
        std::cout << "federate: " << plan.rounds << " rounds x " << plan.clients.size()
                  << " clients, final global accuracy "
                  << result.rounds.back().global_accuracy << " -> " << args.out_dir << "\n";
        return kExitOk;
    } catch (...) {
        // no partial experiment outputs on abort
        for (const auto& p : written) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
        throw;
    }
}

}  // namespace slicesec::cli
