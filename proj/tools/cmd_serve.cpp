#include <csignal>
#include <iostream>

#include "cli_util.hpp"
#include "slicesec/service.hpp"

namespace slicesec::cli {

using nlohmann::json;

namespace {

std::pair<std::string, int> parse_bind(const std::string& bind) {
    auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw Error("bind address must be host:port");
    int port = 0;
    try {
        port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error("bad port in bind address '" + bind + "'");
    }
    return {bind.substr(0, colon), port};
}

service::HttpServer* g_server = nullptr;

void handle_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int cmd_serve(const ServeArgs& args) {
    if (args.registry_dir.empty() && args.model_path.empty())
        throw Error("serve needs --registry or --model");

    std::filesystem::path registry_dir =
        args.registry_dir.empty()
            ? std::filesystem::temp_directory_path() /
                  ("slicesec_serve_" + std::to_string(::getpid()))
            : std::filesystem::path(args.registry_dir);
    service::Registry registry(registry_dir);

    std::string serving_schema;
    if (!args.schema_path.empty()) {
        require_exists(args.schema_path);
        auto schema = ingest::FlowSchema::from_json_file(args.schema_path);
        serving_schema = service::schema_digest(schema.to_json_string());
    }

    std::optional<int> activate_version;
    if (!args.model_path.empty()) {
        json doc = parse_json_file(args.model_path);
        service::ModelRecord record;
        record.model_id = "default";
        record.kind = doc.at("kind").get<std::string>();
        std::string text = doc.dump();
        record.weights.assign(text.begin(), text.end());
        record.schema_hash = doc.value("schema_hash", std::string("unspecified"));
        if (serving_schema.empty()) serving_schema = record.schema_hash;
        activate_version = registry.put(std::move(record));
    }
    if (serving_schema.empty())
        throw Error("serve needs --schema when starting from a registry");

    service::SecurityAgent agent(registry, serving_schema, args.threshold);
    if (activate_version) agent.activate("default", *activate_version);

    service::HttpServer server(agent, registry);
    server.enable_request_log();
    auto [host, port] = parse_bind(args.bind);

    g_server = &server;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);

    std::cerr << "serving on " << host << ":" << port << " (schema " << serving_schema << ")\n";
    if (!server.serve(host, port)) throw UnavailableError("cannot bind " + args.bind);

    // reached after a graceful stop: flush the latency histogram
    std::filesystem::path report = args.latency_report.empty()
                                       ? registry_dir / "latency_report.json"
                                       : std::filesystem::path(args.latency_report);
    write_file_atomic(report, agent.metrics_json().dump(2) + "\n");
    std::cerr << "latency report -> " << report.string() << "\n";
    return kExitOk;
}

}  // namespace slicesec::cli
