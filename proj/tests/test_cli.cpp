#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "slicesec/util.hpp"
#include "support.hpp"

using namespace slicesec;
using nlohmann::json;

namespace {

std::string cli_bin() {
    const char* bin = std::getenv("SLICESEC_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

std::string data_dir() {
    const char* dir = std::getenv("SLICESEC_DATA");
    REQUIRE(dir != nullptr);
    return dir;
}

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args, const std::filesystem::path& workdir) {
    std::string cmd = "cd " + workdir.string() + " && " + cli_bin() + " " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) r.out.append(buf, n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

// miniature flow CSV against the shipped 78-feature schema
void write_flow_fixture(const std::filesystem::path& path, std::size_t rows, double malignant_frac,
                        std::uint64_t seed) {
    json schema = json::parse(read_file(std::filesystem::path(data_dir()) / "flow_schema.json"));
    std::ostringstream out;
    bool first = true;
    for (const auto& f : schema["features"]) {
        out << (first ? "" : ",") << f.get<std::string>();
        first = false;
    }
    out << "," << schema["label"].get<std::string>() << "\n";
    Rng rng(seed);
    for (std::size_t r = 0; r < rows; ++r) {
        bool malignant = rng.next_double() < malignant_frac;
        for (std::size_t c = 0; c < 78; ++c) {
            double v = rng.next_normal() + ((malignant && c < 4) ? 3.0 : 0.0);
            out << format_double(v) << ",";
        }
        out << (malignant ? "DoS Hulk" : "BENIGN") << "\n";
    }
    write_text(path, out.str());
}

std::string telemetry_fixture() {
    // 3 entities on overlapping but unequal clocks
    std::ostringstream out;
    out << "entity_id,timestamp,metric,attribute,value\n";
    Rng rng(21);
    for (const char* entity : {"AMF", "SMF", "UPF"}) {
        for (int t = 100; t < 160; ++t) {
            if (rng.next_double() < 0.2) continue;  // per-entity gaps
            out << entity << ',' << t << ",cpu,user," << format_double(rng.next_double()) << "\n";
            out << entity << ',' << t << ",mem,rss," << format_double(50 + rng.next_double()) << "\n";
        }
    }
    return out.str();
}

}  // namespace

TEST_CASE("featurize command") {
    auto dir = testsupport::make_temp_dir("cli_feat");
    write_text(dir / "telemetry.csv", telemetry_fixture());
    write_text(dir / "windows.json", R"([{"start": 120, "end": 130}])");
    // the fixture only emits cpu.user and mem.rss, so use a 2-column manifest
    write_text(dir / "manifest.json",
               R"({"entries": [{"metric": "cpu", "attribute": "user"},
                              {"metric": "mem", "attribute": "rss"}]})");

    SUBCASE("empty telemetry exits 2 with a clear message") {
        write_text(dir / "empty.csv", "");
        auto r = run_cli("featurize --telemetry empty.csv --out out.csv", dir);
        CHECK(r.exit_code == 2);
        CHECK(r.out.find("no samples") != std::string::npos);
    }
    SUBCASE("three-entity fixture joins to the timestamp union") {
        auto r = run_cli(
            "featurize --telemetry telemetry.csv --manifest manifest.json --windows windows.json "
            "--no-rebalance --out joined.csv",
            dir);
        REQUIRE(r.exit_code == 0);
        // oracle: distinct timestamps across all entities
        std::ifstream in(dir / "telemetry.csv");
        std::string line;
        std::getline(in, line);
        std::set<std::string> stamps;
        while (std::getline(in, line)) {
            auto a = line.find(','), b = line.find(',', line.find(',') + 1);
            stamps.insert(line.substr(a + 1, b - a - 1));
        }
        std::ifstream joined(dir / "joined.csv");
        std::size_t rows = 0;
        while (std::getline(joined, line)) ++rows;
        CHECK(rows - 1 == stamps.size());
        // 3 entities x 2 manifest columns + timestamp + label
        std::ifstream joined2(dir / "joined.csv");
        std::getline(joined2, line);
        CHECK(std::count(line.begin(), line.end(), ',') == 7);
        CHECK(std::filesystem::exists(dir / "run_manifest.json"));
    }
    SUBCASE("same inputs and seed produce byte-identical output") {
        auto r1 = run_cli(
            "featurize --telemetry telemetry.csv --manifest manifest.json --windows windows.json "
            "--benign-ratio 0.7 --seed 11 --out a.csv",
            dir);
        auto r2 = run_cli(
            "featurize --telemetry telemetry.csv --manifest manifest.json --windows windows.json "
            "--benign-ratio 0.7 --seed 11 --out b.csv",
            dir);
        REQUIRE(r1.exit_code == 0);
        REQUIRE(r2.exit_code == 0);
        CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("train command") {
    auto dir = testsupport::make_temp_dir("cli_train");

    SUBCASE("decision tree on a separable fixture reports accuracy 1") {
        auto d = testsupport::separable_data(300, 4, 2, 3);
        std::ostringstream csv;
        csv << "timestamp,a,b,c,d,label\n";
        for (std::size_t r = 0; r < d.features.rows; ++r) {
            csv << r;
            for (std::size_t c = 0; c < 4; ++c) csv << ',' << format_double(d.features(r, c));
            csv << ',' << d.labels[r] << '\n';
        }
        write_text(dir / "sep.csv", csv.str());
        auto r = run_cli("train --algo dt --data sep.csv --out dt.json --seed 4", dir);
        REQUIRE(r.exit_code == 0);
        json metrics = json::parse(read_file(dir / "dt_metrics.json"));
        CHECK(metrics["accuracy"] == 1.0);
        CHECK(json::parse(read_file(dir / "dt.json"))["kind"] == "dt");
    }
    SUBCASE("unknown algorithm is a usage error") {
        auto r = run_cli("train --algo svm --data nope.csv --out x.json", dir);
        CHECK(r.exit_code == 64);
    }
    SUBCASE("cv on mlp is rejected") {
        write_flow_fixture(dir / "flows.csv", 60, 0.4, 9);
        auto r = run_cli("train --algo mlp --cv 5 --data flows.csv --schema " + data_dir() +
                             "/flow_schema.json --out m.json",
                         dir);
        CHECK(r.exit_code == 2);
    }
    SUBCASE("mlp training writes model, metrics and history") {
        write_flow_fixture(dir / "flows.csv", 400, 0.4, 10);
        auto r = run_cli("train --algo mlp --data flows.csv --schema " + data_dir() +
                             "/flow_schema.json --epochs 3 --seed 6 --out mlp.json",
                         dir);
        REQUIRE(r.exit_code == 0);
        json doc = json::parse(read_file(dir / "mlp.json"));
        CHECK(doc["kind"] == "mlp");
        CHECK(doc["weights"].size() == 1570);
        CHECK(std::filesystem::exists(dir / "mlp_history.csv"));
        CHECK(std::filesystem::exists(dir / "mlp_history.svg"));
        CHECK(std::filesystem::exists(dir / "mlp_metrics.json"));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("federate command") {
    auto dir = testsupport::make_temp_dir("cli_fed");
    for (int shard = 1; shard <= 7; ++shard)
        write_flow_fixture(dir / ("shard" + std::to_string(shard) + ".csv"), 120, 0.4,
                           static_cast<std::uint64_t>(shard));
    json spec;
    spec["shards"] = json::array();
    for (int shard = 1; shard <= 7; ++shard)
        spec["shards"].push_back({{"id", shard}, {"file", "shard" + std::to_string(shard) + ".csv"}});
    write_text(dir / "shards.json", spec.dump());
    json plan;
    plan["rounds"] = 2;
    plan["seed"] = 77;
    plan["clients"] = json::array();
    for (int c = 1; c <= 7; ++c)
        plan["clients"].push_back({{"client_id", c},
                                   {"learning_rate", 0.002},
                                   {"optimizer", "Adam"},
                                   {"epochs", 2},
                                   {"shard_id", c}});
    write_text(dir / "plan.json", plan.dump());
    std::string schema_arg = " --schema " + data_dir() + "/flow_schema.json";

    SUBCASE("two rounds over seven shards yield 2 reports and 14 divergences") {
        auto r = run_cli("federate --plan plan.json --shards shards.json" + schema_arg +
                             " --out out1",
                         dir);
        REQUIRE(r.exit_code == 0);
        json record = json::parse(read_file(dir / "out1/experiment.json"));
        REQUIRE(record["rounds"].size() == 2);
        std::size_t divergences = 0;
        for (const auto& round : record["rounds"]) divergences += round["per_client"].size();
        CHECK(divergences == 14);
        // divergence csv: header + 14 rows
        std::ifstream div(dir / "out1/divergence.csv");
        std::string line;
        std::size_t lines = 0;
        while (std::getline(div, line)) ++lines;
        CHECK(lines == 15);
    }
    SUBCASE("repeated runs are byte-identical") {
        auto r1 = run_cli("federate --plan plan.json --shards shards.json" + schema_arg +
                              " --out rep1",
                          dir);
        auto r2 = run_cli("federate --plan plan.json --shards shards.json" + schema_arg +
                              " --out rep2",
                          dir);
        REQUIRE(r1.exit_code == 0);
        REQUIRE(r2.exit_code == 0);
        CHECK(read_file(dir / "rep1/experiment.json") == read_file(dir / "rep2/experiment.json"));
        CHECK(read_file(dir / "rep1/final_weights.bin") == read_file(dir / "rep2/final_weights.bin"));
        CHECK(read_file(dir / "rep1/final_model.json") == read_file(dir / "rep2/final_model.json"));
    }
    SUBCASE("single-client one-round plan degenerates to cmd_train") {
        json tiny;
        tiny["rounds"] = 1;
        tiny["seed"] = 31;
        tiny["clients"] = json::array();
        tiny["clients"].push_back({{"client_id", 1},
                                   {"learning_rate", 0.004},
                                   {"optimizer", "RMSprop"},
                                   {"epochs", 3},
                                   {"shard_id", 1}});
        write_text(dir / "tiny_plan.json", tiny.dump());
        auto fed = run_cli("federate --plan tiny_plan.json --shards shards.json" + schema_arg +
                               " --out solo",
                           dir);
        REQUIRE(fed.exit_code == 0);
        auto train = run_cli("train --algo mlp --data shard1.csv" + schema_arg +
                                 " --epochs 3 --lr 0.004 --optimizer RMSprop --seed 31 "
                                 "--out solo_train.json",
                             dir);
        REQUIRE(train.exit_code == 0);
        json fed_model = json::parse(read_file(dir / "solo/final_model.json"));
        json train_model = json::parse(read_file(dir / "solo_train.json"));
        CHECK(fed_model["weights"] == train_model["weights"]);
        CHECK(fed_model["standardizer"] == train_model["standardizer"]);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("analyze command") {
    auto dir = testsupport::make_temp_dir("cli_analyze");
    SUBCASE("anova fixture engineered to the reference F prints the reference p") {
        // derive group data from the target sums of squares:
        // F = 8 * ss_model / ss_error at df (3, 24)
        const double target_f = 1.13519, ss_error = 0.01048;
        const double ss_model = target_f * ss_error / 8.0;
        const double within[7] = {-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5};
        double within_ss = 0.0;
        for (double w : within) within_ss += w * w;
        const double s = std::sqrt(ss_error / (4.0 * within_ss));
        const double between[4] = {-1.5, -0.5, 0.5, 1.5};
        const double c = std::sqrt(ss_model / (7.0 * 5.0));
        std::ostringstream csv;
        csv << "group,value\n";
        for (int g = 0; g < 4; ++g)
            for (int i = 0; i < 7; ++i)
                csv << "g" << g << ',' << format_double(0.00894 + c * between[g] + s * within[i])
                    << '\n';
        write_text(dir / "groups.csv", csv.str());
        auto r = run_cli("analyze anova --data groups.csv --out anova_out", dir);
        REQUIRE(r.exit_code == 0);
        json report = json::parse(read_file(dir / "anova_out/anova.json"));
        CHECK(report["df_model"] == 3);
        CHECK(report["df_error"] == 24);
        CHECK(std::fabs(report["f_value"].get<double>() - target_f) < 1e-6);
        CHECK(std::fabs(report["p_value"].get<double>() - 0.35479) < 0.0005);
        CHECK(r.out.find("0.3547") != std::string::npos);
    }
    SUBCASE("roc on perfectly separating scores reports auc 1") {
        write_text(dir / "scores.csv", "score,label\n0.9,1\n0.8,1\n0.2,0\n0.1,0\n");
        auto r = run_cli("analyze roc --data scores.csv --out roc_out", dir);
        REQUIRE(r.exit_code == 0);
        CHECK(json::parse(read_file(dir / "roc_out/roc.json"))["auc"] == 1.0);
        CHECK(std::filesystem::exists(dir / "roc_out/roc.svg"));
    }
    SUBCASE("pca on a line collapses the second component") {
        std::ostringstream csv;
        csv << "timestamp,x,y\n";
        Rng rng(2);
        for (int i = 0; i < 40; ++i) {
            double v = rng.next_normal();
            csv << i << ',' << format_double(v) << ',' << format_double(2.0 * v - 1.0) << '\n';
        }
        write_text(dir / "line.csv", csv.str());
        auto r = run_cli("analyze pca --data line.csv --out pca_out", dir);
        REQUIRE(r.exit_code == 0);
        json report = json::parse(read_file(dir / "pca_out/pca.json"));
        CHECK(report["explained_variance"][1].get<double>() < 1e-8);
    }
    SUBCASE("malformed csv exits 65 naming the row") {
        write_text(dir / "bad.csv", "group,value\ng0,1.0\ng1,oops\n");
        auto r = run_cli("analyze anova --data bad.csv --out bad_out", dir);
        CHECK(r.exit_code == 65);
        CHECK(r.out.find("row 3") != std::string::npos);
    }
    SUBCASE("divergence between two weight files") {
        auto r = run_cli("train --algo mlp --data flows.csv --schema " + data_dir() +
                             "/flow_schema.json --out m.json",
                         dir);
        // no flows.csv here: just verify the error path is the data exit code
        CHECK(r.exit_code == 2);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("serve command lifecycle") {
    auto dir = testsupport::make_temp_dir("cli_serve");
    write_flow_fixture(dir / "flows.csv", 200, 0.4, 12);
    auto train = run_cli("train --algo mlp --data flows.csv --schema " + data_dir() +
                             "/flow_schema.json --epochs 2 --seed 2 --out model.json",
                         dir);
    REQUIRE(train.exit_code == 0);

    const int port = 18733;
    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        std::string bind = "127.0.0.1:" + std::to_string(port);
        std::string model = (dir / "model.json").string();
        std::string report = (dir / "latency.json").string();
        execl(cli_bin().c_str(), "slicesec", "serve", "--model", model.c_str(), "--bind",
              bind.c_str(), "--latency-report", report.c_str(), (char*)nullptr);
        _exit(127);
    }

    httplib::Client http("127.0.0.1", port);
    http.set_connection_timeout(0, 200000);
    bool up = false;
    for (int i = 0; i < 100 && !up; ++i) {
        auto res = http.Get("/healthz");
        up = res && res->status == 200;
        if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    REQUIRE(up);

    json body;
    body["features"] = std::vector<double>(78, 0.1);
    auto res = http.Post("/predict", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    json parsed = json::parse(res->body);
    CHECK((parsed["label"] == "benign" || parsed["label"] == "malignant"));
    CHECK(parsed["model_id"] == "default");
    CHECK(parsed["model_version"] == 1);

    kill(pid, SIGTERM);
    int status = 0;
    waitpid(pid, &status, 0);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(std::filesystem::exists(dir / "latency.json"));
    std::filesystem::remove_all(dir);
}
