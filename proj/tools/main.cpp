#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "slicesec/util.hpp"

using namespace slicesec;
using namespace slicesec::cli;

int main(int argc, char** argv) {
    CLI::App app{"federated network-slicing security toolkit"};
    app.require_subcommand(1);
    std::function<int()> run;

    FeaturizeArgs feat;
    auto* featurize = app.add_subcommand(
        "featurize", "expand telemetry to the behavioral dataset (expand, join, label, rebalance)");
    featurize->add_option("--telemetry", feat.telemetry_csv, "telemetry CSV")->required();
    featurize->add_option("--manifest", feat.manifest_path, "metric manifest JSON (default: built-in 42-column manifest)");
    featurize->add_option("--windows", feat.windows_path, "attack windows JSON");
    featurize->add_option("--out", feat.out_path, "output behavioral CSV")->required();
    featurize->add_option("--entity", feat.entity, "restrict to one entity id");
    featurize->add_option("--benign-ratio", feat.benign_ratio, "target benign class share")
        ->check(CLI::Range(0.0001, 0.9999));
    featurize->add_flag("--no-rebalance", feat.no_rebalance, "skip class rebalancing");
    featurize->add_option("--seed", feat.seed, "rebalance shuffle seed");
    featurize->callback([&] { run = [&] { return cmd_featurize(feat); }; });

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "fit a detector and write the model document");
    train_cmd->add_option("--algo", train.algo, "algorithm")
        ->required()
        ->check(CLI::IsMember({"knn", "dt", "rf", "mlp"}));
    train_cmd->add_option("--data", train.data_path, "training data CSV")->required();
    train_cmd->add_option("--schema", train.schema_path,
                          "flow schema JSON (treat --data as a flow CSV)");
    train_cmd->add_option("--out", train.out_model, "output model JSON")->required();
    train_cmd->add_option("--cv", train.cv_folds, "run k-fold cross-validation instead")
        ->check(CLI::Range(2, 100));
    train_cmd->add_option("--seed", train.seed, "seed for splits, forests and training");
    train_cmd->add_option("--knn-k", train.knn_k, "knn neighbor count");
    train_cmd->add_option("--max-depth", train.max_depth, "tree depth cap (-1 unlimited)");
    train_cmd->add_option("--min-samples-split", train.min_samples_split, "minimum node size to split");
    train_cmd->add_option("--trees", train.rf_trees, "forest size");
    train_cmd->add_option("--features-per-split", train.rf_features_per_split,
                          "candidate features per split (0 = ceil(sqrt(d)))");
    train_cmd->add_option("--epochs", train.epochs, "mlp training epochs");
    train_cmd->add_option("--batch", train.batch_size, "mlp mini-batch size");
    train_cmd->add_option("--lr", train.learning_rate, "mlp learning rate");
    train_cmd->add_option("--optimizer", train.optimizer, "mlp optimizer")
        ->check(CLI::IsMember({"SGD", "Adam", "RMSprop", "sgd", "adam", "rmsprop"}));
    train_cmd->add_option("--eval-split", train.eval_split, "holdout fraction");
    train_cmd->callback([&] { run = [&] { return cmd_train(train); }; });

    FederateArgs fed;
    auto* federate = app.add_subcommand("federate", "run a federated experiment over shards");
    federate->add_option("--plan", fed.plan_path, "federated plan JSON")->required();
    federate->add_option("--shards", fed.shards_path, "shard spec JSON")->required();
    federate->add_option("--schema", fed.schema_path, "flow schema JSON")->required();
    federate->add_option("--out", fed.out_dir, "output directory")->required();
    federate->add_flag("--wire", fed.wire, "run clients behind local HTTP endpoints");
    federate->add_option("--base-port", fed.base_port, "first client port in wire mode");
    federate->callback([&] { run = [&] { return cmd_federate(fed); }; });

    AnalyzeArgs analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "statistics and report generation");
    analyze_cmd->add_option("mode", analyze.mode, "roc | pca | divergence | anova | describe")
        ->required()
        ->check(CLI::IsMember({"roc", "pca", "divergence", "anova", "describe"}));
    analyze_cmd->add_option("--data", analyze.data_path, "input file")->required();
    analyze_cmd->add_option("--b", analyze.second_path, "second weights file (divergence)");
    analyze_cmd->add_option("--out", analyze.out_dir, "report directory")->required();
    analyze_cmd->callback([&] { run = [&] { return cmd_analyze(analyze); }; });

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "run the prediction service");
    serve_cmd->add_option("--registry", serve.registry_dir, "model registry directory");
    serve_cmd->add_option("--model", serve.model_path, "model document to register and activate");
    serve_cmd->add_option("--schema", serve.schema_path, "serving flow schema JSON");
    serve_cmd->add_option("--bind", serve.bind, "host:port");
    serve_cmd->add_option("--threshold", serve.threshold, "malignant decision threshold");
    serve_cmd->add_option("--latency-report", serve.latency_report,
                          "latency histogram file written on shutdown");
    serve_cmd->callback([&] { run = [&] { return cmd_serve(serve); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        return run();
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const UnavailableError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUnavailable;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
