#include <iostream>
#include <sstream>

#include "cli_util.hpp"
#include "slicesec/analytics.hpp"
#include "slicesec/classical.hpp"
#include "slicesec/federated.hpp"
#include "slicesec/neuralnet.hpp"
#include "slicesec/svg.hpp"

namespace slicesec::cli {

using nlohmann::json;

namespace {

Matrix gather(const Matrix& src, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), src.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(src.row(rows[i]).begin(), src.row(rows[i]).end(), out.row(i).begin());
    return out;
}

std::vector<int> gather_y(const std::vector<int>& src, const std::vector<std::size_t>& rows) {
    std::vector<int> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = src[rows[i]];
    return out;
}

void write_metrics_report(const std::filesystem::path& path, const analytics::EvalMetrics& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["precision_defined"] = m.precision_defined;
    j["recall_defined"] = m.recall_defined;
    j["counts"] = {{"tp", m.counts.tp}, {"tn", m.counts.tn}, {"fp", m.counts.fp}, {"fn", m.counts.fn}};
    write_file_atomic(path, j.dump(2) + "\n");
}

int train_classical(const TrainArgs& args, const LoadedTrainingData& data, RunManifest& manifest) {
    classical::CvConfig cfg;
    cfg.knn_k = args.knn_k;
    cfg.dt.max_depth = args.max_depth;
    cfg.dt.min_samples_split = static_cast<std::size_t>(args.min_samples_split);
    cfg.rf.n_trees = args.rf_trees;
    cfg.rf.features_per_split = args.rf_features_per_split;
    cfg.rf.seed = args.seed;
    cfg.rf.tree = cfg.dt;
    auto algo = classical::algo_from_string(args.algo);

    std::filesystem::path out(args.out_model);

    if (args.cv_folds > 0) {
        classical::CvResult result;
        try {
            result = classical::cross_validate(algo, data.features, data.labels, args.cv_folds,
                                               args.seed, cfg);
        } catch (const classical::TooFewSamples& e) {
            throw DataError(e.what());
        }
        std::ostringstream csv;
        csv << "fold,accuracy,precision,recall,f1,tp,tn,fp,fn\n";
        for (std::size_t f = 0; f < result.folds.size(); ++f) {
            const auto& m = result.folds[f];
            csv << f << ',' << format_double(m.accuracy) << ',' << format_double(m.precision)
                << ',' << format_double(m.recall) << ',' << format_double(m.f1) << ','
                << m.counts.tp << ',' << m.counts.tn << ',' << m.counts.fp << ',' << m.counts.fn
                << '\n';
        }
        auto cv_path = out.parent_path() / (out.stem().string() + "_cv.csv");
        write_file_atomic(cv_path, csv.str());
        manifest.add_output(cv_path);
        std::cout << "cv(" << args.cv_folds << "): accuracy " << result.accuracy.mean << " +- "
                  << result.accuracy.stddev << ", f1 " << result.f1.mean << " +- "
                  << result.f1.stddev << "\n";
        manifest.write(manifest_dir_for(args.out_model));
        return kExitOk;
    }

    auto split = fl::stratified_split(data.labels, args.eval_split, derive_seed(args.seed, 0x517 + 1));
    Matrix train_x = gather(data.features, split.train);
    std::vector<int> train_y = gather_y(data.labels, split.train);

    json doc;
    std::vector<int> preds;
    std::vector<int> truth = gather_y(data.labels, split.eval);
    Matrix eval_x = gather(data.features, split.eval);
    if (algo == classical::Algo::knn) {
        auto model = classical::knn_fit(train_x, train_y, cfg.knn_k);
        doc = classical::knn_to_json(model);
        for (std::size_t r = 0; r < eval_x.rows; ++r)
            preds.push_back(classical::knn_predict(model, eval_x.row(r)).label);
    } else if (algo == classical::Algo::dt) {
        auto model = classical::dt_fit(train_x, train_y, cfg.dt);
        doc = classical::dt_to_json(*model, data.features.cols);
        for (std::size_t r = 0; r < eval_x.rows; ++r)
            preds.push_back(classical::dt_predict(*model, eval_x.row(r)).label);
    } else {
        auto model = classical::rf_fit(train_x, train_y, cfg.rf);
        doc = classical::rf_to_json(model, data.features.cols);
        for (std::size_t r = 0; r < eval_x.rows; ++r)
            preds.push_back(classical::rf_predict(model, eval_x.row(r)).label);
    }
    doc["schema_hash"] = data.schema_hash;
    write_file_atomic(out, doc.dump() + "\n");
    manifest.add_output(out);

    auto metrics = analytics::confusion_metrics(preds, truth);
    auto metrics_path = out.parent_path() / (out.stem().string() + "_metrics.json");
    write_metrics_report(metrics_path, metrics);
    manifest.add_output(metrics_path);
    manifest.write(manifest_dir_for(args.out_model));
    std::cout << "train " << args.algo << ": holdout accuracy " << metrics.accuracy << " -> "
              << args.out_model << "\n";
    return kExitOk;
}

int train_mlp(const TrainArgs& args, const LoadedTrainingData& data, RunManifest& manifest) {
    if (data.features.cols != nn::kInputDim)
        throw DataError("mlp expects " + std::to_string(nn::kInputDim) + " features, got " +
                        std::to_string(data.features.cols));

    // seed derivations mirror the single-client federated path, so a
    // rounds=1 plan with one client reproduces this command exactly
    auto split = fl::stratified_split(data.labels, args.eval_split, derive_seed(args.seed, 0x517 + 1));
    Matrix train_raw = gather(data.features, split.train);
    auto standardizer = nn::Standardizer::fit(train_raw);
    Matrix train_x = standardizer.transform(train_raw);
    std::vector<int> train_y = gather_y(data.labels, split.train);

    nn::MlpModel model = nn::init_model(derive_seed(args.seed, 0x91071));
    nn::TrainConfig cfg;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch_size;
    cfg.seed = derive_seed(derive_seed(args.seed, 1), 1);
    auto opt = nn::make_optimizer(nn::optimizer_from_string(args.optimizer), args.learning_rate);
    nn::TrainHistory history;
    try {
        history = nn::train(model, train_x, train_y, cfg, opt);
    } catch (const nn::EmptyData& e) {
        throw DataError(e.what());
    }

    std::filesystem::path out(args.out_model);
    json doc = nn::mlp_to_json(model, standardizer);
    doc["schema_hash"] = data.schema_hash;
    write_file_atomic(out, doc.dump() + "\n");
    manifest.add_output(out);

    // per-epoch history as data plus charts
    std::ostringstream csv;
    csv << "epoch,loss,accuracy\n";
    svg::Series loss_series{"loss", {}}, acc_series{"accuracy", {}};
    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        csv << (e + 1) << ',' << format_double(history.epochs[e].loss) << ','
            << format_double(history.epochs[e].accuracy) << '\n';
        loss_series.points.emplace_back(static_cast<double>(e + 1), history.epochs[e].loss);
        acc_series.points.emplace_back(static_cast<double>(e + 1), history.epochs[e].accuracy);
    }
    auto history_path = out.parent_path() / (out.stem().string() + "_history.csv");
    write_file_atomic(history_path, csv.str());
    manifest.add_output(history_path);
    auto chart_path = out.parent_path() / (out.stem().string() + "_history.svg");
    svg::write_line_chart(chart_path, "training history", "epoch", "value",
                          {loss_series, acc_series});
    manifest.add_output(chart_path);

    std::vector<int> preds, truth = gather_y(data.labels, split.eval);
    if (!truth.empty()) {
        Matrix eval_x = standardizer.transform(gather(data.features, split.eval));
        Matrix probs = nn::forward(model, eval_x, nn::Mode::eval);
        for (std::size_t r = 0; r < probs.rows; ++r)
            preds.push_back(probs(r, 1) >= probs(r, 0) ? 1 : 0);
        auto metrics = analytics::confusion_metrics(preds, truth);
        auto metrics_path = out.parent_path() / (out.stem().string() + "_metrics.json");
        write_metrics_report(metrics_path, metrics);
        manifest.add_output(metrics_path);
        std::cout << "train mlp: holdout accuracy " << metrics.accuracy << " after "
                  << history.epochs.size() << " epochs -> " << args.out_model << "\n";
    }
    manifest.write(manifest_dir_for(args.out_model));
    return kExitOk;
}

}  // namespace

int cmd_train(const TrainArgs& args) {
    std::ostringstream cfg;
    cfg << args.algo << '|' << args.data_path << '|' << args.schema_path << '|' << args.cv_folds
        << '|' << args.epochs << '|' << args.batch_size << '|' << format_double(args.learning_rate)
        << '|' << args.optimizer;
    RunManifest manifest = begin_manifest("train", cfg.str(), args.seed);
    LoadedTrainingData data = load_training_data(args.data_path, args.schema_path);
    manifest.add_input(args.data_path);
    if (!args.schema_path.empty()) manifest.add_input(args.schema_path);

    if (args.algo == "mlp") {
        if (args.cv_folds > 0)
            throw DataError("cross-validation applies to knn/dt/rf only");
        return train_mlp(args, data, manifest);
    }
    return train_classical(args, data, manifest);
}

}  // namespace slicesec::cli
