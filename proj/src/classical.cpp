#include "slicesec/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slicesec::classical {

using nlohmann::json;

Standardization fit_standardization(const Matrix& features) {
    Standardization s;
    s.mean.assign(features.cols, 0.0);
    s.stddev.assign(features.cols, 0.0);
    s.constant.assign(features.cols, false);
    for (std::size_t c = 0; c < features.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < features.rows; ++r) mean += features(r, c);
        mean /= static_cast<double>(features.rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < features.rows; ++r) {
            double e = features(r, c) - mean;
            ss += e * e;
        }
        double sd = features.rows > 1 ? std::sqrt(ss / static_cast<double>(features.rows - 1)) : 0.0;
        s.mean[c] = mean;
        s.stddev[c] = sd;
        s.constant[c] = sd == 0.0;
    }
    return s;
}

KnnModel knn_fit(const Matrix& features, const std::vector<int>& labels, int k) {
    if (features.rows == 0) throw EmptyData("knn_fit: empty data");
    if (features.rows != labels.size()) throw DimensionMismatch("knn_fit: rows != labels");
    if (k < 1 || static_cast<std::size_t>(k) > features.rows)
        throw Error("knn_fit: k must be in [1, n]");
    KnnModel m;
    m.k = k;
    m.stats = fit_standardization(features);
    m.train_labels = labels;
    m.train_features = Matrix(features.rows, features.cols);
    for (std::size_t r = 0; r < features.rows; ++r)
        for (std::size_t c = 0; c < features.cols; ++c)
            m.train_features(r, c) =
                m.stats.constant[c] ? 0.0 : (features(r, c) - m.stats.mean[c]) / m.stats.stddev[c];
    return m;
}

Prediction knn_predict(const KnnModel& model, std::span<const double> x) {
    if (x.size() != model.train_features.cols)
        throw DimensionMismatch("knn_predict: feature length mismatch");
    std::vector<double> z(x.size());
    for (std::size_t c = 0; c < x.size(); ++c)
        z[c] = model.stats.constant[c] ? 0.0 : (x[c] - model.stats.mean[c]) / model.stats.stddev[c];

    std::vector<std::pair<double, std::size_t>> dist(model.train_features.rows);
    for (std::size_t r = 0; r < model.train_features.rows; ++r) {
        double d2 = 0.0;
        auto row = model.train_features.row(r);
        for (std::size_t c = 0; c < x.size(); ++c) {
            if (model.stats.constant[c]) continue;
            double e = row[c] - z[c];
            d2 += e * e;
        }
        dist[r] = {d2, r};
    }
    auto kth = dist.begin() + model.k;
    std::partial_sort(dist.begin(), kth, dist.end());

    int votes = 0;
    for (auto it = dist.begin(); it != kth; ++it) votes += model.train_labels[it->second];
    double score = static_cast<double>(votes) / static_cast<double>(model.k);
    return {score >= 0.5 ? 1 : 0, score};
}

namespace {

double gini(std::uint64_t c0, std::uint64_t c1) {
    double n = static_cast<double>(c0 + c1);
    if (n == 0.0) return 0.0;
    double p0 = static_cast<double>(c0) / n;
    double p1 = static_cast<double>(c1) / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
};

// grows one CART node; candidate_features empty means "all features"
std::unique_ptr<TreeNode> grow(const Matrix& X, const std::vector<int>& y,
                               std::vector<std::size_t>& rows, const DtConfig& cfg, int depth,
                               int features_per_split, Rng* rng) {
    auto node = std::make_unique<TreeNode>();
    std::uint64_t c1 = 0;
    for (auto r : rows) c1 += static_cast<std::uint64_t>(y[r]);
    std::uint64_t c0 = rows.size() - c1;
    node->class_counts[0] = c0;
    node->class_counts[1] = c1;

    bool pure = c0 == 0 || c1 == 0;
    bool depth_stop = cfg.max_depth >= 0 && depth >= cfg.max_depth;
    if (pure || rows.size() < cfg.min_samples_split || depth_stop) return node;

    std::vector<std::size_t> candidates;
    std::size_t d = X.cols;
    if (rng != nullptr && features_per_split > 0 && static_cast<std::size_t>(features_per_split) < d) {
        // partial Fisher-Yates draw of distinct feature indices
        std::vector<std::size_t> pool(d);
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < features_per_split; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng->next_below(d - static_cast<std::size_t>(i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        candidates.assign(pool.begin(), pool.begin() + features_per_split);
        std::sort(candidates.begin(), candidates.end());
    } else {
        candidates.resize(d);
        std::iota(candidates.begin(), candidates.end(), 0);
    }

    SplitChoice best;
    std::vector<std::pair<double, int>> vals(rows.size());
    for (std::size_t f : candidates) {
        for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {X(rows[i], f), y[rows[i]]};
        std::sort(vals.begin(), vals.end());
        std::uint64_t l0 = 0, l1 = 0;
        double n = static_cast<double>(rows.size());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            (vals[i].second == 0 ? l0 : l1)++;
            if (vals[i].first == vals[i + 1].first) continue;
            double threshold = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
            std::uint64_t r0 = c0 - l0, r1 = c1 - l1;
            double nl = static_cast<double>(l0 + l1), nr = static_cast<double>(r0 + r1);
            double weighted = (nl * gini(l0, l1) + nr * gini(r0, r1)) / n;
            // strict improvement keeps the lowest feature index / threshold on ties
            if (!best.found || weighted < best.impurity) {
                best = {true, static_cast<int>(f), threshold, weighted};
            }
        }
    }
    if (!best.found) return node;  // all candidate features constant within the node

    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) {
        (X(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? left_rows : right_rows)
            .push_back(r);
    }
    node->is_leaf = false;
    node->feature_index = best.feature;
    node->threshold = best.threshold;
    node->left = grow(X, y, left_rows, cfg, depth + 1, features_per_split, rng);
    node->right = grow(X, y, right_rows, cfg, depth + 1, features_per_split, rng);
    return node;
}

}  // namespace

std::unique_ptr<TreeNode> dt_fit(const Matrix& features, const std::vector<int>& labels,
                                 const DtConfig& config) {
    if (features.rows == 0) throw EmptyData("dt_fit: empty data");
    if (features.rows != labels.size()) throw DimensionMismatch("dt_fit: rows != labels");
    std::vector<std::size_t> rows(features.rows);
    std::iota(rows.begin(), rows.end(), 0);
    return grow(features, labels, rows, config, 0, 0, nullptr);
}

Prediction dt_predict(const TreeNode& root, std::span<const double> x) {
    const TreeNode* node = &root;
    while (!node->is_leaf) {
        if (static_cast<std::size_t>(node->feature_index) >= x.size())
            throw DimensionMismatch("dt_predict: feature index out of range");
        node = x[static_cast<std::size_t>(node->feature_index)] <= node->threshold
                   ? node->left.get()
                   : node->right.get();
    }
    double total = static_cast<double>(node->class_counts[0] + node->class_counts[1]);
    double score = total > 0.0 ? static_cast<double>(node->class_counts[1]) / total : 0.0;
    return {score >= 0.5 ? 1 : 0, score};
}

ForestModel rf_fit(const Matrix& features, const std::vector<int>& labels, const RfConfig& config) {
    if (features.rows == 0) throw EmptyData("rf_fit: empty data");
    if (features.rows != labels.size()) throw DimensionMismatch("rf_fit: rows != labels");
    if (config.n_trees < 1) throw Error("rf_fit: n_trees must be >= 1");

    ForestModel model;
    model.config = config;
    if (model.config.features_per_split <= 0)
        model.config.features_per_split =
            static_cast<int>(std::ceil(std::sqrt(static_cast<double>(features.cols))));
    model.config.features_per_split =
        std::min<int>(model.config.features_per_split, static_cast<int>(features.cols));

    std::size_t n = features.rows;
    for (int t = 0; t < config.n_trees; ++t) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> rows(n);
        if (model.config.bootstrap) {
            for (auto& r : rows) r = static_cast<std::size_t>(rng.next_below(n));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        model.trees.push_back(
            grow(features, labels, rows, model.config.tree, 0, model.config.features_per_split, &rng));
    }
    return model;
}

Prediction rf_predict(const ForestModel& model, std::span<const double> x) {
    if (model.trees.empty()) throw EmptyData("rf_predict: empty forest");
    int votes = 0;
    for (const auto& tree : model.trees) votes += dt_predict(*tree, x).label;
    double score = static_cast<double>(votes) / static_cast<double>(model.trees.size());
    return {score >= 0.5 ? 1 : 0, score};
}

FoldPlan stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed) {
    if (k < 2) throw TooFewSamples("stratified_kfold: k must be >= 2");
    std::vector<std::size_t> class_rows[2];
    for (std::size_t r = 0; r < labels.size(); ++r)
        class_rows[labels[r] != 0 ? 1 : 0].push_back(r);
    for (int cls = 0; cls < 2; ++cls)
        if (class_rows[cls].size() < static_cast<std::size_t>(k))
            throw TooFewSamples("stratified_kfold: class " + std::to_string(cls) + " has " +
                                std::to_string(class_rows[cls].size()) + " rows, need >= " +
                                std::to_string(k));

    FoldPlan plan;
    plan.k = k;
    plan.fold_assignment.assign(labels.size(), 0);
    for (int cls = 0; cls < 2; ++cls) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
        rng.shuffle(class_rows[cls]);
        for (std::size_t i = 0; i < class_rows[cls].size(); ++i)
            plan.fold_assignment[class_rows[cls][i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return plan;
}

Algo algo_from_string(const std::string& name) {
    if (name == "knn") return Algo::knn;
    if (name == "dt") return Algo::dt;
    if (name == "rf") return Algo::rf;
    throw Error("unknown algorithm '" + name + "'");
}

namespace {

CvStat stat_over(const std::vector<double>& xs) {
    auto d = analytics::describe(xs);
    return {d.mean, d.stddev};
}

}  // namespace

CvResult cross_validate(Algo algo, const Matrix& features, const std::vector<int>& labels,
                        int k, std::uint64_t seed, const CvConfig& config) {
    FoldPlan plan = stratified_kfold(labels, k, seed);
    CvResult result;
    for (int fold = 0; fold < k; ++fold) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t r = 0; r < labels.size(); ++r)
            (plan.fold_assignment[r] == fold ? test_rows : train_rows).push_back(r);

        Matrix train_x(train_rows.size(), features.cols);
        std::vector<int> train_y(train_rows.size());
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            std::copy(features.row(train_rows[i]).begin(), features.row(train_rows[i]).end(),
                      train_x.row(i).begin());
            train_y[i] = labels[train_rows[i]];
        }

        std::vector<int> preds, truth;
        preds.reserve(test_rows.size());
        truth.reserve(test_rows.size());
        auto eval = [&](auto&& predict) {
            for (auto r : test_rows) {
                preds.push_back(predict(features.row(r)).label);
                truth.push_back(labels[r]);
            }
        };
        switch (algo) {
            case Algo::knn: {
                KnnModel m = knn_fit(train_x, train_y, config.knn_k);
                eval([&](std::span<const double> x) { return knn_predict(m, x); });
                break;
            }
            case Algo::dt: {
                auto m = dt_fit(train_x, train_y, config.dt);
                eval([&](std::span<const double> x) { return dt_predict(*m, x); });
                break;
            }
            case Algo::rf: {
                RfConfig rc = config.rf;
                rc.seed = derive_seed(config.rf.seed, static_cast<std::uint64_t>(fold));
                ForestModel m = rf_fit(train_x, train_y, rc);
                eval([&](std::span<const double> x) { return rf_predict(m, x); });
                break;
            }
        }
        result.folds.push_back(analytics::confusion_metrics(preds, truth));
    }

    std::vector<double> acc, prec, rec, f1;
    for (const auto& m : result.folds) {
        acc.push_back(m.accuracy);
        prec.push_back(m.precision);
        rec.push_back(m.recall);
        f1.push_back(m.f1);
    }
    result.accuracy = stat_over(acc);
    result.precision = stat_over(prec);
    result.recall = stat_over(rec);
    result.f1 = stat_over(f1);
    return result;
}

json knn_to_json(const KnnModel& model) {
    json j;
    j["kind"] = "knn";
    j["version"] = 1;
    j["k"] = model.k;
    j["labels"] = model.train_labels;
    j["rows"] = model.train_features.rows;
    j["cols"] = model.train_features.cols;
    j["features"] = model.train_features.data;
    j["mean"] = model.stats.mean;
    j["stddev"] = model.stats.stddev;
    return j;
}

KnnModel knn_from_json(const json& j) {
    if (j.at("kind") != "knn") throw Error("knn_from_json: wrong kind");
    KnnModel m;
    m.k = j.at("k").get<int>();
    m.train_labels = j.at("labels").get<std::vector<int>>();
    m.train_features.rows = j.at("rows").get<std::size_t>();
    m.train_features.cols = j.at("cols").get<std::size_t>();
    m.train_features.data = j.at("features").get<std::vector<double>>();
    if (m.train_features.data.size() != m.train_features.rows * m.train_features.cols)
        throw Error("knn_from_json: matrix size mismatch");
    m.stats.mean = j.at("mean").get<std::vector<double>>();
    m.stats.stddev = j.at("stddev").get<std::vector<double>>();
    m.stats.constant.resize(m.stats.stddev.size());
    for (std::size_t i = 0; i < m.stats.stddev.size(); ++i)
        m.stats.constant[i] = m.stats.stddev[i] == 0.0;
    return m;
}

namespace {

json node_to_json(const TreeNode& node) {
    json j;
    if (node.is_leaf) {
        j["counts"] = {node.class_counts[0], node.class_counts[1]};
    } else {
        j["counts"] = {node.class_counts[0], node.class_counts[1]};
        j["feature"] = node.feature_index;
        j["threshold"] = node.threshold;
        j["left"] = node_to_json(*node.left);
        j["right"] = node_to_json(*node.right);
    }
    return j;
}

std::unique_ptr<TreeNode> node_from_json(const json& j) {
    auto node = std::make_unique<TreeNode>();
    node->class_counts[0] = j.at("counts")[0].get<std::uint64_t>();
    node->class_counts[1] = j.at("counts")[1].get<std::uint64_t>();
    if (j.contains("feature")) {
        node->is_leaf = false;
        node->feature_index = j.at("feature").get<int>();
        node->threshold = j.at("threshold").get<double>();
        node->left = node_from_json(j.at("left"));
        node->right = node_from_json(j.at("right"));
    }
    return node;
}

}  // namespace

json dt_to_json(const TreeNode& root, std::size_t input_dim) {
    json j;
    j["kind"] = "dt";
    j["version"] = 1;
    j["input_dim"] = input_dim;
    j["tree"] = node_to_json(root);
    return j;
}

std::unique_ptr<TreeNode> dt_from_json(const json& j) {
    if (j.at("kind") != "dt") throw Error("dt_from_json: wrong kind");
    return node_from_json(j.at("tree"));
}

json rf_to_json(const ForestModel& model, std::size_t input_dim) {
    json j;
    j["kind"] = "rf";
    j["version"] = 1;
    j["input_dim"] = input_dim;
    j["n_trees"] = model.config.n_trees;
    j["features_per_split"] = model.config.features_per_split;
    j["seed"] = model.config.seed;
    j["bootstrap"] = model.config.bootstrap;
    j["trees"] = json::array();
    for (const auto& t : model.trees) j["trees"].push_back(node_to_json(*t));
    return j;
}

ForestModel rf_from_json(const json& j) {
    if (j.at("kind") != "rf") throw Error("rf_from_json: wrong kind");
    ForestModel m;
    m.config.n_trees = j.at("n_trees").get<int>();
    m.config.features_per_split = j.at("features_per_split").get<int>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.config.bootstrap = j.at("bootstrap").get<bool>();
    for (const auto& t : j.at("trees")) m.trees.push_back(node_from_json(t));
    return m;
}

}  // namespace slicesec::classical
