#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicesec/analytics.hpp"
#include "slicesec/matrix.hpp"
#include "slicesec/util.hpp"

namespace slicesec::classical {

struct EmptyData : Error {
    using Error::Error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct TooFewSamples : Error {
    using Error::Error;
};

struct Prediction {
    int label = 0;
    double score = 0.0;  // malignant score in [0,1]
};

// per-feature z-score statistics; constant features are excluded from distances
struct Standardization {
    std::vector<double> mean;
    std::vector<double> stddev;       // sample stddev
    std::vector<bool> constant;       // stddev == 0
};

Standardization fit_standardization(const Matrix& features);

struct KnnModel {
    int k = 5;
    Matrix train_features;  // standardized
    std::vector<int> train_labels;
    Standardization stats;
};

KnnModel knn_fit(const Matrix& features, const std::vector<int>& labels, int k = 5);
// Euclidean distance on standardized features; distance ties resolve to the
// lower training-row index; label 1 wins a split vote.
Prediction knn_predict(const KnnModel& model, std::span<const double> x);

struct TreeNode {
    bool is_leaf = true;
    std::uint64_t class_counts[2] = {0, 0};  // leaf payload
    int feature_index = -1;
    double threshold = 0.0;
    std::unique_ptr<TreeNode> left;
    std::unique_ptr<TreeNode> right;
};

struct DtConfig {
    std::size_t min_samples_split = 2;
    int max_depth = -1;  // unlimited
};

// CART with Gini impurity; candidate thresholds are midpoints between
// consecutive distinct sorted values; impurity ties break toward the lowest
// feature index then the lowest threshold.
std::unique_ptr<TreeNode> dt_fit(const Matrix& features, const std::vector<int>& labels,
                                 const DtConfig& config = {});
Prediction dt_predict(const TreeNode& root, std::span<const double> x);

struct RfConfig {
    int n_trees = 100;
    int features_per_split = 0;  // 0 means ceil(sqrt(d))
    std::uint64_t seed = 0;
    bool bootstrap = true;  // false trains every tree on the full data
    DtConfig tree;
};

struct ForestModel {
    std::vector<std::unique_ptr<TreeNode>> trees;
    RfConfig config;
};

ForestModel rf_fit(const Matrix& features, const std::vector<int>& labels, const RfConfig& config);
Prediction rf_predict(const ForestModel& model, std::span<const double> x);

struct FoldPlan {
    int k = 0;
    std::vector<int> fold_assignment;  // per row, in [0, k)
};

// per-class seeded shuffle + round-robin; every class needs >= k members
FoldPlan stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed);

enum class Algo { knn, dt, rf };

Algo algo_from_string(const std::string& name);

struct CvStat {
    double mean = 0.0;
    double stddev = 0.0;
};

struct CvResult {
    std::vector<analytics::EvalMetrics> folds;
    CvStat accuracy, precision, recall, f1;
};

struct CvConfig {
    int knn_k = 5;
    DtConfig dt;
    RfConfig rf;
};

CvResult cross_validate(Algo algo, const Matrix& features, const std::vector<int>& labels,
                        int k, std::uint64_t seed, const CvConfig& config = {});

// versioned JSON model documents
nlohmann::json knn_to_json(const KnnModel& model);
KnnModel knn_from_json(const nlohmann::json& j);
nlohmann::json dt_to_json(const TreeNode& root, std::size_t input_dim);
std::unique_ptr<TreeNode> dt_from_json(const nlohmann::json& j);
nlohmann::json rf_to_json(const ForestModel& model, std::size_t input_dim);
ForestModel rf_from_json(const nlohmann::json& j);

}  // namespace slicesec::classical
