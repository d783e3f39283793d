#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "slicesec/matrix.hpp"
#include "slicesec/util.hpp"

namespace slicesec::analytics {

struct LengthMismatch : Error {
    using Error::Error;
};
struct SingleClass : Error {
    using Error::Error;
};
struct DegenerateData : Error {
    using Error::Error;
};
struct ZeroVector : Error {
    using Error::Error;
};

struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::uint64_t total() const { return tp + tn + fp + fn; }
};

struct EvalMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // zero-denominator ratios are reported as 0 with the flag cleared
    bool precision_defined = true;
    bool recall_defined = true;
    bool f1_defined = true;
    ConfusionCounts counts;
};

EvalMetrics confusion_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
    double auc = 0.0;
};

// Threshold sweep over distinct scores descending; tied scores collapse into
// one step. AUC accumulates the trapezoid sum in integers so it equals the
// tie-adjusted Mann-Whitney statistic exactly.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Pca2Projection {
    std::array<std::vector<double>, 2> components;  // orthonormal, length d
    std::array<double, 2> explained_variance{};
    Matrix projected;  // n x 2
    std::vector<double> feature_means;
    std::vector<double> feature_stds;  // sample stddev; 0 marks a dropped constant column
};

// Standardize, form the covariance matrix, extract the top two eigenvectors
// by power iteration with deflation. Sign fixed so the largest-magnitude
// coordinate is positive.
Pca2Projection pca2(const Matrix& data);

// 1 - cosine similarity, in [0, 2].
double cosine_divergence(std::span<const double> u, std::span<const double> v);

struct AnovaResult {
    int df_model = 0, df_error = 0, df_total = 0;
    double ss_model = 0.0, ss_error = 0.0, ss_total = 0.0;
    double ms_model = 0.0, ms_error = 0.0;
    double f_value = 0.0;
    double p_value = 0.0;
    double r_square = 0.0;
    bool f_defined = true;  // false when ss_error == 0 (F undefined)
};

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

struct Descriptives {
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1); 0 with flag cleared at n == 1
    double se_mean = 0.0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    bool stddev_defined = true;
};

Descriptives describe(std::vector<double> samples);

// Regularized incomplete beta I_x(a, b) via continued fraction
// (modified Lentz), absolute tolerance 1e-10.
double regularized_incomplete_beta(double x, double a, double b);

// Upper tail P(F > f) for the F distribution with (df1, df2) degrees of freedom.
double f_sf(double f, double df1, double df2);

}  // namespace slicesec::analytics
