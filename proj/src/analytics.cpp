#include "slicesec/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slicesec::analytics {

EvalMetrics confusion_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw LengthMismatch("confusion_metrics: predictions and labels differ in length");
    if (predictions.empty()) throw LengthMismatch("confusion_metrics: empty input");

    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        bool p = predictions[i] != 0;
        bool y = labels[i] != 0;
        if (p && y)
            ++c.tp;
        else if (!p && !y)
            ++c.tn;
        else if (p && !y)
            ++c.fp;
        else
            ++c.fn;
    }

    EvalMetrics m;
    m.counts = c;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    } else {
        m.precision_defined = false;
    }
    if (c.tp + c.fn > 0) {
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    } else {
        m.recall_defined = false;
    }
    if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
        m.f1_defined = false;
    }
    return m;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw LengthMismatch("roc_auc: scores and labels differ in length");
    std::uint64_t pos = 0, neg = 0;
    for (int y : labels) (y != 0 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw SingleClass("roc_auc: both classes required");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    std::uint64_t tp = 0, fp = 0;
    // integer trapezoid accumulator: sum of dFP * (TP_prev + TP_cur)
    std::uint64_t area2 = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        double s = scores[order[i]];
        std::uint64_t tp_prev = tp, fp_prev = fp;
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] != 0 ? tp : fp)++;
            ++i;
        }
        area2 += (fp - fp_prev) * (tp_prev + tp);
        curve.points.emplace_back(static_cast<double>(fp) / static_cast<double>(neg),
                                  static_cast<double>(tp) / static_cast<double>(pos));
    }
    curve.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return curve;
}

double cosine_divergence(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw LengthMismatch("cosine_divergence: length mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw ZeroVector("cosine_divergence: zero vector");
    // rounding can push |cos| past 1; clamp so the result stays in [0, 2]
    double cos = std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
    return 1.0 - cos;
}

namespace {

// Continued fraction for I_x(a,b), modified Lentz iteration.
double betacf(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kTol = 1e-10;
    constexpr int kMaxIter = 10000;

    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kTol) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error("regularized_incomplete_beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double f_sf(double f, double df1, double df2) {
    if (f <= 0.0) return 1.0;
    // P(F > f) = I_{df2/(df2 + df1 f)}(df2/2, df1/2)
    double x = df2 / (df2 + df1 * f);
    return regularized_incomplete_beta(x, df2 / 2.0, df1 / 2.0);
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw Error("anova_oneway: at least two groups required");
    std::size_t total_n = 0;
    for (const auto& g : groups) {
        if (g.empty()) throw Error("anova_oneway: empty group");
        total_n += g.size();
    }
    if (total_n <= groups.size()) throw Error("anova_oneway: total N must exceed group count");

    double grand_sum = 0.0;
    std::vector<double> means(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        double s = std::accumulate(groups[i].begin(), groups[i].end(), 0.0);
        means[i] = s / static_cast<double>(groups[i].size());
        grand_sum += s;
    }
    double grand_mean = grand_sum / static_cast<double>(total_n);

    AnovaResult r;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        double d = means[i] - grand_mean;
        r.ss_model += static_cast<double>(groups[i].size()) * d * d;
        for (double y : groups[i]) {
            double e = y - means[i];
            r.ss_error += e * e;
        }
    }
    r.ss_total = r.ss_model + r.ss_error;
    r.df_model = static_cast<int>(groups.size()) - 1;
    r.df_error = static_cast<int>(total_n - groups.size());
    r.df_total = r.df_model + r.df_error;
    r.ms_model = r.ss_model / r.df_model;
    r.ms_error = r.ss_error / r.df_error;
    r.r_square = r.ss_total > 0.0 ? r.ss_model / r.ss_total : 0.0;

    if (r.ss_error == 0.0) {
        r.f_defined = false;
        r.f_value = std::numeric_limits<double>::quiet_NaN();
        r.p_value = std::numeric_limits<double>::quiet_NaN();
    } else {
        r.f_value = r.ms_model / r.ms_error;
        r.p_value = f_sf(r.f_value, r.df_model, r.df_error);
    }
    return r;
}

namespace {

// type-7 quantile: linear interpolation between order statistics
double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.size() == 1) return sorted[0];
    double h = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Descriptives describe(std::vector<double> samples) {
    if (samples.empty()) throw Error("describe: empty sample");
    Descriptives d;
    d.n = samples.size();
    d.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(d.n);
    if (d.n > 1) {
        double ss = 0.0;
        for (double x : samples) {
            double e = x - d.mean;
            ss += e * e;
        }
        d.stddev = std::sqrt(ss / static_cast<double>(d.n - 1));
    } else {
        d.stddev_defined = false;
    }
    d.se_mean = d.stddev / std::sqrt(static_cast<double>(d.n));
    std::sort(samples.begin(), samples.end());
    d.min = samples.front();
    d.max = samples.back();
    d.q1 = quantile_sorted(samples, 0.25);
    d.median = quantile_sorted(samples, 0.5);
    d.q3 = quantile_sorted(samples, 0.75);
    return d;
}

namespace {

struct StandardizedData {
    Matrix z;                       // n x d, constant columns zeroed
    std::vector<double> means;
    std::vector<double> stds;       // 0 for constant columns
    std::vector<std::size_t> live;  // indices of non-constant columns
};

StandardizedData standardize_columns(const Matrix& data) {
    StandardizedData s;
    s.means.assign(data.cols, 0.0);
    s.stds.assign(data.cols, 0.0);
    s.z = Matrix(data.rows, data.cols);
    for (std::size_t c = 0; c < data.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < data.rows; ++r) mean += data(r, c);
        mean /= static_cast<double>(data.rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < data.rows; ++r) {
            double e = data(r, c) - mean;
            ss += e * e;
        }
        double sd = std::sqrt(ss / static_cast<double>(data.rows - 1));
        s.means[c] = mean;
        if (sd > 0.0) {
            s.stds[c] = sd;
            s.live.push_back(c);
            for (std::size_t r = 0; r < data.rows; ++r) s.z(r, c) = (data(r, c) - mean) / sd;
        }
    }
    return s;
}

// power iteration on the (live-column) covariance matrix
std::pair<std::vector<double>, double> dominant_eigenvector(const std::vector<double>& cov,
                                                            std::size_t d, Rng& rng) {
    constexpr double kTol = 1e-10;
    constexpr int kMaxIter = 10000;
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.next_normal();
    }
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;

    std::vector<double> next(d);
    for (int it = 0; it < kMaxIter; ++it) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += cov[i * d + j] * v[j];
            next[i] = s;
        }
        double n2 = 0.0;
        for (double x : next) n2 += x * x;
        n2 = std::sqrt(n2);
        if (n2 == 0.0) break;  // vector annihilated; leave v as is
        for (auto& x : next) x /= n2;
        // direction change, sign-insensitive
        double dplus = 0.0, dminus = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double a = next[i] - v[i];
            double b = next[i] + v[i];
            dplus += a * a;
            dminus += b * b;
        }
        v = next;
        if (std::min(std::sqrt(dplus), std::sqrt(dminus)) < kTol) break;
    }
    double lambda = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += cov[i * d + j] * v[j];
        lambda += v[i] * s;
    }
    return {v, lambda};
}

void fix_sign(std::vector<double>& v) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
    if (v[arg] < 0.0)
        for (auto& x : v) x = -x;
}

}  // namespace

Pca2Projection pca2(const Matrix& data) {
    if (data.rows < 3) throw DegenerateData("pca2: need at least 3 rows");
    if (data.cols < 2) throw DegenerateData("pca2: need at least 2 columns");

    StandardizedData s = standardize_columns(data);
    std::size_t d = s.live.size();
    if (d < 2) throw DegenerateData("pca2: fewer than 2 non-constant columns");

    // covariance of standardized live columns (n-1 denominator)
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < data.rows; ++r)
                acc += s.z(r, s.live[i]) * s.z(r, s.live[j]);
            acc /= static_cast<double>(data.rows - 1);
            cov[i * d + j] = acc;
            cov[j * d + i] = acc;
        }
    }

    Rng rng(0x9c648e2cULL);  // internal fixed seed; pca2 is deterministic
    Pca2Projection out;
    out.feature_means = s.means;
    out.feature_stds = s.stds;

    std::vector<double> first_live;
    for (int comp = 0; comp < 2; ++comp) {
        auto [v, lambda] = dominant_eigenvector(cov, d, rng);
        if (comp == 0) {
            first_live = v;
        } else {
            // re-orthogonalize against the first component
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += v[i] * first_live[i];
            double norm = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                v[i] -= dot * first_live[i];
                norm += v[i] * v[i];
            }
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (auto& x : v) x /= norm;
        }
        std::vector<double> full(data.cols, 0.0);
        for (std::size_t i = 0; i < d; ++i) full[s.live[i]] = v[i];
        fix_sign(full);
        out.components[comp] = std::move(full);
        out.explained_variance[comp] = std::max(lambda, 0.0);
        // deflate
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov[i * d + j] -= lambda * v[i] * v[j];
    }

    out.projected = Matrix(data.rows, 2);
    for (std::size_t r = 0; r < data.rows; ++r) {
        for (int comp = 0; comp < 2; ++comp) {
            double acc = 0.0;
            for (std::size_t c : s.live) acc += s.z(r, c) * out.components[comp][c];
            out.projected(r, comp) = acc;
        }
    }
    return out;
}

}  // namespace slicesec::analytics
