#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slicesec/analytics.hpp"
#include "support.hpp"

using namespace slicesec;
using namespace slicesec::analytics;

TEST_CASE("confusion metrics") {
    SUBCASE("perfect predictions on a 95/5 split") {
        std::vector<int> labels(100, 0);
        for (int i = 0; i < 5; ++i) labels[i] = 1;
        auto m = confusion_metrics(labels, labels);
        CHECK(m.accuracy == 1.0);
        CHECK(m.f1 == 1.0);
        CHECK(m.counts.tp == 5);
        CHECK(m.counts.tn == 95);
    }
    SUBCASE("TP=2 FP=1 FN=1 TN=0") {
        std::vector<int> preds = {1, 1, 1, 0};
        std::vector<int> labels = {1, 1, 0, 1};
        auto m = confusion_metrics(preds, labels);
        CHECK(m.precision == doctest::Approx(2.0 / 3.0));
        CHECK(m.recall == doctest::Approx(2.0 / 3.0));
        CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
        CHECK(m.accuracy == doctest::Approx(0.5));
    }
    SUBCASE("all-benign predictions on all-benign labels") {
        std::vector<int> zeros(10, 0);
        auto m = confusion_metrics(zeros, zeros);
        CHECK(m.accuracy == 1.0);
        CHECK_FALSE(m.precision_defined);
        CHECK(m.precision == 0.0);
        CHECK_FALSE(m.recall_defined);
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(confusion_metrics({1}, {1, 0}), LengthMismatch);
    }
}

TEST_CASE("roc curve and auc") {
    SUBCASE("perfect separation") {
        auto c = roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
        CHECK(c.auc == 1.0);
        CHECK(c.points.front() == std::pair{0.0, 0.0});
        CHECK(c.points.back() == std::pair{1.0, 1.0});
    }
    SUBCASE("all scores identical") {
        auto c = roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
        CHECK(c.auc == 0.5);
        CHECK(c.points.size() == 2);  // single diagonal step
    }
    SUBCASE("worked three-point example") {
        // one win, one loss over the two (pos, neg) pairs
        auto c = roc_auc({0.9, 0.8, 0.3}, {1, 0, 1});
        CHECK(c.auc == 0.5);
    }
    SUBCASE("single class rejected") {
        CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), SingleClass);
    }
    SUBCASE("matches pairwise oracle exactly on random inputs") {
        Rng rng(2024);
        for (int trial = 0; trial < 300; ++trial) {
            std::size_t n = 2 + rng.next_below(198);
            std::vector<double> scores(n);
            std::vector<int> labels(n);
            bool tie_heavy = rng.next_bernoulli(0.5);
            for (std::size_t i = 0; i < n; ++i) {
                scores[i] = tie_heavy ? static_cast<double>(rng.next_below(10)) / 10.0
                                      : rng.next_double();
                labels[i] = rng.next_bernoulli(0.4) ? 1 : 0;
            }
            std::uint64_t pos = 0;
            for (int y : labels) pos += y;
            if (pos == 0 || pos == n) continue;
            auto c = roc_auc(scores, labels);
            double oracle = testsupport::auc_bruteforce(scores, labels);
            CHECK(c.auc == oracle);  // exact, both are integer ratios
        }
    }
    SUBCASE("invariant under strictly increasing score transforms") {
        Rng rng(7);
        std::vector<double> scores(80);
        std::vector<int> labels(80);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            scores[i] = static_cast<double>(rng.next_below(12)) / 12.0;
            labels[i] = rng.next_bernoulli(0.3) ? 1 : 0;
        }
        labels[0] = 1;
        labels[1] = 0;
        auto base = roc_auc(scores, labels);
        std::vector<double> transformed(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i)
            transformed[i] = std::exp(3.0 * scores[i]) + 1.0;
        auto t = roc_auc(transformed, labels);
        CHECK(base.auc == t.auc);
        REQUIRE(base.points.size() == t.points.size());
        for (std::size_t i = 0; i < base.points.size(); ++i) {
            CHECK(base.points[i].first == t.points[i].first);
            CHECK(base.points[i].second == t.points[i].second);
        }
    }
    SUBCASE("curve coordinates are monotone") {
        Rng rng(99);
        std::vector<double> scores(60);
        std::vector<int> labels(60);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            scores[i] = rng.next_double();
            labels[i] = rng.next_bernoulli(0.5) ? 1 : 0;
        }
        labels[0] = 1;
        labels[1] = 0;
        auto c = roc_auc(scores, labels);
        for (std::size_t i = 1; i < c.points.size(); ++i) {
            CHECK(c.points[i].first >= c.points[i - 1].first);
            CHECK(c.points[i].second >= c.points[i - 1].second);
        }
    }
}

TEST_CASE("cosine divergence") {
    std::vector<double> u = {1.0, 0.0};
    SUBCASE("identical vectors") {
        CHECK(cosine_divergence(u, u) == 0.0);
    }
    SUBCASE("orthogonal vectors") {
        std::vector<double> v = {0.0, 2.0};
        CHECK(cosine_divergence(u, v) == doctest::Approx(1.0));
    }
    SUBCASE("worked example") {
        std::vector<double> v = {1.0, 1.0};
        CHECK(cosine_divergence(u, v) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("positive scaling gives 0, negative gives 2") {
        std::vector<double> a = {0.3, -0.7, 2.0};
        std::vector<double> b = a, c = a;
        for (auto& x : b) x *= 4.5;
        for (auto& x : c) x *= -2.0;
        CHECK(cosine_divergence(a, b) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(cosine_divergence(a, c) == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("zero vector rejected") {
        std::vector<double> z = {0.0, 0.0};
        CHECK_THROWS_AS(cosine_divergence(u, z), ZeroVector);
    }
}

TEST_CASE("one-way anova") {
    SUBCASE("identical group means give F=0, p=1") {
        std::vector<std::vector<double>> groups = {{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
        auto r = anova_oneway(groups);
        CHECK(r.f_value == doctest::Approx(0.0));
        CHECK(r.p_value == doctest::Approx(1.0));
    }
    SUBCASE("reference F and p") {
        double p = f_sf(1.13519, 3.0, 24.0);
        CHECK(std::fabs(p - 0.35479) < 0.0005);
    }
    SUBCASE("anova result carries the distribution p through") {
        // groups engineered to land near the reference F at df (3, 24)
        Rng rng(40);
        std::vector<std::vector<double>> groups(4);
        for (auto& g : groups)
            for (int i = 0; i < 7; ++i) g.push_back(rng.next_normal());
        auto r = anova_oneway(groups);
        CHECK(r.df_model == 3);
        CHECK(r.df_error == 24);
        CHECK(r.p_value == doctest::Approx(f_sf(r.f_value, 3, 24)));
    }
    SUBCASE("r-square from reference sums of squares") {
        double r2 = 0.00149 / 0.01196;
        CHECK(std::fabs(r2 - 0.12427) < 0.003);
    }
    SUBCASE("sum-of-squares additivity on random groups") {
        Rng rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            std::size_t k = 2 + rng.next_below(5);
            std::vector<std::vector<double>> groups(k);
            for (auto& g : groups) {
                std::size_t n = 2 + rng.next_below(20);
                for (std::size_t i = 0; i < n; ++i) g.push_back(rng.next_normal() * 3.0 + 1.0);
            }
            auto r = anova_oneway(groups);
            CHECK(std::fabs(r.ss_model + r.ss_error - r.ss_total) <=
                  1e-9 * std::max(1.0, std::fabs(r.ss_total)));
            CHECK(r.df_model + r.df_error == r.df_total);
            CHECK(r.p_value >= 0.0);
            CHECK(r.p_value <= 1.0);
            CHECK(r.r_square == doctest::Approx(r.ss_model / r.ss_total));
        }
    }
    SUBCASE("p decreases as F grows at fixed df") {
        double prev = 1.0;
        for (double f = 0.25; f < 20.0; f *= 1.7) {
            double p = f_sf(f, 3.0, 24.0);
            CHECK(p < prev);
            prev = p;
        }
    }
    SUBCASE("zero within-group variance reports F undefined") {
        std::vector<std::vector<double>> groups = {{1.0, 1.0}, {2.0, 2.0}};
        auto r = anova_oneway(groups);
        CHECK_FALSE(r.f_defined);
        CHECK(r.ss_error == 0.0);
        CHECK(r.ss_total == r.ss_model);
    }
    SUBCASE("degenerate shapes rejected") {
        CHECK_THROWS(anova_oneway({{1.0}}));
        CHECK_THROWS(anova_oneway({{1.0}, {2.0}}));  // N == group count
    }
}

TEST_CASE("descriptive statistics") {
    SUBCASE("single sample") {
        auto d = describe({5.0});
        CHECK(d.mean == 5.0);
        CHECK(d.min == 5.0);
        CHECK(d.max == 5.0);
        CHECK(d.median == 5.0);
        CHECK_FALSE(d.stddev_defined);
        CHECK(d.stddev == 0.0);
    }
    SUBCASE("hand-computed four values") {
        auto d = describe({1.0, 2.0, 3.0, 4.0});
        CHECK(d.mean == doctest::Approx(2.5));
        CHECK(d.median == doctest::Approx(2.5));
        CHECK(d.stddev == doctest::Approx(1.29099).epsilon(1e-5));
        CHECK(d.q1 == doctest::Approx(1.75));
        CHECK(d.q3 == doctest::Approx(3.25));
        CHECK(d.se_mean == doctest::Approx(d.stddev / 2.0));
    }
    SUBCASE("seven divergence samples reproduce the reference mean and standard error") {
        // engineered to mean 0.00446, sample sd 0.02164 (SE = sd/sqrt(7) = 0.00818)
        std::vector<double> z = {-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5};
        double zsd = std::sqrt((2.25 + 1.0 + 0.25 + 0.0 + 0.25 + 1.0 + 2.25) / 6.0);
        std::vector<double> samples;
        for (double x : z) samples.push_back(0.00446 + 0.02164 * x / zsd);
        auto d = describe(samples);
        CHECK(d.mean == doctest::Approx(0.00446).epsilon(1e-9));
        CHECK(d.stddev == doctest::Approx(0.02164).epsilon(1e-9));
        CHECK(std::fabs(d.se_mean - 0.00818) < 5e-5);
    }
}

TEST_CASE("regularized incomplete beta") {
    CHECK(regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0);
    CHECK(regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0);
    // I_x(1,1) = x
    for (double x : {0.1, 0.37, 0.5, 0.93})
        CHECK(regularized_incomplete_beta(x, 1.0, 1.0) == doctest::Approx(x).epsilon(1e-12));
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    CHECK(regularized_incomplete_beta(0.3, 2.5, 4.0) ==
          doctest::Approx(1.0 - regularized_incomplete_beta(0.7, 4.0, 2.5)).epsilon(1e-12));
}

TEST_CASE("pca2") {
    SUBCASE("rank-1 line y=x") {
        Rng rng(5);
        Matrix data(50, 2);
        for (std::size_t r = 0; r < 50; ++r) {
            double x = rng.next_normal();
            data(r, 0) = x;
            data(r, 1) = 3.0 * x + 2.0;  // same direction after standardization
        }
        auto p = pca2(data);
        double inv_sqrt2 = 1.0 / std::sqrt(2.0);
        CHECK(std::fabs(p.components[0][0]) == doctest::Approx(inv_sqrt2).epsilon(1e-9));
        CHECK(std::fabs(p.components[0][1]) == doctest::Approx(inv_sqrt2).epsilon(1e-9));
        CHECK(p.explained_variance[1] == doctest::Approx(0.0).epsilon(1e-8));
        CHECK(p.explained_variance[0] >= p.explained_variance[1]);
    }
    SUBCASE("isotropic gaussian has balanced variances") {
        Rng rng(123);
        Matrix data(10000, 2);
        for (auto& v : data.data) v = rng.next_normal();
        auto p = pca2(data);
        double ratio = p.explained_variance[0] / p.explained_variance[1];
        CHECK(ratio >= 0.8);
        CHECK(ratio <= 1.25);
    }
    SUBCASE("matches dense eigensolver oracle on 3 features") {
        Rng rng(77);
        Matrix data(40, 3);
        for (std::size_t r = 0; r < 40; ++r) {
            double a = rng.next_normal(), b = rng.next_normal(), c = rng.next_normal();
            data(r, 0) = a + 0.4 * b;
            data(r, 1) = b;
            data(r, 2) = 0.2 * a + c * 0.5;
        }
        auto p = pca2(data);

        // oracle: standardize, covariance, jacobi
        std::size_t n = data.rows, d = data.cols;
        std::vector<double> mean(d, 0.0), sd(d, 0.0);
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t r = 0; r < n; ++r) mean[c] += data(r, c);
            mean[c] /= static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r) {
                double e = data(r, c) - mean[c];
                sd[c] += e * e;
            }
            sd[c] = std::sqrt(sd[c] / static_cast<double>(n - 1));
        }
        std::vector<double> cov(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t r = 0; r < n; ++r)
                    acc += (data(r, i) - mean[i]) / sd[i] * (data(r, j) - mean[j]) / sd[j];
                cov[i * d + j] = acc / static_cast<double>(n - 1);
            }
        std::vector<double> evals, evecs;
        testsupport::jacobi_eigen(cov, d, evals, evecs);
        // order eigenpairs descending
        std::vector<std::size_t> order = {0, 1, 2};
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return evals[a] > evals[b]; });
        for (int comp = 0; comp < 2; ++comp) {
            CHECK(p.explained_variance[comp] ==
                  doctest::Approx(evals[order[comp]]).epsilon(1e-8));
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                dot += p.components[comp][i] * evecs[i * d + order[comp]];
            CHECK(std::fabs(dot) == doctest::Approx(1.0).epsilon(1e-8));
        }
    }
    SUBCASE("row permutation leaves the projection set invariant") {
        Rng rng(31);
        Matrix data(30, 4);
        for (auto& v : data.data) v = rng.next_normal();
        auto p1 = pca2(data);
        Matrix permuted(30, 4);
        for (std::size_t r = 0; r < 30; ++r)
            for (std::size_t c = 0; c < 4; ++c) permuted(r, c) = data(29 - r, c);
        auto p2 = pca2(permuted);
        for (int comp = 0; comp < 2; ++comp) {
            double dot = 0.0;
            for (std::size_t i = 0; i < 4; ++i)
                dot += p1.components[comp][i] * p2.components[comp][i];
            CHECK(std::fabs(dot) == doctest::Approx(1.0).epsilon(1e-8));
        }
    }
    SUBCASE("orthonormal components") {
        Rng rng(13);
        Matrix data(25, 5);
        for (auto& v : data.data) v = rng.next_normal();
        auto p = pca2(data);
        double n0 = 0.0, n1 = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            n0 += p.components[0][i] * p.components[0][i];
            n1 += p.components[1][i] * p.components[1][i];
            dot += p.components[0][i] * p.components[1][i];
        }
        CHECK(n0 == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(n1 == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(std::fabs(dot) < 1e-8);
    }
    SUBCASE("degenerate data rejected") {
        Matrix constant(5, 3, 1.0);
        CHECK_THROWS_AS(pca2(constant), DegenerateData);
        Matrix tiny(2, 3);
        CHECK_THROWS_AS(pca2(tiny), DegenerateData);
    }
}
