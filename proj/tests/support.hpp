#pragma once

// shared helpers for the test suites; oracles live here or in the test files,
// never in the library

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slicesec/matrix.hpp"
#include "slicesec/util.hpp"

namespace testsupport {

inline std::filesystem::path make_temp_dir(const std::string& tag) {
    static std::uint64_t counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("slicesec_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

struct LabeledData {
    slicesec::Matrix features;
    std::vector<int> labels;
};

// Two-class Gaussian data: class 1 shifted by `shift` on the first
// `informative` dimensions, unit variance everywhere.
inline LabeledData two_gaussian_data(std::size_t rows, std::size_t dims, std::size_t informative,
                                     double shift, std::uint64_t seed) {
    slicesec::Rng rng(seed);
    LabeledData d;
    d.features = slicesec::Matrix(rows, dims);
    d.labels.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        int y = rng.next_bernoulli(0.5) ? 1 : 0;
        d.labels[r] = y;
        for (std::size_t c = 0; c < dims; ++c) {
            double mu = (y == 1 && c < informative) ? shift : 0.0;
            d.features(r, c) = mu + rng.next_normal();
        }
    }
    return d;
}

// Perfectly separable data: informative dimensions sit in disjoint bands
// ([1, 2] for class 1, [-2, -1] for class 0), the rest is unit noise.
inline LabeledData separable_data(std::size_t rows, std::size_t dims, std::size_t informative,
                                  std::uint64_t seed) {
    slicesec::Rng rng(seed);
    LabeledData d;
    d.features = slicesec::Matrix(rows, dims);
    d.labels.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        int y = rng.next_bernoulli(0.5) ? 1 : 0;
        d.labels[r] = y;
        for (std::size_t c = 0; c < dims; ++c) {
            if (c < informative) {
                double band = 1.0 + rng.next_double();
                d.features(r, c) = y == 1 ? band : -band;
            } else {
                d.features(r, c) = rng.next_normal();
            }
        }
    }
    return d;
}

// pairwise Mann-Whitney AUC oracle, ties counted half
inline double auc_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::uint64_t wins2 = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        ++pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j])
                wins2 += 2;
            else if (scores[i] == scores[j])
                wins2 += 1;
        }
    }
    for (int y : labels) neg += (y == 0);
    return static_cast<double>(wins2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// dense symmetric eigensolver (cyclic Jacobi) for small oracle matrices
inline void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& eigenvalues,
                         std::vector<double>& eigenvectors /* column-major */) {
    eigenvectors.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigenvectors[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a[p * n + q]) < 1e-300) continue;
                double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = eigenvectors[k * n + p], vkq = eigenvectors[k * n + q];
                    eigenvectors[k * n + p] = c * vkp - s * vkq;
                    eigenvectors[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i * n + i];
}

}  // namespace testsupport
