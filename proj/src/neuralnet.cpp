#include "slicesec/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace slicesec::nn {

using nlohmann::json;

namespace {

void kaiming_uniform(Matrix& w, Rng& rng) {
    // gain sqrt(2) for ReLU, fan_in = cols
    double limit = std::sqrt(6.0 / static_cast<double>(w.cols));
    for (auto& x : w.data) x = (rng.next_double() * 2.0 - 1.0) * limit;
}

}  // namespace

MlpModel init_model(std::uint64_t seed) {
    Rng rng(seed);
    MlpModel m;
    kaiming_uniform(m.w1, rng);
    kaiming_uniform(m.w2, rng);
    kaiming_uniform(m.w3, rng);
    return m;
}

FlatWeights flatten(const MlpModel& model) {
    FlatWeights f;
    f.values.reserve(kParamCount);
    auto append = [&](const std::vector<double>& v) {
        f.values.insert(f.values.end(), v.begin(), v.end());
    };
    append(model.w1.data);
    append(model.b1);
    append(model.w2.data);
    append(model.b2);
    append(model.w3.data);
    append(model.b3);
    return f;
}

MlpModel unflatten(const FlatWeights& flat) {
    if (flat.values.size() != kParamCount)
        throw LengthMismatch("unflatten: expected " + std::to_string(kParamCount) +
                             " values, got " + std::to_string(flat.values.size()));
    MlpModel m;
    auto it = flat.values.begin();
    auto take = [&](std::vector<double>& dst) {
        std::copy(it, it + static_cast<long>(dst.size()), dst.begin());
        it += static_cast<long>(dst.size());
    };
    take(m.w1.data);
    take(m.b1);
    take(m.w2.data);
    take(m.b2);
    take(m.w3.data);
    take(m.b3);
    return m;
}

namespace {
constexpr char kWeightsMagic[8] = {'S', 'L', 'C', 'W', 'T', 'S', '0', '1'};
constexpr std::uint32_t kWeightsVersion = 1;
}  // namespace

std::vector<std::uint8_t> flat_to_bytes(const FlatWeights& flat) {
    std::vector<std::uint8_t> out(16 + flat.values.size() * 8);
    std::memcpy(out.data(), kWeightsMagic, 8);
    std::uint32_t version = kWeightsVersion;
    std::uint32_t length = static_cast<std::uint32_t>(flat.values.size());
    std::memcpy(out.data() + 8, &version, 4);
    std::memcpy(out.data() + 12, &length, 4);
    std::memcpy(out.data() + 16, flat.values.data(), flat.values.size() * 8);
    return out;
}

FlatWeights flat_from_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kWeightsMagic, 8) != 0)
        throw Error("flat_from_bytes: bad header");
    std::uint32_t version = 0, length = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    std::memcpy(&length, bytes.data() + 12, 4);
    if (version != kWeightsVersion) throw Error("flat_from_bytes: unsupported version");
    if (bytes.size() != 16 + static_cast<std::size_t>(length) * 8)
        throw LengthMismatch("flat_from_bytes: truncated payload");
    FlatWeights f;
    f.values.resize(length);
    std::memcpy(f.values.data(), bytes.data() + 16, static_cast<std::size_t>(length) * 8);
    return f;
}

namespace {

struct ForwardCache {
    Matrix h1;       // B x 16, post-ReLU
    Matrix dropped;  // B x 16, post-dropout (train) or alias of h1 values (eval)
    Matrix mask;     // B x 16, dropout keep mask scaled by 1/keep
    Matrix h2;       // B x 16, post-ReLU
    Matrix probs;    // B x 2
};

ForwardCache forward_impl(const MlpModel& model, const Matrix& batch, Mode mode, Rng* dropout_rng) {
    if (batch.cols != kInputDim)
        throw ShapeMismatch("forward: batch has " + std::to_string(batch.cols) +
                            " columns, expected " + std::to_string(kInputDim));
    for (double v : batch.data)
        if (!std::isfinite(v)) throw NonFiniteInput("forward: non-finite input value");
    if (mode == Mode::train && dropout_rng == nullptr)
        throw Error("forward: train mode requires a dropout rng");

    std::size_t B = batch.rows;
    ForwardCache cache;
    cache.h1 = Matrix(B, kHiddenDim);
    cache.dropped = Matrix(B, kHiddenDim);
    cache.mask = Matrix(B, kHiddenDim, 1.0);
    cache.h2 = Matrix(B, kHiddenDim);
    cache.probs = Matrix(B, kClassCount);

    const double keep = 1.0 - kDropoutP;
    for (std::size_t r = 0; r < B; ++r) {
        auto x = batch.row(r);
        for (std::size_t i = 0; i < kHiddenDim; ++i) {
            double acc = model.b1[i];
            auto w = model.w1.row(i);
            for (std::size_t j = 0; j < kInputDim; ++j) acc += w[j] * x[j];
            cache.h1(r, i) = acc > 0.0 ? acc : 0.0;
        }
        if (mode == Mode::train) {
            for (std::size_t i = 0; i < kHiddenDim; ++i) {
                // inverted dropout: keep with prob 0.6, scale survivors by 1/0.6
                double scale = dropout_rng->next_bernoulli(keep) ? 1.0 / keep : 0.0;
                cache.mask(r, i) = scale;
                cache.dropped(r, i) = cache.h1(r, i) * scale;
            }
        } else {
            for (std::size_t i = 0; i < kHiddenDim; ++i) cache.dropped(r, i) = cache.h1(r, i);
        }
        for (std::size_t i = 0; i < kHiddenDim; ++i) {
            double acc = model.b2[i];
            auto w = model.w2.row(i);
            for (std::size_t j = 0; j < kHiddenDim; ++j) acc += w[j] * cache.dropped(r, j);
            cache.h2(r, i) = acc > 0.0 ? acc : 0.0;
        }
        double logits[kClassCount];
        for (std::size_t i = 0; i < kClassCount; ++i) {
            double acc = model.b3[i];
            auto w = model.w3.row(i);
            for (std::size_t j = 0; j < kHiddenDim; ++j) acc += w[j] * cache.h2(r, j);
            logits[i] = acc;
        }
        // softmax with max-subtraction
        double mx = std::max(logits[0], logits[1]);
        double e0 = std::exp(logits[0] - mx);
        double e1 = std::exp(logits[1] - mx);
        double z = e0 + e1;
        cache.probs(r, 0) = e0 / z;
        cache.probs(r, 1) = e1 / z;
    }
    return cache;
}

}  // namespace

Matrix forward(const MlpModel& model, const Matrix& batch, Mode mode, Rng* dropout_rng) {
    return forward_impl(model, batch, mode, dropout_rng).probs;
}

LossGrads loss_and_grads(const MlpModel& model, const Matrix& batch, const std::vector<int>& labels,
                         Mode mode, Rng* dropout_rng) {
    if (batch.rows != labels.size())
        throw ShapeMismatch("loss_and_grads: batch rows != label count");
    if (batch.rows == 0) throw EmptyData("loss_and_grads: empty batch");
    ForwardCache cache = forward_impl(model, batch, mode, dropout_rng);

    std::size_t B = batch.rows;
    LossGrads out;
    double inv_b = 1.0 / static_cast<double>(B);

    Matrix dlogits(B, kClassCount);
    for (std::size_t r = 0; r < B; ++r) {
        int y = labels[r] != 0 ? 1 : 0;
        double p = cache.probs(r, static_cast<std::size_t>(y));
        out.loss -= std::log(std::max(p, 1e-300));
        for (std::size_t c = 0; c < kClassCount; ++c)
            dlogits(r, c) = (cache.probs(r, c) - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_b;
    }
    out.loss *= inv_b;

    Matrix dh2(B, kHiddenDim);
    for (std::size_t r = 0; r < B; ++r) {
        for (std::size_t c = 0; c < kClassCount; ++c) {
            double g = dlogits(r, c);
            out.grads.b3[c] += g;
            for (std::size_t j = 0; j < kHiddenDim; ++j) {
                out.grads.w3(c, j) += g * cache.h2(r, j);
                dh2(r, j) += g * model.w3(c, j);
            }
        }
        for (std::size_t j = 0; j < kHiddenDim; ++j)
            if (cache.h2(r, j) <= 0.0) dh2(r, j) = 0.0;  // ReLU gate
    }

    Matrix ddropped(B, kHiddenDim);
    for (std::size_t r = 0; r < B; ++r) {
        for (std::size_t i = 0; i < kHiddenDim; ++i) {
            double g = dh2(r, i);
            out.grads.b2[i] += g;
            for (std::size_t j = 0; j < kHiddenDim; ++j) {
                out.grads.w2(i, j) += g * cache.dropped(r, j);
                ddropped(r, j) += g * model.w2(i, j);
            }
        }
    }

    for (std::size_t r = 0; r < B; ++r) {
        for (std::size_t i = 0; i < kHiddenDim; ++i) {
            double g = ddropped(r, i) * cache.mask(r, i);  // same mask as forward
            if (cache.h1(r, i) <= 0.0) g = 0.0;
            if (g == 0.0) continue;
            out.grads.b1[i] += g;
            auto gw = out.grads.w1.row(i);
            auto x = batch.row(r);
            for (std::size_t j = 0; j < kInputDim; ++j) gw[j] += g * x[j];
        }
    }
    return out;
}

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "SGD" || name == "sgd") return OptimizerKind::sgd;
    if (name == "Adam" || name == "adam") return OptimizerKind::adam;
    if (name == "RMSprop" || name == "rmsprop") return OptimizerKind::rmsprop;
    throw Error("unknown optimizer '" + name + "'");
}

std::string optimizer_to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "SGD";
        case OptimizerKind::adam: return "Adam";
        case OptimizerKind::rmsprop: return "RMSprop";
    }
    return "SGD";
}

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate) {
    if (!(learning_rate > 0.0)) throw Error("make_optimizer: learning rate must be positive");
    OptimizerState s;
    s.kind = kind;
    s.learning_rate = learning_rate;
    if (kind != OptimizerKind::sgd) {
        s.v.assign(kParamCount, 0.0);
        if (kind == OptimizerKind::adam) s.m.assign(kParamCount, 0.0);
    }
    return s;
}

void optimizer_step(OptimizerState& state, MlpModel& model, const Gradients& grads) {
    FlatWeights w = flatten(model);
    MlpModel gm;
    gm.w1 = grads.w1;
    gm.b1 = grads.b1;
    gm.w2 = grads.w2;
    gm.b2 = grads.b2;
    gm.w3 = grads.w3;
    gm.b3 = grads.b3;
    FlatWeights g = flatten(gm);

    state.step_count += 1;
    double lr = state.learning_rate;
    switch (state.kind) {
        case OptimizerKind::sgd:
            for (std::size_t i = 0; i < kParamCount; ++i) w.values[i] -= lr * g.values[i];
            break;
        case OptimizerKind::adam: {
            constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
            double t = static_cast<double>(state.step_count);
            double bc1 = 1.0 - std::pow(beta1, t);
            double bc2 = 1.0 - std::pow(beta2, t);
            for (std::size_t i = 0; i < kParamCount; ++i) {
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g.values[i];
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g.values[i] * g.values[i];
                double mhat = state.m[i] / bc1;
                double vhat = state.v[i] / bc2;
                w.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            break;
        }
        case OptimizerKind::rmsprop: {
            constexpr double alpha = 0.99, eps = 1e-8;
            for (std::size_t i = 0; i < kParamCount; ++i) {
                state.v[i] = alpha * state.v[i] + (1.0 - alpha) * g.values[i] * g.values[i];
                w.values[i] -= lr * g.values[i] / (std::sqrt(state.v[i]) + eps);
            }
            break;
        }
    }
    model = unflatten(w);
}

double evaluate_accuracy(const MlpModel& model, const Matrix& features,
                         const std::vector<int>& labels) {
    if (features.rows == 0) throw EmptyData("evaluate_accuracy: empty data");
    Matrix probs = forward(model, features, Mode::eval);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < features.rows; ++r) {
        int pred = probs(r, 1) >= probs(r, 0) ? 1 : 0;
        if (pred == (labels[r] != 0 ? 1 : 0)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(features.rows);
}

TrainHistory train(MlpModel& model, const Matrix& features, const std::vector<int>& labels,
                   const TrainConfig& config, OptimizerState& opt) {
    if (features.rows == 0) throw EmptyData("train: empty data");
    if (features.rows != labels.size()) throw ShapeMismatch("train: rows != labels");
    if (config.epochs < 1) throw Error("train: epochs must be >= 1");
    if (config.batch_size < 1) throw Error("train: batch_size must be >= 1");

    TrainHistory history;
    Rng shuffle_rng(derive_seed(config.seed, 0x5481));
    Rng dropout_rng(derive_seed(config.seed, 0xd409));

    std::vector<std::size_t> order(features.rows);
    std::iota(order.begin(), order.end(), 0);

    double best_accuracy = -1.0;
    int stalled_epochs = 0;
    std::size_t bs = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::size_t count = std::min(bs, order.size() - start);
            Matrix batch(count, features.cols);
            std::vector<int> batch_y(count);
            for (std::size_t i = 0; i < count; ++i) {
                auto src = features.row(order[start + i]);
                std::copy(src.begin(), src.end(), batch.row(i).begin());
                batch_y[i] = labels[order[start + i]];
            }
            LossGrads lg = loss_and_grads(model, batch, batch_y, Mode::train, &dropout_rng);
            optimizer_step(opt, model, lg.grads);
            loss_sum += lg.loss;
            ++batches;
        }
        EpochStats stats;
        stats.loss = loss_sum / static_cast<double>(batches);
        stats.accuracy = evaluate_accuracy(model, features, labels);
        history.epochs.push_back(stats);

        double improvement = stats.accuracy - best_accuracy;
        best_accuracy = std::max(best_accuracy, stats.accuracy);
        if (improvement < config.early_stop.min_delta) {
            if (++stalled_epochs >= config.early_stop.patience) {
                history.stopped_early = true;
                break;
            }
        } else {
            stalled_epochs = 0;
        }
    }
    return history;
}

Standardizer Standardizer::fit(const Matrix& features) {
    Standardizer s;
    s.mean.assign(features.cols, 0.0);
    s.stddev.assign(features.cols, 0.0);
    for (std::size_t c = 0; c < features.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < features.rows; ++r) mean += features(r, c);
        mean /= static_cast<double>(features.rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < features.rows; ++r) {
            double e = features(r, c) - mean;
            ss += e * e;
        }
        s.mean[c] = mean;
        s.stddev[c] = features.rows > 1 ? std::sqrt(ss / static_cast<double>(features.rows - 1)) : 0.0;
    }
    return s;
}

Matrix Standardizer::transform(const Matrix& features) const {
    if (features.cols != mean.size()) throw ShapeMismatch("Standardizer: column count mismatch");
    Matrix out(features.rows, features.cols);
    for (std::size_t r = 0; r < features.rows; ++r)
        for (std::size_t c = 0; c < features.cols; ++c) {
            double sd = stddev[c];
            out(r, c) = sd > 0.0 ? (features(r, c) - mean[c]) / sd : features(r, c) - mean[c];
        }
    return out;
}

std::vector<double> Standardizer::transform_row(std::span<const double> x) const {
    if (x.size() != mean.size()) throw ShapeMismatch("Standardizer: column count mismatch");
    std::vector<double> out(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
        double sd = stddev[c];
        out[c] = sd > 0.0 ? (x[c] - mean[c]) / sd : x[c] - mean[c];
    }
    return out;
}

json mlp_to_json(const MlpModel& model, const Standardizer& standardizer) {
    json j;
    j["kind"] = "mlp";
    j["version"] = 1;
    j["arch"] = {kInputDim, kHiddenDim, kHiddenDim, kClassCount};
    j["dropout_p"] = kDropoutP;
    j["weights"] = flatten(model).values;
    j["standardizer"]["mean"] = standardizer.mean;
    j["standardizer"]["stddev"] = standardizer.stddev;
    return j;
}

std::pair<MlpModel, Standardizer> mlp_from_json(const json& j) {
    if (j.at("kind") != "mlp") throw Error("mlp_from_json: wrong kind");
    FlatWeights f;
    f.values = j.at("weights").get<std::vector<double>>();
    Standardizer s;
    s.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    s.stddev = j.at("standardizer").at("stddev").get<std::vector<double>>();
    if (s.mean.size() != kInputDim || s.stddev.size() != kInputDim)
        throw Error("mlp_from_json: standardizer dimension mismatch");
    return {unflatten(f), s};
}

}  // namespace slicesec::nn
