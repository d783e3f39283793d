#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicesec/matrix.hpp"
#include "slicesec/util.hpp"

namespace slicesec::nn {

struct ShapeMismatch : Error {
    using Error::Error;
};
struct NonFiniteInput : Error {
    using Error::Error;
};
struct LengthMismatch : Error {
    using Error::Error;
};
struct EmptyData : Error {
    using Error::Error;
};

inline constexpr std::size_t kInputDim = 78;
inline constexpr std::size_t kHiddenDim = 16;
inline constexpr std::size_t kClassCount = 2;
inline constexpr double kDropoutP = 0.4;
// 16*78 + 16 + 16*16 + 16 + 2*16 + 2
inline constexpr std::size_t kParamCount =
    kHiddenDim * kInputDim + kHiddenDim + kHiddenDim * kHiddenDim + kHiddenDim +
    kClassCount * kHiddenDim + kClassCount;

struct MlpModel {
    Matrix w1{kHiddenDim, kInputDim};
    std::vector<double> b1 = std::vector<double>(kHiddenDim, 0.0);
    Matrix w2{kHiddenDim, kHiddenDim};
    std::vector<double> b2 = std::vector<double>(kHiddenDim, 0.0);
    Matrix w3{kClassCount, kHiddenDim};
    std::vector<double> b3 = std::vector<double>(kClassCount, 0.0);

    bool operator==(const MlpModel&) const = default;
};

// Kaiming-uniform weights for the ReLU stack, zero biases.
MlpModel init_model(std::uint64_t seed);

struct FlatWeights {
    std::vector<double> values;  // length kParamCount, layout W1,b1,W2,b2,W3,b3

    bool operator==(const FlatWeights&) const = default;
};

FlatWeights flatten(const MlpModel& model);
MlpModel unflatten(const FlatWeights& flat);

// binary form: 16-byte header (magic, version, length) + little-endian f64s
std::vector<std::uint8_t> flat_to_bytes(const FlatWeights& flat);
FlatWeights flat_from_bytes(const std::vector<std::uint8_t>& bytes);

enum class Mode { train, eval };

// Probabilities [B x 2]; train mode applies inverted dropout after the first
// hidden layer using dropout_rng (required in train mode).
Matrix forward(const MlpModel& model, const Matrix& batch, Mode mode, Rng* dropout_rng = nullptr);

struct Gradients {
    Matrix w1{kHiddenDim, kInputDim};
    std::vector<double> b1 = std::vector<double>(kHiddenDim, 0.0);
    Matrix w2{kHiddenDim, kHiddenDim};
    std::vector<double> b2 = std::vector<double>(kHiddenDim, 0.0);
    Matrix w3{kClassCount, kHiddenDim};
    std::vector<double> b3 = std::vector<double>(kClassCount, 0.0);
};

struct LossGrads {
    double loss = 0.0;
    Gradients grads;
};

// Mean softmax cross-entropy plus backprop gradients; the backward pass
// reuses the forward dropout mask.
LossGrads loss_and_grads(const MlpModel& model, const Matrix& batch, const std::vector<int>& labels,
                         Mode mode, Rng* dropout_rng = nullptr);

enum class OptimizerKind { sgd, adam, rmsprop };

OptimizerKind optimizer_from_string(const std::string& name);
std::string optimizer_to_string(OptimizerKind kind);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.001;
    std::vector<double> m;  // Adam first moment
    std::vector<double> v;  // Adam second moment / RMSprop square average
    std::uint64_t step_count = 0;
};

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate);

// SGD: w -= lr*g. Adam: beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected.
// RMSprop: alpha=0.99, eps=1e-8, no momentum.
void optimizer_step(OptimizerState& state, MlpModel& model, const Gradients& grads);

struct EarlyStop {
    int patience = 3;
    double min_delta = 1e-3;
};

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    EarlyStop early_stop;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double loss = 0.0;      // mean over mini-batches
    double accuracy = 0.0;  // eval-mode full pass over the training data
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    bool stopped_early = false;
};

TrainHistory train(MlpModel& model, const Matrix& features, const std::vector<int>& labels,
                   const TrainConfig& config, OptimizerState& opt);

double evaluate_accuracy(const MlpModel& model, const Matrix& features,
                         const std::vector<int>& labels);

// per-feature z-score; constant features pass through unscaled
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Standardizer fit(const Matrix& features);
    Matrix transform(const Matrix& features) const;
    std::vector<double> transform_row(std::span<const double> x) const;
};

// serving bundle: architecture tag + flat weights + standardizer
nlohmann::json mlp_to_json(const MlpModel& model, const Standardizer& standardizer);
std::pair<MlpModel, Standardizer> mlp_from_json(const nlohmann::json& j);

}  // namespace slicesec::nn
