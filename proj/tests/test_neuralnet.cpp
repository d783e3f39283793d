#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slicesec/neuralnet.hpp"
#include "support.hpp"

using namespace slicesec;
using namespace slicesec::nn;

namespace {

Matrix random_batch(std::size_t rows, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, kInputDim);
    for (auto& v : m.data) v = rng.next_normal();
    return m;
}

double loss_at(const MlpModel& base, const Matrix& batch, const std::vector<int>& labels,
               std::size_t param, double value) {
    FlatWeights flat = flatten(base);
    flat.values[param] = value;
    MlpModel perturbed = unflatten(flat);
    return loss_and_grads(perturbed, batch, labels, Mode::eval).loss;
}

}  // namespace

TEST_CASE("forward pass") {
    SUBCASE("all-zero model is indifferent") {
        MlpModel zero;
        Matrix batch = random_batch(5, 1);
        Matrix probs = forward(zero, batch, Mode::eval);
        for (std::size_t r = 0; r < 5; ++r) {
            CHECK(probs(r, 0) == doctest::Approx(0.5));
            CHECK(probs(r, 1) == doctest::Approx(0.5));
        }
    }
    SUBCASE("batch of 32 produces output shaped (32, 2)") {
        MlpModel model = init_model(7);
        Matrix probs = forward(model, random_batch(32, 2), Mode::eval);
        CHECK(probs.rows == 32);
        CHECK(probs.cols == 2);
    }
    SUBCASE("rows sum to one") {
        MlpModel model = init_model(11);
        Matrix probs = forward(model, random_batch(20, 3), Mode::eval);
        for (std::size_t r = 0; r < probs.rows; ++r) {
            CHECK(std::fabs(probs(r, 0) + probs(r, 1) - 1.0) < 1e-9);
            CHECK(probs(r, 0) >= 0.0);
            CHECK(probs(r, 1) <= 1.0);
        }
    }
    SUBCASE("hand-computed single active path") {
        // route x[0] through hidden unit 0 twice, then weight a on the
        // malignant logit: p(malignant) = sigmoid(a * x0) for x0 > 0
        MlpModel m;
        m.w1(0, 0) = 1.0;
        m.w2(0, 0) = 1.0;
        double a = 0.8;
        m.w3(1, 0) = a;
        Matrix batch(1, kInputDim);
        batch(0, 0) = 1.7;
        Matrix probs = forward(m, batch, Mode::eval);
        double expected = 1.0 / (1.0 + std::exp(-a * 1.7));
        CHECK(probs(0, 1) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("eval mode is deterministic; train mode with one seed is too") {
        MlpModel model = init_model(5);
        Matrix batch = random_batch(8, 9);
        CHECK(forward(model, batch, Mode::eval).data == forward(model, batch, Mode::eval).data);
        Rng a(33), b(33);
        CHECK(forward(model, batch, Mode::train, &a).data ==
              forward(model, batch, Mode::train, &b).data);
    }
    SUBCASE("shape and finiteness checks") {
        MlpModel model;
        Matrix bad(2, 10);
        CHECK_THROWS_AS(forward(model, bad, Mode::eval), ShapeMismatch);
        Matrix nan_batch(1, kInputDim);
        nan_batch(0, 3) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(forward(model, nan_batch, Mode::eval), NonFiniteInput);
        CHECK_THROWS(forward(model, random_batch(1, 1), Mode::train, nullptr));
    }
    SUBCASE("inverted dropout preserves the expected activation") {
        // route one unit straight through, read the dropped activation back
        // out of the softmax: p1 = sigmoid(dropped), so dropped = logit(p1)
        MlpModel m;
        m.w1(0, 0) = 1.0;
        m.w2(0, 0) = 1.0;
        m.w3(1, 0) = 1.0;
        Matrix batch(1, kInputDim);
        batch(0, 0) = 1.0;  // h1 activation is exactly 1
        Rng rng(77);
        const int trials = 100000;
        double sum = 0.0;
        for (int i = 0; i < trials; ++i) {
            Matrix probs = forward(m, batch, Mode::train, &rng);
            double p1 = probs(0, 1);
            sum += std::log(p1 / (1.0 - p1));
        }
        CHECK(std::fabs(sum / trials - 1.0) < 0.01);
    }
}

TEST_CASE("loss and gradients") {
    SUBCASE("all-zero model loses ln 2 on any labels") {
        MlpModel zero;
        Matrix batch = random_batch(6, 4);
        std::vector<int> labels = {0, 1, 1, 0, 1, 0};
        auto lg = loss_and_grads(zero, batch, labels, Mode::eval);
        CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("duplicating every row leaves the mean loss unchanged") {
        MlpModel model = init_model(3);
        Matrix batch = random_batch(5, 8);
        std::vector<int> labels = {1, 0, 1, 1, 0};
        Matrix doubled(10, kInputDim);
        std::vector<int> doubled_labels;
        for (std::size_t r = 0; r < 5; ++r) {
            std::copy(batch.row(r).begin(), batch.row(r).end(), doubled.row(2 * r).begin());
            std::copy(batch.row(r).begin(), batch.row(r).end(), doubled.row(2 * r + 1).begin());
            doubled_labels.push_back(labels[r]);
            doubled_labels.push_back(labels[r]);
        }
        double a = loss_and_grads(model, batch, labels, Mode::eval).loss;
        double b = loss_and_grads(model, doubled, doubled_labels, Mode::eval).loss;
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
    SUBCASE("loss is non-negative") {
        MlpModel model = init_model(19);
        Matrix batch = random_batch(12, 20);
        std::vector<int> labels(12, 1);
        CHECK(loss_and_grads(model, batch, labels, Mode::eval).loss >= 0.0);
    }
    SUBCASE("analytic gradients match central finite differences") {
        MlpModel model = init_model(42);
        Matrix batch = random_batch(4, 43);
        std::vector<int> labels = {1, 0, 0, 1};
        auto lg = loss_and_grads(model, batch, labels, Mode::eval);
        MlpModel gm;
        gm.w1 = lg.grads.w1;
        gm.b1 = lg.grads.b1;
        gm.w2 = lg.grads.w2;
        gm.b2 = lg.grads.b2;
        gm.w3 = lg.grads.w3;
        gm.b3 = lg.grads.b3;
        FlatWeights analytic = flatten(gm);
        FlatWeights value = flatten(model);

        Rng pick(4242);
        const double eps = 1e-5;
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            std::size_t p = static_cast<std::size_t>(pick.next_below(kParamCount));
            double plus = loss_at(model, batch, labels, p, value.values[p] + eps);
            double minus = loss_at(model, batch, labels, p, value.values[p] - eps);
            double numeric = (plus - minus) / (2.0 * eps);
            double a = analytic.values[p];
            double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("optimizers") {
    Gradients unit_grad;
    unit_grad.w1(0, 0) = 1.0;
    SUBCASE("sgd step") {
        MlpModel m;
        m.w1(0, 0) = 1.0;
        auto opt = make_optimizer(OptimizerKind::sgd, 0.1);
        optimizer_step(opt, m, unit_grad);
        CHECK(m.w1(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
        CHECK(opt.step_count == 1);
    }
    SUBCASE("zero gradients leave parameters untouched for every optimizer") {
        for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rmsprop}) {
            MlpModel m = init_model(50);
            MlpModel before = m;
            auto opt = make_optimizer(kind, 0.01);
            Gradients zero;
            optimizer_step(opt, m, zero);
            CHECK(m == before);
        }
    }
    SUBCASE("adam first step from zero state") {
        MlpModel m;
        auto opt = make_optimizer(OptimizerKind::adam, 0.001);
        optimizer_step(opt, m, unit_grad);
        // bias-corrected mhat = vhat = 1, so the step is -lr / (1 + eps)
        CHECK(m.w1(0, 0) == doctest::Approx(-0.001).epsilon(1e-6));
    }
    SUBCASE("rmsprop first step from zero state") {
        MlpModel m;
        auto opt = make_optimizer(OptimizerKind::rmsprop, 0.001);
        optimizer_step(opt, m, unit_grad);
        // v = 0.01, step = -lr / (0.1 + eps)
        CHECK(m.w1(0, 0) == doctest::Approx(-0.001 / (0.1 + 1e-8)).epsilon(1e-9));
    }
    SUBCASE("learning rate must be positive") {
        CHECK_THROWS(make_optimizer(OptimizerKind::sgd, 0.0));
    }
}

TEST_CASE("flatten and unflatten") {
    SUBCASE("length is the architecture parameter count") {
        // shape arithmetic over (16x78)+16, (16x16)+16, (2x16)+2
        constexpr std::size_t expected = 16 * 78 + 16 + 16 * 16 + 16 + 2 * 16 + 2;
        CHECK(expected == 1570);
        CHECK(kParamCount == expected);
        CHECK(flatten(MlpModel{}).values.size() == expected);
    }
    SUBCASE("round trip is exact") {
        MlpModel m = init_model(8);
        CHECK(unflatten(flatten(m)) == m);
    }
    SUBCASE("zero model flattens to the zero vector") {
        auto f = flatten(MlpModel{});
        for (double v : f.values) CHECK(v == 0.0);
    }
    SUBCASE("length mismatch rejected") {
        FlatWeights bad;
        bad.values.assign(10, 0.0);
        CHECK_THROWS_AS(unflatten(bad), LengthMismatch);
    }
    SUBCASE("binary serialization round trips") {
        MlpModel m = init_model(15);
        auto f = flatten(m);
        auto back = flat_from_bytes(flat_to_bytes(f));
        CHECK(back == f);
        auto bytes = flat_to_bytes(f);
        CHECK(bytes.size() == 16 + kParamCount * 8);
        bytes[0] = 'X';
        CHECK_THROWS(flat_from_bytes(bytes));
    }
}

TEST_CASE("training") {
    SUBCASE("separable synthetic set reaches 0.95 within 10 epochs") {
        auto d = testsupport::two_gaussian_data(2000, kInputDim, 2, 3.0, 100);
        Standardizer st = Standardizer::fit(d.features);
        Matrix x = st.transform(d.features);
        MlpModel model = init_model(101);
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = 102;
        auto opt = make_optimizer(OptimizerKind::adam, 0.001);
        auto history = train(model, x, d.labels, cfg, opt);
        CHECK(history.epochs.back().accuracy >= 0.95);
    }
    SUBCASE("invalid epoch count rejected") {
        auto d = testsupport::two_gaussian_data(64, kInputDim, 2, 1.0, 1);
        MlpModel model;
        TrainConfig cfg;
        cfg.epochs = 0;
        auto opt = make_optimizer(OptimizerKind::sgd, 0.1);
        CHECK_THROWS(train(model, d.features, d.labels, cfg, opt));
    }
    SUBCASE("identical seeds give bit-identical history and weights") {
        auto d = testsupport::two_gaussian_data(500, kInputDim, 2, 2.0, 7);
        TrainConfig cfg;
        cfg.epochs = 4;
        cfg.seed = 55;
        MlpModel m1 = init_model(9), m2 = init_model(9);
        auto o1 = make_optimizer(OptimizerKind::rmsprop, 0.001);
        auto o2 = make_optimizer(OptimizerKind::rmsprop, 0.001);
        auto h1 = train(m1, d.features, d.labels, cfg, o1);
        auto h2 = train(m2, d.features, d.labels, cfg, o2);
        REQUIRE(h1.epochs.size() == h2.epochs.size());
        for (std::size_t e = 0; e < h1.epochs.size(); ++e) {
            CHECK(h1.epochs[e].loss == h2.epochs[e].loss);
            CHECK(h1.epochs[e].accuracy == h2.epochs[e].accuracy);
        }
        CHECK(m1 == m2);
    }
    SUBCASE("early stopping halts a stalled run") {
        // zero learning rate cannot improve: patience epochs then stop
        auto d = testsupport::two_gaussian_data(200, kInputDim, 2, 1.0, 3);
        MlpModel model = init_model(4);
        TrainConfig cfg;
        cfg.epochs = 50;
        cfg.seed = 5;
        cfg.early_stop.patience = 3;
        auto opt = make_optimizer(OptimizerKind::sgd, 1e-12);
        auto history = train(model, d.features, d.labels, cfg, opt);
        CHECK(history.stopped_early);
        CHECK(history.epochs.size() <= 5);
    }
    SUBCASE("last partial batch is kept") {
        auto d = testsupport::two_gaussian_data(33, kInputDim, 2, 1.0, 6);
        MlpModel model = init_model(2);
        TrainConfig cfg;
        cfg.epochs = 1;
        cfg.batch_size = 32;
        cfg.seed = 1;
        auto opt = make_optimizer(OptimizerKind::sgd, 0.01);
        auto history = train(model, d.features, d.labels, cfg, opt);
        CHECK(history.epochs.size() == 1);  // 2 batches, second of size 1
    }
}

TEST_CASE("standardizer and model bundle") {
    SUBCASE("transform centers and scales") {
        Matrix m(3, 2);
        m.data = {1, 10, 2, 20, 3, 30};
        auto st = Standardizer::fit(m);
        auto z = st.transform(m);
        CHECK(z(0, 0) == doctest::Approx(-1.0));
        CHECK(z(2, 1) == doctest::Approx(1.0));
    }
    SUBCASE("bundle json round trip") {
        auto d = testsupport::two_gaussian_data(50, kInputDim, 3, 1.0, 90);
        auto st = Standardizer::fit(d.features);
        MlpModel model = init_model(91);
        auto j = mlp_to_json(model, st);
        auto [m2, st2] = mlp_from_json(j);
        CHECK(m2 == model);
        CHECK(st2.mean == st.mean);
        CHECK(st2.stddev == st.stddev);
    }
}
