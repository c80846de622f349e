#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "siamcheck/adam.hpp"
#include "siamcheck/error.hpp"
#include "siamcheck/ops.hpp"

using namespace siamcheck;

namespace {

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

template <typename F>
void expect_error(ErrorKind kind, F&& f) {
    try {
        f();
        FAIL() << "expected " << to_string(kind) << " error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

} // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
    expect_error(ErrorKind::Dimension, [] { Tensor({2, 2}, std::vector<float>{1, 2, 3}); });
    Tensor t({2, 3}, 1.5f);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_FALSE(t.has_grad());
    t.set_requires_grad(true);
    EXPECT_EQ(t.grad().size(), 6u);
}

TEST(Tensor, CloneIsIndependent) {
    Tensor a = Tensor::from({2}, {1, 2});
    Tensor b = a.clone();
    b.data()[0] = 9;
    EXPECT_EQ(a[0], 1.0f);
    EXPECT_FALSE(a.same_storage(b));
}

TEST(Conv2d, OneByOneIdentityKernel) {
    Tape tape;
    std::mt19937 gen(1);
    Tensor x = oracle::random_tensor({2, 4, 5, 1}, gen);
    Tensor k = Tensor::from({1, 1, 1, 1}, {1});
    Tensor b = Tensor::from({1}, {0});
    EXPECT_EQ(values(conv2d(tape, x, k, b)), values(x));
}

TEST(Conv2d, AllOnesValidKernel) {
    Tape tape;
    Tensor x = Tensor::from({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k({2, 2, 1, 1}, 1.0f);
    Tensor b({1}, 0.0f);
    Tensor y = conv2d(tape, x, k, b, 1, Padding::Valid);
    EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 1}));
    EXPECT_EQ(values(y), (std::vector<float>{12, 16, 24, 28}));
}

TEST(Conv2d, ZeroInputGivesBias) {
    Tape tape;
    std::mt19937 gen(2);
    Tensor x({1, 5, 5, 3}, 0.0f);
    Tensor k = oracle::random_tensor({3, 3, 3, 2}, gen);
    Tensor b = Tensor::from({2}, {0.25f, -1.5f});
    Tensor y = conv2d(tape, x, k, b);
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], i % 2 == 0 ? 0.25f : -1.5f);
}

TEST(Conv2d, SameAndStrideGeometry) {
    Tape tape;
    Tensor x({1, 7, 6, 2}, 1.0f);
    Tensor k({3, 3, 2, 4}, 0.0f);
    Tensor b({4}, 0.0f);
    EXPECT_EQ(conv2d(tape, x, k, b, 1, Padding::Same).shape(), (Shape{1, 7, 6, 4}));
    EXPECT_EQ(conv2d(tape, x, k, b, 2, Padding::Same).shape(), (Shape{1, 4, 3, 4}));
    EXPECT_EQ(conv2d(tape, x, k, b, 2, Padding::Valid).shape(), (Shape{1, 3, 2, 4}));
}

TEST(Conv2d, ShapeErrorsNameAxes) {
    Tape tape;
    Tensor x({1, 4, 4, 3}, 1.0f);
    try {
        conv2d(tape, x, Tensor({3, 3, 2, 4}), Tensor({4}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Dimension);
        EXPECT_NE(std::string(e.what()).find("axis"), std::string::npos);
    }
    expect_error(ErrorKind::Dimension, [&] { conv2d(tape, x, Tensor({5, 5, 3, 1}), Tensor({1}), 1, Padding::Valid); });
    expect_error(ErrorKind::Dimension, [&] { conv2d(tape, x, Tensor({3, 3, 3, 2}), Tensor({3})); });
    expect_error(ErrorKind::Config, [&] { conv2d(tape, x, Tensor({3, 3, 3, 2}), Tensor({2}), 0); });
}

TEST(Conv2d, BitIdenticalToNaiveOracle) {
    std::mt19937 gen(123);
    std::uniform_int_distribution<std::size_t> sz(3, 8), ch(1, 3), kk(1, 3), ff(1, 4), st(1, 2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = sz(gen), w = sz(gen), c = ch(gen), kh = kk(gen), kw = kk(gen), f = ff(gen),
                          stride = st(gen);
        const bool same = trial % 2 == 0;
        Tensor x = oracle::random_tensor({2, h, w, c}, gen);
        Tensor k = oracle::random_tensor({kh, kw, c, f}, gen);
        Tensor b = oracle::random_tensor({f}, gen);
        Tape tape(Tape::State::Inactive);
        Tensor y = conv2d(tape, x, k, b, stride, same ? Padding::Same : Padding::Valid);
        std::size_t oh = 0, ow = 0;
        auto ref = oracle::naive_conv2d(values(x), 2, h, w, c, values(k), kh, kw, f, values(b), stride, same, oh, ow);
        ASSERT_EQ(y.shape(), (Shape{2, oh, ow, f}));
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(y[i], ref[i]) << "trial " << trial << " index " << i;
    }
}

TEST(MaxPool, SingleWindow) {
    Tape tape;
    Tensor y = maxpool2d(tape, Tensor::from({1, 2, 2, 1}, {1, 2, 3, 4}));
    EXPECT_EQ(values(y), std::vector<float>{4});
}

TEST(MaxPool, PerWindowMax) {
    Tape tape;
    Tensor x = Tensor::from({1, 4, 4, 1}, {1, 5, 2, 0, 3, 4, 1, 1, 0, 0, 9, 8, 0, 0, 7, 6});
    EXPECT_EQ(values(maxpool2d(tape, x)), (std::vector<float>{5, 2, 0, 9}));
}

TEST(MaxPool, ConstantInputAndTieRouting) {
    Tape tape;
    Tensor x({1, 4, 6, 2}, 3.0f);
    x.set_requires_grad(true);
    Tensor y = maxpool2d(tape, x);
    for (float v : y.data()) EXPECT_EQ(v, 3.0f);
    tape.backward(sum(tape, y));
    // Ties go to the first element of each window.
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const std::size_t ch = i % 2, col = (i / 2) % 6, row = i / 12;
        (void)ch;
        EXPECT_EQ(x.grad()[i], (row % 2 == 0 && col % 2 == 0) ? 1.0f : 0.0f);
    }
}

TEST(MaxPool, WindowLargerThanInput) {
    Tape tape;
    expect_error(ErrorKind::Dimension, [&] { maxpool2d(tape, Tensor({1, 1, 4, 1})); });
}

TEST(Dense, Examples) {
    Tape tape;
    Tensor x = Tensor::from({1, 2}, {1, 2});
    EXPECT_EQ(values(dense(tape, x, Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0f))), (std::vector<float>{1, 2}));
    EXPECT_EQ(values(dense(tape, x, Tensor::from({2, 2}, {1, 0, 0, 2}), Tensor::from({2}, {1, 1}))),
              (std::vector<float>{2, 5}));
    EXPECT_EQ(values(dense(tape, Tensor({1, 2}, 0.0f), Tensor::from({2, 2}, {3, 4, 5, 6}), Tensor::from({2}, {7, 8}))),
              (std::vector<float>{7, 8}));
    expect_error(ErrorKind::Dimension, [&] { dense(tape, x, Tensor({3, 2}), Tensor({2})); });
}

TEST(Relu, ValuesAndGradients) {
    Tape tape;
    Tensor x = Tensor::from({3}, {-1, 0, 2});
    x.set_requires_grad(true);
    Tensor y = relu(tape, x);
    EXPECT_EQ(values(y), (std::vector<float>{0, 0, 2}));
    tape.backward(sum(tape, y));
    EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{0, 0, 1}));

    Tape tape2;
    Tensor neg = Tensor::from({4}, {-1, -2, -0.5f, -3});
    neg.set_requires_grad(true);
    Tensor yn = relu(tape2, neg);
    for (float v : yn.data()) EXPECT_EQ(v, 0.0f);
    tape2.backward(sum(tape2, yn));
    for (float g : neg.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(Relu, GradientAtThreeMatchesFiniteDifference) {
    Tensor x = Tensor::from({1}, {3});
    x.set_requires_grad(true);
    Tape tape;
    tape.backward(sum(tape, relu(tape, x)));
    auto fd = oracle::finite_differences({x}, [&] {
        Tape t(Tape::State::Inactive);
        return static_cast<double>(relu(t, x)[0]);
    }, 1e-2);
    EXPECT_NEAR(x.grad()[0], fd[0][0], 1e-3);
    EXPECT_EQ(x.grad()[0], 1.0f);
}

TEST(Sigmoid, Values) {
    Tape tape;
    Tensor y = sigmoid(tape, Tensor::from({3}, {0.0f, std::log(3.0f), -std::log(3.0f)}));
    EXPECT_EQ(y[0], 0.5f);
    EXPECT_NEAR(y[1], 0.75f, 1e-7);
    std::mt19937 gen(5);
    Tensor r = oracle::random_tensor({50}, gen, -8, 8);
    Tensor neg = r.clone();
    for (auto& v : neg.data()) v = -v;
    Tensor a = sigmoid(tape, r), b = sigmoid(tape, neg);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(a[i] + b[i], 1.0f, 1e-6);
}

TEST(Sigmoid, OutputsStayInsideOpenInterval) {
    Tape tape;
    Tensor y = sigmoid(tape, Tensor::from({2}, {200.0f, -200.0f}));
    EXPECT_LT(y[0], 1.0f);
    EXPECT_GT(y[1], 0.0f);
}

TEST(BatchNorm, ConstantBatchNormalizesToZero) {
    Tape tape;
    auto stats = BatchNormStats::empty(1);
    Tensor y = batchnorm(tape, Tensor({4, 1}, 7.0f), Tensor({1}, 1.0f), Tensor({1}, 0.0f), Mode::Train, stats);
    for (float v : y.data()) EXPECT_LE(std::fabs(v), 1e-2f);
}

TEST(BatchNorm, TwoValueBatch) {
    Tape tape;
    auto stats = BatchNormStats::empty(1);
    Tensor y = batchnorm(tape, Tensor::from({2, 1}, {1, 3}), Tensor({1}, 1.0f), Tensor({1}, 0.0f), Mode::Train, stats);
    EXPECT_NEAR(y[0], -1.0f, 1e-4);
    EXPECT_NEAR(y[1], 1.0f, 1e-4);
    EXPECT_TRUE(stats.populated);
    EXPECT_FLOAT_EQ(stats.mean[0], 2.0f);
    EXPECT_FLOAT_EQ(stats.variance[0], 1.0f);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
    Tape tape;
    std::mt19937 gen(3);
    auto stats = BatchNormStats::empty(2);
    Tensor y = batchnorm(tape, oracle::random_tensor({3, 2, 2, 2}, gen), Tensor({2}, 0.0f),
                         Tensor::from({2}, {0.5f, -2.0f}), Mode::Train, stats);
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], i % 2 == 0 ? 0.5f : -2.0f);
}

TEST(BatchNorm, InferBeforeTrainIsAnError) {
    Tape tape;
    auto stats = BatchNormStats::empty(1);
    expect_error(ErrorKind::Uninitialized, [&] {
        batchnorm(tape, Tensor({2, 1}, 1.0f), Tensor({1}, 1.0f), Tensor({1}, 0.0f), Mode::Infer, stats);
    });
}

TEST(BatchNorm, RunningStatsMomentumAndInferPurity) {
    Tape tape;
    auto stats = BatchNormStats::fresh(1);
    batchnorm(tape, Tensor::from({2, 1}, {1, 3}), Tensor({1}, 1.0f), Tensor({1}, 0.0f), Mode::Train, stats);
    EXPECT_FLOAT_EQ(stats.mean[0], 0.9f * 0.0f + 0.1f * 2.0f);
    EXPECT_FLOAT_EQ(stats.variance[0], 0.9f * 1.0f + 0.1f * 1.0f);
    Tensor x = Tensor::from({3, 1}, {0.5f, 1.0f, 4.0f});
    Tensor a = batchnorm(tape, x, Tensor({1}, 2.0f), Tensor({1}, 1.0f), Mode::Infer, stats);
    Tensor b = batchnorm(tape, x, Tensor({1}, 2.0f), Tensor({1}, 1.0f), Mode::Infer, stats);
    EXPECT_EQ(values(a), values(b));
    const float expected = 2.0f * (4.0f - 0.2f) / std::sqrt(1.0f + 1e-5f) + 1.0f;
    EXPECT_NEAR(a[2], expected, 1e-5);
}

TEST(Dropout, RateZeroAndInferAreIdentity) {
    Tape tape;
    Rng rng(1);
    std::mt19937 gen(1);
    Tensor x = oracle::random_tensor({5, 7}, gen);
    EXPECT_EQ(values(dropout(tape, x, 0.0f, Mode::Train, rng)), values(x));
    EXPECT_EQ(values(dropout(tape, x, 0.0f, Mode::Infer, rng)), values(x));
    EXPECT_EQ(values(dropout(tape, x, 0.3f, Mode::Infer, rng)), values(x));
}

TEST(Dropout, PreservesExpectation) {
    Tape tape(Tape::State::Inactive);
    Rng rng(42);
    Tensor y = dropout(tape, Tensor({100000}, 1.0f), 0.3f, Mode::Train, rng);
    double mean = 0.0;
    std::size_t zeros = 0;
    for (float v : y.data()) {
        mean += v;
        zeros += v == 0.0f;
    }
    mean /= 100000.0;
    EXPECT_GE(mean, 0.97);
    EXPECT_LE(mean, 1.03);
    EXPECT_NEAR(static_cast<double>(zeros) / 100000.0, 0.3, 0.01);
}

TEST(Dropout, InvalidRate) {
    Tape tape;
    Rng rng(1);
    expect_error(ErrorKind::Config, [&] { dropout(tape, Tensor({2}), 1.0f, Mode::Train, rng); });
    expect_error(ErrorKind::Config, [&] { dropout(tape, Tensor({2}), -0.1f, Mode::Infer, rng); });
}

TEST(L1Distance, Examples) {
    Tape tape;
    Tensor p = Tensor::from({1, 2}, {1, 2});
    auto same = l1_distance(tape, p, p);
    EXPECT_EQ(same.distance[0], 0.0f);
    for (float v : same.elementwise.data()) EXPECT_EQ(v, 0.0f);

    auto d = l1_distance(tape, p, Tensor::from({1, 2}, {3, 0}));
    EXPECT_EQ(values(d.elementwise), (std::vector<float>{2, 2}));
    EXPECT_EQ(d.distance[0], 4.0f);
    expect_error(ErrorKind::Dimension, [&] { l1_distance(tape, p, Tensor({1, 3})); });
}

TEST(L1Distance, SymmetricAndNonNegative) {
    std::mt19937 gen(9);
    Tape tape(Tape::State::Inactive);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor p = oracle::random_tensor({3, 16}, gen), q = oracle::random_tensor({3, 16}, gen);
        auto a = l1_distance(tape, p, q), b = l1_distance(tape, q, p);
        EXPECT_EQ(values(a.distance), values(b.distance));
        EXPECT_EQ(values(a.elementwise), values(b.elementwise));
        for (float v : a.distance.data()) EXPECT_GT(v, 0.0f);
    }
}

TEST(L1Distance, SubgradientAtEqualityIsZero) {
    Tape tape;
    Tensor p = Tensor::from({1, 2}, {1, 5});
    Tensor q = Tensor::from({1, 2}, {1, 2});
    p.set_requires_grad(true);
    q.set_requires_grad(true);
    tape.backward(sum(tape, l1_distance(tape, p, q).distance));
    EXPECT_EQ(p.grad()[0], 0.0f);
    EXPECT_EQ(q.grad()[0], 0.0f);
    EXPECT_EQ(p.grad()[1], 1.0f);
    EXPECT_EQ(q.grad()[1], -1.0f);
}

TEST(BceLoss, Examples) {
    Tape tape;
    EXPECT_LE(bce_loss(tape, Tensor::from({1}, {1.0f - 1e-7f}), Tensor::from({1}, {1})).item(), 1e-6f);
    EXPECT_NEAR(bce_loss(tape, Tensor::from({1}, {0.5f}), Tensor::from({1}, {1})).item(), std::log(2.0), 1e-6);
    std::mt19937 gen(4);
    for (int i = 0; i < 20; ++i) {
        Tensor p = oracle::random_tensor({8}, gen, 0.01f, 0.99f);
        Tensor y({8});
        for (std::size_t k = 0; k < 8; ++k) y.data()[k] = static_cast<float>(gen() % 2);
        Tensor p2 = p.clone(), y2 = y.clone();
        for (auto& v : p2.data()) v = 1.0f - v;
        for (auto& v : y2.data()) v = 1.0f - v;
        EXPECT_NEAR(bce_loss(tape, p, y).item(), bce_loss(tape, p2, y2).item(), 1e-5);
    }
}

TEST(BceLoss, ClampsSaturatedPredictions) {
    Tape tape;
    const float loss = bce_loss(tape, Tensor::from({1}, {0.0f}), Tensor::from({1}, {1})).item();
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_NEAR(loss, -std::log(1e-7), 1e-3);
}

TEST(BceLoss, RejectsNonBinaryTargets) {
    Tape tape;
    expect_error(ErrorKind::Label, [&] { bce_loss(tape, Tensor::from({1}, {0.5f}), Tensor::from({1}, {0.5f})); });
}

TEST(BceLoss, SaturatedSigmoidStillProducesLogitGradient) {
    Tape tape;
    Tensor z = Tensor::from({1}, {-40.0f});
    z.set_requires_grad(true);
    tape.backward(bce_loss(tape, sigmoid(tape, z), Tensor::from({1}, {1})));
    EXPECT_NEAR(z.grad()[0], -1.0f, 1e-6);
}

TEST(Backward, SumGivesOnes) {
    Tape tape;
    Tensor x({2, 3, 4}, 0.7f);
    x.set_requires_grad(true);
    tape.backward(sum(tape, x));
    for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, SigmoidOfDenseAtZero) {
    Tape tape;
    Tensor x = Tensor::from({1, 1}, {1});
    Tensor w = Tensor::from({1, 1}, {0});
    w.set_requires_grad(true);
    tape.backward(sum(tape, sigmoid(tape, dense(tape, x, w, Tensor({1}, 0.0f)))));
    EXPECT_FLOAT_EQ(w.grad()[0], 0.25f);
}

TEST(Backward, NonScalarLossIsContractError) {
    Tape tape;
    Tensor x({2}, 1.0f);
    x.set_requires_grad(true);
    expect_error(ErrorKind::Contract, [&] { tape.backward(relu(tape, x)); });
}

TEST(Backward, ReverseOrderAndAccumulation) {
    Tape tape;
    std::vector<int> order;
    tape.record([&] { order.push_back(1); });
    tape.record([&] { order.push_back(2); });
    tape.record([&] { order.push_back(3); });
    tape.backward(Tensor::scalar(0.0f));
    EXPECT_EQ(order, (std::vector<int>{3, 2, 1}));
    tape.clear();
    EXPECT_EQ(tape.size(), 0u);

    // A tensor used twice accumulates both contributions.
    Tape t2;
    Tensor x = Tensor::from({1, 1}, {2});
    x.set_requires_grad(true);
    Tensor y = concat_batch(t2, x, x);
    t2.backward(sum(t2, y));
    EXPECT_EQ(x.grad()[0], 2.0f);
}

TEST(Backward, UnreachableTensorsKeepZeroGrad) {
    Tape tape;
    Tensor x({2}, 1.0f), unused({3}, 1.0f);
    x.set_requires_grad(true);
    unused.set_requires_grad(true);
    tape.backward(sum(tape, relu(tape, x)));
    for (float g : unused.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(Backward, InactiveTapeRecordsNothing) {
    Tape tape(Tape::State::Inactive);
    Tensor x({2}, 1.0f);
    x.set_requires_grad(true);
    relu(tape, x);
    EXPECT_EQ(tape.size(), 0u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    Tensor p = Tensor::from({3}, {1, 2, 3});
    p.set_requires_grad(true);
    AdamState state;
    std::vector<Tensor> params{p};
    adam_step(params, state);
    EXPECT_EQ(values(p), (std::vector<float>{1, 2, 3}));
    EXPECT_EQ(state.t, 1u);
    adam_step(params, state);
    EXPECT_EQ(state.t, 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Tensor p = Tensor::from({1}, {0.5f});
    p.set_requires_grad(true);
    p.grad()[0] = 1.0f;
    AdamState state;
    std::vector<Tensor> params{p};
    adam_step(params, state);
    EXPECT_NEAR(p[0], 0.5f - 0.0001f, 1e-7);
    EXPECT_EQ(p.grad()[0], 0.0f);
}

TEST(Adam, IdenticalParametersStayIdentical) {
    Tensor a = Tensor::from({4}, {0.1f, -0.2f, 0.3f, 0.4f});
    Tensor b = a.clone();
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    AdamState sa, sb;
    std::vector<Tensor> pa{a}, pb{b};
    std::mt19937 gen(8);
    std::uniform_real_distribution<float> g(-1, 1);
    for (int step = 0; step < 100; ++step) {
        for (std::size_t i = 0; i < 4; ++i) a.grad()[i] = b.grad()[i] = g(gen);
        adam_step(pa, sa);
        adam_step(pb, sb);
    }
    EXPECT_EQ(values(a), values(b));
}

TEST(Adam, MissingGradIsContractError) {
    Tensor p({2}, 1.0f);
    AdamState state;
    std::vector<Tensor> params{p};
    expect_error(ErrorKind::Contract, [&] { adam_step(params, state); });
}
