#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dwbc/losses.hpp"
#include "dwbc/nn.hpp"

using namespace dwbc;

TEST(MlpSpec, ParamCountFromSizes) {
    const auto a = MlpSpec::uniform({3, 5, 2}, Activation::relu, 1);
    const auto b = MlpSpec::uniform({3, 5, 2}, Activation::tanh, 99);
    EXPECT_EQ(a.param_count(), 3u * 5 + 5 + 5 * 2 + 2);
    EXPECT_EQ(a.param_count(), b.param_count());
    EXPECT_EQ(init_params(a).size(), a.param_count());
}

TEST(MlpSpec, RejectsBadShapes) {
    MlpSpec one{{4}, {}, 0};
    EXPECT_THROW(one.validate(), std::invalid_argument);
    MlpSpec zero{{4, 0}, {}, 0};
    EXPECT_THROW(zero.validate(), std::invalid_argument);
}

TEST(ParamVector, UnflattenRoundTrip) {
    const auto spec = MlpSpec::uniform({2, 4, 3}, Activation::relu, 5);
    const auto p = init_params(spec);
    const std::vector<MlpSpec> specs{spec};
    const auto q = ParamVector::unflatten(specs, p.flatten());
    EXPECT_EQ(p.values, q.values);
    EXPECT_EQ(q.size(), spec.param_count());
}

TEST(MlpForward, ZeroWeightsGiveZero) {
    const auto spec = MlpSpec::uniform({3, 4, 2}, Activation::identity, 0);
    const auto p = ParamVector::zeros(spec);
    const std::vector<double> x{0.3, -2.0, 7.0};
    for (double v : mlp_forward(spec, p, x)) EXPECT_EQ(v, 0.0);
}

TEST(MlpForward, IdentityLayer) {
    const auto spec = MlpSpec::uniform({3, 3}, Activation::identity, 0);
    auto p = ParamVector::zeros(spec);
    for (std::size_t i = 0; i < 3; ++i) p.values[i * 3 + i] = 1.0;
    const std::vector<double> x{0.3, -2.0, 7.0};
    EXPECT_EQ(mlp_forward(spec, p, x), x);
}

TEST(MlpForward, HandComputedRelu231) {
    const auto spec = MlpSpec::uniform({2, 3, 1}, Activation::relu, 0);
    auto p = ParamVector::zeros(spec);
    // W1 (3x2), b1 (3), W2 (1x3), b2 (1)
    const std::vector<double> w1{0.5, -0.2, -0.3, 0.8, 0.1, 0.1};
    const std::vector<double> b1{0.05, 0.2, -0.1};
    const std::vector<double> w2{1.5, -0.7, 2.0};
    const double b2 = 0.25;
    const auto& l = p.layout;
    std::copy(w1.begin(), w1.end(), p.values.begin() + l[0].weight_offset);
    std::copy(b1.begin(), b1.end(), p.values.begin() + l[0].bias_offset);
    std::copy(w2.begin(), w2.end(), p.values.begin() + l[1].weight_offset);
    p.values[l[1].bias_offset] = b2;

    // h = relu(W1 (1,-1) + b1) = relu(0.75, -0.9, -0.1) = (0.75, 0, 0)
    const double expected = 1.5 * 0.75 + b2;
    const std::vector<double> x{1.0, -1.0};
    const auto y = mlp_forward(spec, p, x);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_NEAR(y[0], expected, 1e-15);
}

TEST(MlpForward, RejectsWrongInputLength) {
    const auto spec = MlpSpec::uniform({2, 3, 1}, Activation::relu, 0);
    const auto p = init_params(spec);
    const std::vector<double> x{1.0, 2.0, 3.0};
    EXPECT_THROW(mlp_forward(spec, p, x), std::invalid_argument);
}

TEST(MlpForward, Pure) {
    const auto spec = MlpSpec::uniform({4, 16, 16, 3}, Activation::tanh, 3);
    const auto p = init_params(spec);
    const std::vector<double> x{0.1, 0.2, -0.3, 0.4};
    EXPECT_EQ(mlp_forward(spec, p, x), mlp_forward(spec, p, x));
}

TEST(MlpBackward, MatchesFiniteDifferences) {
    const auto spec = MlpSpec::uniform({3, 5, 2}, Activation::tanh, 11);
    const auto p = init_params(spec);
    Matrix x(4, 3);
    x << 0.1, -0.5, 0.3, 1.0, 0.2, -0.7, -0.4, 0.9, 0.0, 0.6, 0.6, -0.1;
    const auto loss = [&](std::span<const double> params) {
        return mlp_forward_batch(spec, params, x).array().square().sum();
    };
    MlpTape tape;
    const Matrix y = mlp_forward_batch(spec, p.span(), x, &tape);
    std::vector<double> grad(p.size(), 0.0);
    mlp_backward_batch(spec, p.span(), tape, 2.0 * y, grad);
    const auto fd = finite_diff_grad(loss, p.span(), 1e-5);
    EXPECT_LE(max_relative_error(grad, fd), 1e-6);
}

TEST(InitParams, Deterministic) {
    const auto a = MlpSpec::uniform({4, 8, 2}, Activation::relu, 42);
    auto b = a;
    b.seed = 43;
    EXPECT_EQ(init_params(a).values, init_params(a).values);
    EXPECT_NE(init_params(a).values, init_params(b).values);
}

TEST(InitParams, WeightsCenteredAndBiasesZero) {
    const auto spec = MlpSpec::uniform({256, 256, 1}, Activation::relu, 7);
    const auto p = init_params(spec);
    const auto& l = p.layout[0];
    double sum = 0.0;
    for (std::size_t i = 0; i < l.in * l.out; ++i) {
        const double w = p.values[l.weight_offset + i];
        EXPECT_LE(std::abs(w), 1.0 / 16.0);
        sum += w;
    }
    EXPECT_NEAR(sum / static_cast<double>(l.in * l.out), 0.0, 0.05);
    for (std::size_t i = 0; i < l.out; ++i) EXPECT_EQ(p.values[l.bias_offset + i], 0.0);
}

TEST(Adam, ZeroGradientLeavesParams) {
    const auto spec = MlpSpec::uniform({2, 2}, Activation::identity, 1);
    const auto p = init_params(spec);
    const auto s = AdamState::for_params(p.size(), 0.1);
    const std::vector<double> g(p.size(), 0.0);
    const auto [q, s2] = adam_step(s, p, g);
    EXPECT_EQ(q.values, p.values);
    EXPECT_EQ(s2.t, 1u);
}

TEST(Adam, FirstStepIsMinusLr) {
    std::vector<double> p{0.0};
    auto s = AdamState::for_params(1, 0.1);
    const std::vector<double> g{1.0};
    adam_update(s, p, g);
    EXPECT_NEAR(p[0], -0.1, 1e-8);
    EXPECT_EQ(s.t, 1u);
}

TEST(Adam, TwoStepsMatchScriptedOracle) {
    std::vector<double> p{0.5, -1.0, 2.0};
    const std::vector<double> g1{0.3, -1.2, 0.0};
    const std::vector<double> g2{-0.1, 0.4, 2.5};
    auto s = AdamState::for_params(3, 0.01);

    std::vector<double> ref = p, m(3, 0.0), v(3, 0.0);
    auto scripted = [&](const std::vector<double>& g, int t) {
        for (int i = 0; i < 3; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1.0 - std::pow(0.9, t));
            const double vh = v[i] / (1.0 - std::pow(0.999, t));
            ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
    };
    adam_update(s, p, g1);
    scripted(g1, 1);
    adam_update(s, p, g2);
    scripted(g2, 2);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], ref[i], 1e-14);
    EXPECT_EQ(s.t, 2u);
}

TEST(Adam, ZeroLrLeavesParams) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 10.0);
    std::vector<double> p(20), g(20);
    for (auto& x : p) x = n(rng);
    for (auto& x : g) x = n(rng);
    const auto before = p;
    auto s = AdamState::for_params(p.size(), 0.0);
    for (int i = 0; i < 5; ++i) adam_update(s, p, g);
    EXPECT_EQ(p, before);
}

TEST(Adam, NonFiniteGradientNamesIndex) {
    std::vector<double> p{1.0, 2.0, 3.0};
    auto s = AdamState::for_params(3, 0.1);
    const std::vector<double> g{0.0, 0.0, std::nan("")};
    try {
        adam_update(s, p, g);
        FAIL() << "expected an error";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos) << e.what();
    }
}

TEST(Adam, LengthMismatchRejected) {
    std::vector<double> p{1.0, 2.0};
    auto s = AdamState::for_params(2, 0.1);
    const std::vector<double> g{1.0};
    EXPECT_THROW(adam_update(s, p, g), std::invalid_argument);
}

TEST(WeightDecay, ShrinksParams) {
    std::vector<double> p{1.0, -2.0};
    apply_weight_decay(p, 0.1, 0.5);
    EXPECT_DOUBLE_EQ(p[0], 0.95);
    EXPECT_DOUBLE_EQ(p[1], -1.9);
}

TEST(FiniteDiff, Quadratic) {
    const std::vector<double> p{0.5, -1.5, 3.0};
    const auto g = finite_diff_grad(
        [](std::span<const double> x) { return std::inner_product(x.begin(), x.end(), x.begin(), 0.0); }, p, 1e-5);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(g[i], 2.0 * p[i], 1e-8);
}

TEST(FiniteDiff, Constant) {
    const std::vector<double> p{0.5, -1.5};
    for (double v : finite_diff_grad([](std::span<const double>) { return 4.2; }, p, 1e-5)) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, NonFiniteLossRejected) {
    const std::vector<double> p{0.0};
    EXPECT_THROW(finite_diff_grad([](std::span<const double> x) { return std::log(x[0]); }, p, 1e-5),
                 std::exception);
}

TEST(FiniteDiff, MatchesBcLossGradient) {
    auto policy = GaussianPolicy::create(2, 1, {6}, 9, Activation::tanh);
    Batch b;
    b.states.resize(3, 2);
    b.states << 0.1, 0.2, -0.4, 0.9, 0.7, -0.3;
    b.actions.resize(3, 1);
    b.actions << 0.2, -0.6, 0.85;
    const auto analytic = bc_loss(policy, b);
    const auto fd = finite_diff_grad(
        [&](std::span<const double> p) {
            auto q = policy;
            std::copy(p.begin(), p.end(), q.params.values.begin());
            return bc_loss(q, b).value;
        },
        policy.params.span(), 1e-5);
    EXPECT_LE(max_relative_error(analytic.policy_grad, fd), 1e-4);
}
