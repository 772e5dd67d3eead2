#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dwbc/gradcheck.hpp"
#include "dwbc/losses.hpp"

using namespace dwbc;

namespace {

Batch random_batch(std::size_t n, std::size_t sd, std::size_t ad, Source src, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.95, 0.95);
    Batch b;
    b.source = src;
    b.states.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sd));
    b.actions.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ad));
    for (Eigen::Index i = 0; i < b.states.size(); ++i) b.states.data()[i] = 2.0 * u(rng);
    for (Eigen::Index i = 0; i < b.actions.size(); ++i) b.actions.data()[i] = u(rng);
    return b;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Vector logit_of(std::initializer_list<double> ds) {
    Vector z(static_cast<Eigen::Index>(ds.size()));
    Eigen::Index i = 0;
    for (double d : ds) z(i++) = std::log(d / (1.0 - d));
    return z;
}

}  // namespace

TEST(BcLoss, StandardPolicyAtMode) {
    auto p = GaussianPolicy::create(1, 1, {}, 0);
    std::fill(p.params.values.begin(), p.params.values.end(), 0.0);
    Batch b;
    b.states = Matrix::Zero(1, 1);
    b.actions = Matrix::Zero(1, 1);
    EXPECT_NEAR(bc_loss(p, b).value, 0.9189, 1e-4);
}

TEST(BcLoss, DuplicatedRowsInvariant) {
    std::mt19937_64 rng(1);
    const auto p = GaussianPolicy::create(3, 2, {8}, 2);
    const auto b = random_batch(5, 3, 2, Source::expert, rng);
    Batch dup;
    dup.states.resize(10, 3);
    dup.actions.resize(10, 2);
    dup.states << b.states, b.states;
    dup.actions << b.actions, b.actions;
    EXPECT_NEAR(bc_loss(p, b).value, bc_loss(p, dup).value, 1e-12);
}

TEST(BcLoss, RejectsEmptyAndOfflineBatch) {
    const auto p = GaussianPolicy::create(2, 1, {4}, 0);
    Batch empty;
    empty.states.resize(0, 2);
    empty.actions.resize(0, 1);
    EXPECT_THROW(bc_loss(p, empty), std::invalid_argument);
    std::mt19937_64 rng(0);
    EXPECT_THROW(bc_loss(p, random_batch(3, 2, 1, Source::offline, rng)), std::invalid_argument);
}

TEST(WeightedBc, OnesEqualBc) {
    std::mt19937_64 rng(3);
    const auto p = GaussianPolicy::create(3, 2, {8}, 2);
    const auto b = random_batch(7, 3, 2, Source::expert, rng);
    const std::vector<double> ones(7, 1.0);
    const auto a = bc_loss(p, b);
    const auto w = weighted_bc_loss(p, b, ones);
    EXPECT_EQ(a.value, w.value);
    EXPECT_EQ(a.policy_grad, w.policy_grad);
}

TEST(WeightedBc, ZerosGiveZero) {
    std::mt19937_64 rng(4);
    const auto p = GaussianPolicy::create(3, 2, {8}, 2);
    const auto b = random_batch(4, 3, 2, Source::offline, rng);
    const std::vector<double> zeros(4, 0.0);
    const auto r = weighted_bc_loss(p, b, zeros);
    EXPECT_EQ(r.value, 0.0);
    for (double g : r.policy_grad) EXPECT_EQ(g, 0.0);
}

TEST(WeightedBc, TwoZeroPicksFirstSample) {
    std::mt19937_64 rng(5);
    const auto p = GaussianPolicy::create(2, 1, {8}, 2);
    const auto b = random_batch(2, 2, 1, Source::offline, rng);
    const std::vector<double> w{2.0, 0.0};
    const std::vector<double> s0{b.states(0, 0), b.states(0, 1)}, a0{b.actions(0, 0)};
    EXPECT_NEAR(weighted_bc_loss(p, b, w).value, -policy_log_prob(p, s0, a0), 1e-12);
}

TEST(WeightedBc, LengthMismatchRejected) {
    std::mt19937_64 rng(6);
    const auto p = GaussianPolicy::create(2, 1, {4}, 0);
    const auto b = random_batch(3, 2, 1, Source::offline, rng);
    const std::vector<double> w{1.0, 1.0};
    EXPECT_THROW(weighted_bc_loss(p, b, w), std::invalid_argument);
}

TEST(PuLoss, ConstantHalfGivesLog2) {
    std::mt19937_64 rng(7);
    const auto p = GaussianPolicy::create(3, 2, {8}, 1);
    auto d = TwoStreamDiscriminator::create(3, 2, 6, {8}, 2);
    d.zero_output_layer();
    const auto be = random_batch(5, 3, 2, Source::expert, rng);
    const auto bo = random_batch(9, 3, 2, Source::offline, rng);
    for (double eta : {0.1, 0.5, 0.9}) EXPECT_NEAR(pu_discriminator_loss(d, p, be, bo, eta).value, std::log(2.0), 1e-12);
}

TEST(PuKernel, HandcraftedTwoSample) {
    const Vector z = logit_of({0.8, 0.3});
    Vector g;
    const double eta = 0.5;
    const double expected = eta * -std::log(0.8) + -std::log(1.0 - 0.3) - eta * -std::log(1.0 - 0.8);
    EXPECT_NEAR(pu_kernel(z, 1, eta, g), expected, 1e-12);
}

TEST(PuKernel, EtaZeroLeavesOfflineTerm) {
    const Vector z = logit_of({0.8, 0.6, 0.3, 0.45});
    Vector g;
    const double expected = (softplus(z(2)) + softplus(z(3))) / 2.0;
    EXPECT_NEAR(pu_kernel(z, 2, 0.0, g), expected, 1e-12);
}

TEST(PuKernel, LargeLogitsStayFinite) {
    Vector z(3);
    z << 800.0, -800.0, 900.0;
    Vector g;
    const double v = pu_kernel(z, 1, 0.5, g);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_TRUE(g.allFinite());
}

TEST(BcWeight, ExamplesFromDefaults) {
    const DwbcHyper h;
    EXPECT_DOUBLE_EQ(bc_weight(0.5, Source::expert, h), 5.5);
    EXPECT_NEAR(bc_weight(0.9, Source::offline, h), 10.0, 1e-12);
    EXPECT_NEAR(bc_weight(0.95, Source::expert, h), 7.5 - 0.5 / 0.09, 1e-12);
    EXPECT_NEAR(bc_weight(0.95, Source::expert, h), 1.9444, 1e-4);
}

TEST(BcWeight, RangesUnderClipping) {
    const DwbcHyper h;
    for (int i = 1; i < 1000; ++i) {
        const double d = i / 1000.0;
        const double we = bc_weight(d, Source::expert, h);
        const double wo = bc_weight(d, Source::offline, h);
        EXPECT_GE(we, 7.5 - 0.5 / 0.09 - 1e-12);
        EXPECT_LE(we, 5.5 + 1e-12);
        EXPECT_GE(wo, 10.0 / 9.0 - 1e-12);
        EXPECT_LE(wo, 10.0 + 1e-12);
    }
}

TEST(BcWeight, OutsideUnitIntervalRejected) {
    const DwbcHyper h;
    EXPECT_THROW(bc_weight(0.0, Source::expert, h), std::domain_error);
    EXPECT_THROW(bc_weight(1.0, Source::offline, h), std::domain_error);
    EXPECT_THROW(bc_weight(std::nan(""), Source::offline, h), std::domain_error);
}

TEST(DwbcHyper, Validate) {
    EXPECT_NO_THROW(DwbcHyper{}.validate());
    EXPECT_THROW((DwbcHyper{0.5, 0.5, 0.1, 0.9}).validate(), std::invalid_argument);
    EXPECT_THROW((DwbcHyper{7.5, 1.0, 0.1, 0.9}).validate(), std::invalid_argument);
    EXPECT_THROW((DwbcHyper{7.5, 0.5, 0.9, 0.1}).validate(), std::invalid_argument);
}

TEST(CorrectiveKernel, HalfCoefficients) {
    Vector lp(4), d = Vector::Constant(4, 0.5), g;
    lp << -1.0, -2.0, -0.5, 0.3;
    DwbcHyper h;
    h.eta = 0.5;
    const double expected = 2.0 * (-1.5) - 2.0 * (-0.1);
    EXPECT_NEAR(corrective_kernel(lp, 2, d, h, g), expected, 1e-12);
}

TEST(CorrectiveKernel, EtaZeroDropsExpertTerm) {
    Vector lp(3), d(3), g;
    lp << -1.0, -2.0, -0.5;
    d << 0.7, 0.2, 0.6;
    DwbcHyper h;
    h.eta = 0.0;
    EXPECT_NEAR(corrective_kernel(lp, 1, d, h, g), -(-2.0 / 0.8 + -0.5 / 0.4) / 2.0, 1e-12);
    EXPECT_EQ(g(0), 0.0);
}

TEST(DwbcKernel, HalfGivesPaperWeights) {
    Vector lp = Vector::Constant(2, -1.0), d = Vector::Constant(2, 0.5), g;
    WeightStats st;
    dwbc_kernel(lp, 1, d, DwbcHyper{}, g, &st);
    EXPECT_DOUBLE_EQ(st.expert_mean(), 5.5);
    EXPECT_DOUBLE_EQ(st.offline_mean(), 2.0);
}

TEST(DwbcLoss, EqualsWeightedBcWithBcWeights) {
    std::mt19937_64 rng(11);
    const DwbcHyper h;
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = GaussianPolicy::create(3, 2, {8}, 100 + trial);
        const auto d = TwoStreamDiscriminator::create(3, 2, 6, {8}, 200 + trial);
        const auto be = random_batch(1 + trial % 5, 3, 2, Source::expert, rng);
        const auto bo = random_batch(1 + trial % 7, 3, 2, Source::offline, rng);
        const auto r = dwbc_policy_loss(p, d, be, bo, h);

        const Vector de = discriminator_scores(d, p, be.states, be.actions, LogProbBounds{});
        const Vector dob = discriminator_scores(d, p, bo.states, bo.actions, LogProbBounds{});
        std::vector<double> we, wo;
        for (Eigen::Index i = 0; i < de.size(); ++i) we.push_back(bc_weight(de(i), Source::expert, h));
        for (Eigen::Index i = 0; i < dob.size(); ++i) wo.push_back(bc_weight(dob(i), Source::offline, h));
        const double expected = weighted_bc_loss(p, be, we).value + weighted_bc_loss(p, bo, wo).value;
        ASSERT_NEAR(r.value, expected, 1e-12);

        // alpha * bc + corrective, via eta/c + eta/(1-c) = eta/(c(1-c))
        const double split = h.alpha * bc_loss(p, be).value + corrective_loss(p, d, be, bo, h).value;
        ASSERT_NEAR(r.value, split, 1e-10 * std::max(1.0, std::abs(split)));
    }
}

TEST(DwbcLoss, NoCrossContamination) {
    std::mt19937_64 rng(12);
    const auto p = GaussianPolicy::create(3, 2, {8}, 1);
    const auto d = TwoStreamDiscriminator::create(3, 2, 6, {8}, 2);
    const auto be = random_batch(4, 3, 2, Source::expert, rng);
    const auto bo = random_batch(4, 3, 2, Source::offline, rng);
    const auto pol = dwbc_policy_loss(p, d, be, bo, DwbcHyper{});
    for (double g : pol.disc_grad) EXPECT_EQ(g, 0.0);
    const auto pu = pu_discriminator_loss(d, p, be, bo, 0.5);
    for (double g : pu.policy_grad) EXPECT_EQ(g, 0.0);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
    for (const auto& r : run_grad_checks(10, 123)) {
        EXPECT_GE(r.trials, 10u) << r.loss;
        EXPECT_LE(r.max_rel_error, 1e-4) << r.loss;
    }
}

TEST(PartialFractions, HoldToMachinePrecision) {
    for (int i = 1; i < 1000; ++i) {
        const double c = i / 1000.0;
        const double a = 1.0 / c + 1.0 / (1.0 - c);
        const double b = 1.0 / (c * (1.0 - c));
        EXPECT_LE(std::abs(a - b), 4.0 * std::numeric_limits<double>::epsilon() * b);
    }
}
