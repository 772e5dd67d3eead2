#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dwbc/config.hpp"
#include "dwbc/generate.hpp"
#include "dwbc/trainer.hpp"

using namespace dwbc;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    Env env = Env::by_name("point-mass");
    GeneratedData data;
    Fixture() {
        GenDataConfig g;
        g.other_trajs = 100;
        g.reference_episodes = 50;
        g.seed = 3;
        data = generate_data(env, g);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

TrainConfig small_config(Algo algo) {
    TrainConfig c;
    c.algo = algo;
    c.total_steps = 200;
    c.eval_period = 100;
    c.eval_episodes = 2;
    c.batch_size = 32;
    c.disc_update_period = 10;
    c.policy_hidden = {16, 16};
    c.disc_stream_width = 8;
    c.disc_hidden = {16};
    c.seed = 9;
    return c;
}

fs::path temp_dir() {
    const auto d = fs::temp_directory_path() / "dwbc_test_trainer";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(Config, KeyValuesRoundTripAndUnknownRejected) {
    TrainConfig c;
    c.alpha = 3.25;
    c.policy_hidden = {32, 8};
    c.algo = Algo::bcnd_lite;
    TrainConfig d;
    apply_key_values(d, to_key_values(c));
    EXPECT_EQ(c, d);
    EXPECT_THROW(apply_key_values(d, {{"learning_rate", "1"}}), std::invalid_argument);
    EXPECT_THROW(apply_key_values(d, {{"alpha", "abc"}}), std::exception);
}

TEST(Config, FileParsingAndPrecedence) {
    const auto path = temp_dir() / "cfg";
    std::ofstream(path) << "# comment\nalpha = 2.5\n\neta=0.25  # trailing\n";
    const auto kv = read_key_value_file(path);
    EXPECT_EQ(kv.at("alpha"), "2.5");
    EXPECT_EQ(kv.at("eta"), "0.25");
    TrainConfig c;
    apply_key_values(c, kv);
    apply_key_values(c, {{"alpha", "4"}});
    EXPECT_EQ(c.alpha, 4.0);
    EXPECT_EQ(c.eta, 0.25);
}

TEST(Config, ValidateRejectsBadValues) {
    TrainConfig c;
    c.alpha = 0.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.disc_update_period = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.d_clip_hi = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, DerivedSeedsDiffer) {
    EXPECT_EQ(derive_seed(1, "train"), derive_seed(1, "train"));
    EXPECT_NE(derive_seed(1, "train"), derive_seed(1, "eval"));
    EXPECT_NE(derive_seed(1, "train"), derive_seed(2, "train"));
}

TEST(Train, BcExpAllocatesNoDiscriminator) {
    const auto& f = fixture();
    const auto r = train(small_config(Algo::bc_exp), f.data.d_e, nullptr, f.env, f.data.refs);
    EXPECT_FALSE(r.checkpoint.disc.has_value());
    EXPECT_EQ(r.disc_updates, 0u);
    EXPECT_EQ(r.policy_updates, 200u);
}

TEST(Train, ScheduleCounts) {
    const auto& f = fixture();
    auto c = small_config(Algo::dwbc);
    c.total_steps = 95;
    c.disc_update_period = 7;
    c.policy_update_period = 3;
    c.eval_period = 1000;
    const auto r = train(c, f.data.d_e, &f.data.d_o, f.env, f.data.refs);
    EXPECT_EQ(r.disc_updates, 95u / 7);
    EXPECT_EQ(r.policy_updates, 95u / 3);
}

TEST(Train, UpdateIsolation) {
    const auto& f = fixture();
    auto c = small_config(Algo::dwbc);
    c.total_steps = 50;
    c.eval_period = 1000;
    const auto fresh_policy = GaussianPolicy::create(4, 2, c.policy_hidden, derive_seed(c.seed, "init-policy"));
    const auto fresh_disc =
        TwoStreamDiscriminator::create(4, 2, c.disc_stream_width, c.disc_hidden, derive_seed(c.seed, "init-disc"));

    c.disc_update_period = 1000;  // policy steps only
    auto r = train(c, f.data.d_e, &f.data.d_o, f.env, f.data.refs);
    EXPECT_EQ(r.checkpoint.disc->params.values, fresh_disc.params.values);
    EXPECT_NE(r.checkpoint.policy.params.values, fresh_policy.params.values);

    c.disc_update_period = 1;
    c.policy_update_period = 1000;  // discriminator steps only
    r = train(c, f.data.d_e, &f.data.d_o, f.env, f.data.refs);
    EXPECT_EQ(r.checkpoint.policy.params.values, fresh_policy.params.values);
    EXPECT_NE(r.checkpoint.disc->params.values, fresh_disc.params.values);
}

TEST(Train, DwbcWithoutOfflineMatchesBcExp) {
    const auto& f = fixture();
    auto c = small_config(Algo::dwbc);
    c.alpha = 1.0;
    c.correction = false;
    const auto a = train(c, f.data.d_e, nullptr, f.env, f.data.refs);
    c.algo = Algo::bc_exp;
    const auto b = train(c, f.data.d_e, nullptr, f.env, f.data.refs);
    EXPECT_EQ(a.checkpoint.policy.params.values, b.checkpoint.policy.params.values);
    ASSERT_EQ(a.metrics.size(), b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        EXPECT_EQ(a.metrics[i].policy_loss, b.metrics[i].policy_loss);
        EXPECT_EQ(a.metrics[i].eval_mean_return, b.metrics[i].eval_mean_return);
    }
}

TEST(Train, MetricsFileDeterministic) {
    const auto& f = fixture();
    const auto c = small_config(Algo::dwbc);
    const auto dir = temp_dir();
    write_metrics(dir / "m1", train(c, f.data.d_e, &f.data.d_o, f.env, f.data.refs).metrics);
    write_metrics(dir / "m2", train(c, f.data.d_e, &f.data.d_o, f.env, f.data.refs).metrics);
    EXPECT_EQ(slurp(dir / "m1"), slurp(dir / "m2"));
    const auto back = read_metrics(dir / "m1");
    EXPECT_EQ(back.size(), 2u);
}

TEST(Train, EmittedWeightsInRange) {
    const auto& f = fixture();
    const auto r = train(small_config(Algo::dwbc), f.data.d_e, &f.data.d_o, f.env, f.data.refs);
    EXPECT_GE(r.weights.expert_min, 7.5 - 0.5 / 0.09 - 1e-9);
    EXPECT_LE(r.weights.expert_max, 5.5 + 1e-9);
    EXPECT_GE(r.weights.offline_min, 10.0 / 9.0 - 1e-9);
    EXPECT_LE(r.weights.offline_max, 10.0 + 1e-9);
}

TEST(Train, BaselinesNeedOfflineData) {
    const auto& f = fixture();
    EXPECT_THROW(train(small_config(Algo::bc_all), f.data.d_e, nullptr, f.env, f.data.refs), std::invalid_argument);
    EXPECT_NO_THROW(train(small_config(Algo::bcnd_lite), f.data.d_e, &f.data.d_o, f.env, f.data.refs));
}

TEST(Train, DimensionMismatchRejected) {
    const auto& f = fixture();
    const auto other = Env::by_name("reach-1d");
    EXPECT_THROW(train(small_config(Algo::bc_exp), f.data.d_e, nullptr, other, f.data.refs), std::invalid_argument);
}

TEST(Train, WeightTelemetrySeparatesExpertOffline) {
    const auto& f = fixture();
    auto c = small_config(Algo::dwbc);
    c.total_steps = 3000;
    c.eval_period = 3000;
    c.batch_size = 128;
    c.policy_hidden = {64, 64};
    c.disc_stream_width = 32;
    c.disc_hidden = {64};
    const auto r = train(c, f.data.d_e, &f.data.d_o, f.env, f.data.refs, TrainOptions{.evaluate = false});
    const auto& ck = r.checkpoint;
    const DwbcHyper h;
    double sum[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (const auto& t : f.data.d_o.trajectories) {
        const int k = f.data.expert_label.at(t.traj_id) ? 1 : 0;
        for (const auto& tr : t.transitions) {
            const double lp = normalize_logp(policy_log_prob(ck.policy, tr.s, tr.a), LogProbBounds{});
            sum[k] += bc_weight(discriminator_forward(*ck.disc, tr.s, tr.a, lp), Source::offline, h);
            ++n[k];
        }
    }
    ASSERT_GT(n[0], 0u);
    ASSERT_GT(n[1], 0u);
    EXPECT_GT(sum[1] / n[1], sum[0] / n[0]);
}

TEST(Evaluate, ReferenceBehaviours) {
    const auto& f = fixture();
    const auto refs = measure_references(f.env, 200, 77);
    double e = 0.0, r = 0.0;
    std::mt19937_64 re(5), rr(6);
    for (int i = 0; i < 200; ++i) {
        e += rollout(f.env, expert_actor(f.env), re).episode_return;
        r += rollout(f.env, random_actor(f.env), rr).episode_return;
    }
    EXPECT_NEAR(normalized_score(e / 200, refs.random_ref, refs.expert_ref), 100.0, 5.0);
    EXPECT_NEAR(normalized_score(r / 200, refs.random_ref, refs.expert_ref), 0.0, 5.0);
}

TEST(Evaluate, SingleEpisodeHasZeroStd) {
    const auto& f = fixture();
    const auto p = GaussianPolicy::create(4, 2, {8}, 1);
    std::mt19937_64 rng(0);
    const auto rep = evaluate(p, f.env, 1, rng, f.data.refs);
    EXPECT_EQ(rep.episodes, 1u);
    EXPECT_EQ(rep.std_return, 0.0);
    EXPECT_EQ(rep.returns.size(), 1u);
}

TEST(BcndLite, Weights) {
    Batch b;
    b.states = Matrix::Zero(3, 1);
    b.actions.resize(3, 1);
    b.actions << 0.0, 0.5, 0.99;
    for (double w : bcnd_lite_weights(nullptr, b)) EXPECT_EQ(w, 1.0);

    auto p = GaussianPolicy::create(1, 1, {}, 0);
    std::fill(p.params.values.begin(), p.params.values.end(), 0.0);
    p.params.values[p.params.layout[0].bias_offset + 1] = -2.0;  // narrow around 0
    const auto w = bcnd_lite_weights(&p, b);
    EXPECT_GT(w[0], w[2]);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Batch big;
    big.states.resize(10000, 1);
    big.actions.resize(10000, 1);
    for (int i = 0; i < 10000; ++i) {
        big.states(i, 0) = 3.0 * u(rng);
        big.actions(i, 0) = u(rng);
    }
    for (double x : bcnd_lite_weights(&p, big)) {
        ASSERT_TRUE(std::isfinite(x));
        ASSERT_GE(x, 0.0);
        ASSERT_LE(x, 1.0);
    }
}

TEST(Checkpoint, RoundTrip) {
    const auto& f = fixture();
    const auto c = small_config(Algo::dwbc);
    const auto r = train(c, f.data.d_e, &f.data.d_o, f.env, f.data.refs);
    const auto path = temp_dir() / "ckpt";
    save_checkpoint(path, r.checkpoint);
    const auto back = load_checkpoint(path, 4, 2);
    EXPECT_EQ(back.config, c);
    EXPECT_EQ(back.env_name, "point-mass");
    EXPECT_EQ(back.step, r.checkpoint.step);
    ASSERT_TRUE(back.disc.has_value());
    EXPECT_LE(max_abs_diff(back.policy.params.values, r.checkpoint.policy.params.values), 1e-6);

    std::mt19937_64 r1(4), r2(4);
    const auto a = evaluate(r.checkpoint.policy, f.env, 5, r1, f.data.refs);
    const auto b = evaluate(back.policy, f.env, 5, r2, f.data.refs);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_LE(std::abs(a.returns[i] - b.returns[i]), 1e-6 * std::max(1.0, std::abs(a.returns[i])));
    }
}

TEST(Checkpoint, Rejections) {
    const auto& f = fixture();
    const auto r = train(small_config(Algo::bc_exp), f.data.d_e, nullptr, f.env, f.data.refs);
    const auto path = temp_dir() / "ckpt_bc";
    save_checkpoint(path, r.checkpoint);
    EXPECT_THROW(load_checkpoint(path, 3, 2), std::exception);
    EXPECT_THROW(load_checkpoint(path, 4, 1), std::exception);

    std::string bytes = slurp(path);
    bytes.resize(bytes.size() - 5);
    std::ofstream(temp_dir() / "ckpt_cut", std::ios::binary) << bytes;
    EXPECT_THROW(load_checkpoint(temp_dir() / "ckpt_cut"), std::exception);
    EXPECT_THROW(load_checkpoint(temp_dir() / "missing_ckpt"), std::exception);
}

TEST(Generate, CountsLabelsAndSettings) {
    const auto& f = fixture();
    const auto& d = f.data;
    EXPECT_EQ(d.d_e.num_trajectories(), 1u);
    EXPECT_EQ(d.d_o.num_trajectories(), 109u);
    EXPECT_EQ(d.d_e.num_transitions() + d.d_o.num_transitions(), d.expert_transitions + d.other_transitions);
    for (const auto& t : d.d_e.trajectories) EXPECT_TRUE(d.expert_label.at(t.traj_id));
    const auto path = temp_dir() / "labels";
    save_labels(d.expert_label, path);
    EXPECT_EQ(load_labels(path), d.expert_label);

    for (int setting : {2, 3}) {
        GenDataConfig g;
        g.setting = setting;
        g.x = setting == 2 ? 2 : 50;
        g.other_trajs = 90;
        g.reference_episodes = 10;
        const auto s = generate_data(f.env, g);
        EXPECT_GE(s.d_e.num_trajectories(), 1u) << setting;
        EXPECT_EQ(s.d_e.num_trajectories() + s.d_o.num_trajectories(), 100u) << setting;
    }
}
