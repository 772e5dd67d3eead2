#include "dwbc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dwbc/losses.hpp"

namespace dwbc {

namespace {

struct Draw {
    GaussianPolicy policy;
    TwoStreamDiscriminator disc;
    Batch e;
    Batch o;
};

Batch random_batch(std::size_t n, std::size_t sdim, std::size_t adim, Source src, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> act(-0.95, 0.95);
    Batch b;
    b.source = src;
    b.states.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sdim));
    b.actions.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(adim));
    for (Eigen::Index i = 0; i < b.states.size(); ++i) b.states.data()[i] = gauss(rng);
    for (Eigen::Index i = 0; i < b.actions.size(); ++i) b.actions.data()[i] = act(rng);
    return b;
}

Draw make_draw(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> dim(1, 3);
    std::uniform_int_distribution<std::size_t> rows(3, 8);
    const std::size_t sdim = dim(rng), adim = dim(rng);
    Draw d;
    d.policy = GaussianPolicy::create(sdim, adim, {8, 8}, rng(), Activation::tanh);
    d.disc = TwoStreamDiscriminator::create(sdim, adim, 6, {8}, rng());
    std::normal_distribution<double> small(0.0, 0.1);
    for (auto& p : d.policy.params.values) p += small(rng);
    for (auto& p : d.disc.params.values) p += small(rng);
    d.policy.normalizer = StateNormalizer::identity(sdim);
    d.policy.normalizer.mean.assign(sdim, 0.3);
    d.policy.normalizer.std.assign(sdim, 1.7);
    d.disc.normalizer = d.policy.normalizer;
    d.e = random_batch(rows(rng), sdim, adim, Source::expert, rng);
    d.o = random_batch(rows(rng), sdim, adim, Source::offline, rng);
    return d;
}

std::vector<double> row(const Matrix& m, Eigen::Index i) {
    std::vector<double> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(i, j);
    return out;
}

std::vector<double> logps(const GaussianPolicy& policy, const Batch& b) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < b.states.rows(); ++i) out.push_back(policy_log_prob(policy, row(b.states, i), row(b.actions, i)));
    return out;
}

std::vector<double> d_values(const TwoStreamDiscriminator& disc, const Batch& b, const std::vector<double>& logp,
                             const LogProbBounds& bounds) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < b.states.rows(); ++i) {
        out.push_back(discriminator_forward(disc, row(b.states, i), row(b.actions, i),
                                            normalize_logp(logp[static_cast<std::size_t>(i)], bounds)));
    }
    return out;
}

// Per-sample policy objective sum_i w_i * log pi_i / n for fixed weights.
double policy_objective(GaussianPolicy policy, std::span<const double> p, const Batch& b,
                        const std::vector<double>& coeff) {
    policy.params.values.assign(p.begin(), p.end());
    const auto lp = logps(policy, b);
    double s = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) s += coeff[i] * lp[i];
    return s;
}

}  // namespace

std::vector<GradCheckResult> run_grad_checks(std::size_t trials, std::uint64_t seed, double h) {
    std::mt19937_64 rng(seed);
    const LogProbBounds bounds;
    const DwbcHyper hyper;
    std::vector<GradCheckResult> out = {{"bc_loss", 0, 0.0},
                                        {"weighted_bc_loss", 0, 0.0},
                                        {"pu_discriminator_loss", 0, 0.0},
                                        {"corrective_loss", 0, 0.0},
                                        {"dwbc_policy_loss", 0, 0.0}};
    auto record = [&out](std::size_t k, std::span<const double> analytic, std::span<const double> numeric) {
        out[k].max_rel_error = std::max(out[k].max_rel_error, max_relative_error(analytic, numeric));
        ++out[k].trials;
    };

    for (std::size_t t = 0; t < trials; ++t) {
        const Draw dr = make_draw(rng);
        const auto& pol = dr.policy;
        const double ne = static_cast<double>(dr.e.size()), no = static_cast<double>(dr.o.size());
        const auto d_e = d_values(dr.disc, dr.e, logps(pol, dr.e), bounds);
        const auto d_o = d_values(dr.disc, dr.o, logps(pol, dr.o), bounds);

        {
            const std::vector<double> c(dr.e.size(), -1.0 / ne);
            const auto num = finite_diff_grad(
                [&](std::span<const double> p) { return policy_objective(pol, p, dr.e, c); }, pol.params.span(), h);
            record(0, bc_loss(pol, dr.e).policy_grad, num);
        }
        {
            std::uniform_real_distribution<double> wd(0.0, 3.0);
            std::vector<double> w(dr.e.size());
            for (auto& x : w) x = wd(rng);
            std::vector<double> c(w.size());
            for (std::size_t i = 0; i < w.size(); ++i) c[i] = -w[i] / ne;
            const auto num = finite_diff_grad(
                [&](std::span<const double> p) { return policy_objective(pol, p, dr.e, c); }, pol.params.span(), h);
            record(1, weighted_bc_loss(pol, dr.e, w).policy_grad, num);
        }
        {
            const auto lp_e = logps(pol, dr.e), lp_o = logps(pol, dr.o);
            const double eta = hyper.eta;
            auto pu = [&](std::span<const double> p) {
                TwoStreamDiscriminator disc = dr.disc;
                disc.params.values.assign(p.begin(), p.end());
                const auto de = d_values(disc, dr.e, lp_e, bounds);
                const auto dout = d_values(disc, dr.o, lp_o, bounds);
                double s = 0.0;
                for (double x : de) s += (-eta * std::log(x) + eta * std::log(1.0 - x)) / ne;
                for (double x : dout) s += -std::log(1.0 - x) / no;
                return s;
            };
            const auto num = finite_diff_grad(pu, dr.disc.params.span(), h);
            record(2, pu_discriminator_loss(dr.disc, pol, dr.e, dr.o, eta, bounds).disc_grad, num);
        }
        {
            std::vector<double> ce, co;
            for (double d : d_e) {
                const double c = hyper.clip(d);
                ce.push_back((hyper.eta / c + hyper.eta / (1.0 - c)) / ne);
            }
            for (double d : d_o) co.push_back(-1.0 / (1.0 - hyper.clip(d)) / no);
            auto f = [&](std::span<const double> p) {
                return policy_objective(pol, p, dr.e, ce) + policy_objective(pol, p, dr.o, co);
            };
            record(3, corrective_loss(pol, dr.disc, dr.e, dr.o, hyper, bounds).policy_grad,
                   finite_diff_grad(f, pol.params.span(), h));
        }
        {
            std::vector<double> ce, co;
            for (double d : d_e) ce.push_back(-bc_weight(d, Source::expert, hyper) / ne);
            for (double d : d_o) co.push_back(-bc_weight(d, Source::offline, hyper) / no);
            auto f = [&](std::span<const double> p) {
                return policy_objective(pol, p, dr.e, ce) + policy_objective(pol, p, dr.o, co);
            };
            record(4, dwbc_policy_loss(pol, dr.disc, dr.e, dr.o, hyper, bounds).policy_grad,
                   finite_diff_grad(f, pol.params.span(), h));
        }
    }
    return out;
}

}  // namespace dwbc
