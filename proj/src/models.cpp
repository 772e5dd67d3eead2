#include "dwbc/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dwbc {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::domain_error(std::string(what) + " contains a non-finite value");
    }
}

double clamp_action(double a) {
    return std::clamp(a, -1.0 + kActionBoundaryMargin, 1.0 - kActionBoundaryMargin);
}

Matrix row_of(std::span<const double> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
    return m;
}

}  // namespace

StateNormalizer StateNormalizer::identity(std::size_t dim) {
    return StateNormalizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

StateNormalizer StateNormalizer::fit(const Matrix& states) {
    if (states.rows() == 0) throw std::invalid_argument("StateNormalizer::fit: no samples");
    StateNormalizer n;
    const auto cols = states.cols();
    n.mean.resize(static_cast<std::size_t>(cols));
    n.std.resize(static_cast<std::size_t>(cols));
    for (Eigen::Index c = 0; c < cols; ++c) {
        const double mu = states.col(c).mean();
        const double var = (states.col(c).array() - mu).square().mean();
        const double sd = std::sqrt(var);
        n.mean[static_cast<std::size_t>(c)] = mu;
        n.std[static_cast<std::size_t>(c)] = sd < 1e-6 ? 1.0 : sd;
    }
    return n;
}

Matrix StateNormalizer::apply(const Matrix& states) const {
    if (static_cast<std::size_t>(states.cols()) != mean.size()) {
        throw std::invalid_argument("StateNormalizer: state width " + std::to_string(states.cols()) +
                                    ", expected " + std::to_string(mean.size()));
    }
    Matrix out = states;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        const auto i = static_cast<std::size_t>(c);
        out.col(c) = (out.col(c).array() - mean[i]) / std[i];
    }
    return out;
}

void LogProbBounds::validate() const {
    if (!(lo < hi)) throw std::invalid_argument("LogProbBounds: lo must be below hi");
}

double normalize_logp(double logp, const LogProbBounds& bounds) {
    if (!std::isfinite(logp)) throw std::domain_error("normalize_logp: non-finite log-probability");
    return std::clamp(logp, bounds.lo, bounds.hi);
}

GaussianPolicy GaussianPolicy::create(std::size_t state_dim, std::size_t action_dim,
                                      std::vector<std::size_t> hidden, std::uint64_t seed, Activation act) {
    if (state_dim == 0 || action_dim == 0) throw std::invalid_argument("policy dimensions must be positive");
    std::vector<std::size_t> sizes{state_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * action_dim);
    GaussianPolicy p;
    p.spec = MlpSpec::uniform(std::move(sizes), act, seed);
    p.params = init_params(p.spec);
    p.state_dim = state_dim;
    p.action_dim = action_dim;
    p.normalizer = StateNormalizer::identity(state_dim);
    return p;
}

PolicyEval policy_log_prob_batch(const GaussianPolicy& policy, const Matrix& states, const Matrix& actions) {
    const auto ad = static_cast<Eigen::Index>(policy.action_dim);
    if (states.rows() != actions.rows() || actions.cols() != ad) {
        throw std::invalid_argument("policy_log_prob: state/action batch shapes do not match the policy");
    }
    if (!states.allFinite() || !actions.allFinite()) {
        throw std::domain_error("policy_log_prob: non-finite state or action");
    }
    PolicyEval ev;
    ev.output = mlp_forward_batch(policy.spec, policy.params.span(), policy.normalizer.apply(states), &ev.tape);
    const Eigen::Index n = states.rows();
    ev.u.resize(n, ad);
    ev.logp.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double lp = 0.0;
        for (Eigen::Index i = 0; i < ad; ++i) {
            const double a = clamp_action(actions(j, i));
            const double u = std::atanh(a);
            ev.u(j, i) = u;
            const double mu = ev.output(j, i);
            const double log_std = std::clamp(ev.output(j, ad + i), policy.log_std_min, policy.log_std_max);
            const double z = (u - mu) * std::exp(-log_std);
            lp += -0.5 * z * z - log_std - kHalfLog2Pi - std::log(1.0 - a * a + kTanhCorrectionEps);
        }
        ev.logp(j) = lp;
    }
    return ev;
}

void policy_log_prob_backward(const GaussianPolicy& policy, const PolicyEval& eval, const Vector& d_logp,
                              std::span<double> grad) {
    const auto ad = static_cast<Eigen::Index>(policy.action_dim);
    const Eigen::Index n = eval.output.rows();
    if (d_logp.size() != n) throw std::invalid_argument("policy_log_prob_backward: upstream length mismatch");
    Matrix d_out = Matrix::Zero(n, 2 * ad);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double g = d_logp(j);
        if (g == 0.0) continue;
        for (Eigen::Index i = 0; i < ad; ++i) {
            const double mu = eval.output(j, i);
            const double raw = eval.output(j, ad + i);
            const double log_std = std::clamp(raw, policy.log_std_min, policy.log_std_max);
            const double inv_var = std::exp(-2.0 * log_std);
            const double diff = eval.u(j, i) - mu;
            d_out(j, i) = g * diff * inv_var;
            if (raw > policy.log_std_min && raw < policy.log_std_max) {
                d_out(j, ad + i) = g * (diff * diff * inv_var - 1.0);
            }
        }
    }
    mlp_backward_batch(policy.spec, policy.params.span(), eval.tape, d_out, grad);
}

double policy_log_prob(const GaussianPolicy& policy, std::span<const double> s, std::span<const double> a) {
    if (s.size() != policy.state_dim || a.size() != policy.action_dim) {
        throw std::invalid_argument("policy_log_prob: state or action dimension mismatch");
    }
    require_finite(s, "state");
    require_finite(a, "action");
    return policy_log_prob_batch(policy, row_of(s), row_of(a)).logp(0);
}

std::vector<double> policy_sample(const GaussianPolicy& policy, std::span<const double> s,
                                  std::mt19937_64& rng, bool deterministic) {
    if (s.size() != policy.state_dim) throw std::invalid_argument("policy_sample: state dimension mismatch");
    const Matrix out = mlp_forward_batch(policy.spec, policy.params.span(), policy.normalizer.apply(row_of(s)));
    std::vector<double> action(policy.action_dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto ad = static_cast<Eigen::Index>(policy.action_dim);
    for (Eigen::Index i = 0; i < ad; ++i) {
        double pre = out(0, i);
        if (!deterministic) {
            const double log_std = std::clamp(out(0, ad + i), policy.log_std_min, policy.log_std_max);
            pre += std::exp(log_std) * normal(rng);
        }
        action[static_cast<std::size_t>(i)] = clamp_action(std::tanh(pre));
    }
    return action;
}

TwoStreamDiscriminator TwoStreamDiscriminator::create(std::size_t state_dim, std::size_t action_dim,
                                                      std::size_t stream_width,
                                                      std::vector<std::size_t> merge_hidden,
                                                      std::uint64_t seed) {
    if (state_dim == 0 || action_dim == 0 || stream_width == 0) {
        throw std::invalid_argument("discriminator dimensions must be positive");
    }
    TwoStreamDiscriminator d;
    d.state_dim = state_dim;
    d.action_dim = action_dim;
    d.sa_stream = MlpSpec::uniform({state_dim + action_dim, stream_width}, Activation::relu, seed);
    d.logp_stream = MlpSpec::uniform({1, stream_width}, Activation::relu, seed + 1);
    std::vector<std::size_t> sizes{2 * stream_width};
    sizes.insert(sizes.end(), merge_hidden.begin(), merge_hidden.end());
    sizes.push_back(1);
    d.merge = MlpSpec::uniform(std::move(sizes), Activation::relu, seed + 2);
    const auto specs = d.specs();
    d.params = ParamVector::zeros(specs);
    for (std::size_t i = 0; i < specs.size(); ++i) init_block(specs[i], d.params.block(i, specs[i]));
    d.normalizer = StateNormalizer::identity(state_dim);
    return d;
}

void TwoStreamDiscriminator::zero_output_layer() {
    const auto& last = params.layout.back();
    std::fill_n(params.values.begin() + static_cast<std::ptrdiff_t>(last.weight_offset), last.in * last.out, 0.0);
    std::fill_n(params.values.begin() + static_cast<std::ptrdiff_t>(last.bias_offset), last.out, 0.0);
}

double logistic(double logit) {
    constexpr double lo = std::numeric_limits<double>::min();
    const double hi = std::nextafter(1.0, 0.0);
    const double d = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
    return std::clamp(d, lo, hi);
}

DiscriminatorEval discriminator_forward_batch(const TwoStreamDiscriminator& disc, const Matrix& states,
                                              const Matrix& actions, const Vector& logp) {
    const Eigen::Index n = states.rows();
    if (actions.rows() != n || logp.size() != n ||
        static_cast<std::size_t>(actions.cols()) != disc.action_dim) {
        throw std::invalid_argument("discriminator_forward: batch shapes do not match the discriminator");
    }
    const auto sd = static_cast<Eigen::Index>(disc.state_dim);
    const auto ad = static_cast<Eigen::Index>(disc.action_dim);
    Matrix sa(n, sd + ad);
    sa.leftCols(sd) = disc.normalizer.apply(states);
    sa.rightCols(ad) = actions;

    DiscriminatorEval ev;
    const Matrix h_sa = mlp_forward_batch(disc.sa_stream, disc.params.block(0, disc.sa_stream), sa, &ev.sa_tape);
    const Matrix h_lp = mlp_forward_batch(disc.logp_stream, disc.params.block(1, disc.logp_stream),
                                          Matrix(logp), &ev.logp_tape);
    ev.hidden_pre.resize(n, h_sa.cols() + h_lp.cols());
    ev.hidden_pre << h_sa, h_lp;
    const Matrix hidden = ev.hidden_pre.cwiseMax(0.0);
    const Matrix out = mlp_forward_batch(disc.merge, disc.params.block(2, disc.merge), hidden, &ev.merge_tape);
    ev.logit = out.col(0);
    ev.d.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) ev.d(j) = logistic(ev.logit(j));
    return ev;
}

void discriminator_backward(const TwoStreamDiscriminator& disc, const DiscriminatorEval& eval,
                            const Vector& d_logit, std::span<double> grad) {
    if (grad.size() != disc.params.size()) throw std::invalid_argument("discriminator_backward: gradient size");
    const auto off_sa = disc.params.block_offsets[0];
    const auto off_lp = disc.params.block_offsets[1];
    const auto off_m = disc.params.block_offsets[2];
    Matrix d_hidden;
    mlp_backward_batch(disc.merge, disc.params.block(2, disc.merge), eval.merge_tape, Matrix(d_logit),
                       grad.subspan(off_m, disc.merge.param_count()), &d_hidden);
    d_hidden = (eval.hidden_pre.array() > 0.0).select(d_hidden, 0.0);
    const auto w = static_cast<Eigen::Index>(disc.sa_stream.output_size());
    mlp_backward_batch(disc.sa_stream, disc.params.block(0, disc.sa_stream), eval.sa_tape, d_hidden.leftCols(w),
                       grad.subspan(off_sa, disc.sa_stream.param_count()));
    mlp_backward_batch(disc.logp_stream, disc.params.block(1, disc.logp_stream), eval.logp_tape,
                       d_hidden.rightCols(d_hidden.cols() - w), grad.subspan(off_lp, disc.logp_stream.param_count()));
}

double discriminator_forward(const TwoStreamDiscriminator& disc, std::span<const double> s,
                             std::span<const double> a, double logp) {
    if (s.size() != disc.state_dim || a.size() != disc.action_dim) {
        throw std::invalid_argument("discriminator_forward: state or action dimension mismatch");
    }
    Vector lp(1);
    lp(0) = logp;
    return discriminator_forward_batch(disc, row_of(s), row_of(a), lp).d(0);
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw std::invalid_argument("rows_to_matrix: ragged rows");
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return m;
}

}  // namespace dwbc
