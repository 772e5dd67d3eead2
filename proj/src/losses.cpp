#include "dwbc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dwbc {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require_nonempty(const Batch& b, const char* what) {
    if (b.size() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
    b.validate();
}

Vector normalized_logp(const Vector& logp, const LogProbBounds& bounds) {
    Vector out(logp.size());
    for (Eigen::Index j = 0; j < logp.size(); ++j) out(j) = normalize_logp(logp(j), bounds);
    return out;
}

}  // namespace

void DwbcHyper::validate() const {
    if (!(alpha >= 1.0)) throw std::invalid_argument("alpha must be >= 1");
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    if (!(d_clip_lo > 0.0 && d_clip_lo < d_clip_hi && d_clip_hi < 1.0)) {
        throw std::invalid_argument("d clip bounds must satisfy 0 < lo < hi < 1");
    }
}

double DwbcHyper::clip(double d) const { return std::clamp(d, d_clip_lo, d_clip_hi); }

void Batch::validate() const {
    if (states.rows() != actions.rows()) throw std::invalid_argument("Batch: state/action row counts differ");
}

void WeightStats::add(Source source, double w) {
    if (source == Source::expert) {
        expert_min = std::min(expert_min, w);
        expert_max = std::max(expert_max, w);
        expert_sum += w;
        ++expert_count;
    } else {
        offline_min = std::min(offline_min, w);
        offline_max = std::max(offline_max, w);
        offline_sum += w;
        ++offline_count;
    }
}

void WeightStats::merge(const WeightStats& o) {
    expert_min = std::min(expert_min, o.expert_min);
    expert_max = std::max(expert_max, o.expert_max);
    expert_sum += o.expert_sum;
    expert_count += o.expert_count;
    offline_min = std::min(offline_min, o.offline_min);
    offline_max = std::max(offline_max, o.offline_max);
    offline_sum += o.offline_sum;
    offline_count += o.offline_count;
}

double WeightStats::expert_mean() const {
    return expert_count ? expert_sum / static_cast<double>(expert_count) : 0.0;
}

double WeightStats::offline_mean() const {
    return offline_count ? offline_sum / static_cast<double>(offline_count) : 0.0;
}

Batch stack_batches(const Batch& batch_e, const Batch& batch_o) {
    if (batch_e.states.cols() != batch_o.states.cols() || batch_e.actions.cols() != batch_o.actions.cols()) {
        throw std::invalid_argument("stack_batches: expert and offline batches have different widths");
    }
    Batch out;
    out.source = Source::expert;
    out.states.resize(batch_e.states.rows() + batch_o.states.rows(), batch_e.states.cols());
    out.states << batch_e.states, batch_o.states;
    out.actions.resize(batch_e.actions.rows() + batch_o.actions.rows(), batch_e.actions.cols());
    out.actions << batch_e.actions, batch_o.actions;
    return out;
}

double weighted_bc_kernel(const Vector& logp, std::span<const double> weights, Vector& d_logp) {
    const Eigen::Index n = logp.size();
    if (static_cast<std::size_t>(n) != weights.size()) {
        throw std::invalid_argument("weighted_bc_loss: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(n) + " samples");
    }
    d_logp.resize(n);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double w = weights[static_cast<std::size_t>(j)];
        if (!std::isfinite(w)) throw std::domain_error("weighted_bc_loss: non-finite weight");
        total += -logp(j) * w;
        d_logp(j) = -w / static_cast<double>(n);
    }
    return total / static_cast<double>(n);
}

double pu_kernel(const Vector& logit, Eigen::Index n_expert, double eta, Vector& d_logit) {
    const Eigen::Index n = logit.size();
    const Eigen::Index n_off = n - n_expert;
    if (n_expert <= 0 || n_off <= 0) throw std::invalid_argument("pu_discriminator_loss: empty batch");
    d_logit.resize(n);
    double pos = 0.0;      // E_e[-log d]
    double neg_e = 0.0;    // E_e[-log(1-d)]
    double neg_o = 0.0;    // E_o[-log(1-d)]
    const double ne = static_cast<double>(n_expert);
    const double no = static_cast<double>(n_off);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double z = logit(j);
        const double sig = logistic(z);
        if (j < n_expert) {
            pos += softplus(-z);
            neg_e += softplus(z);
            // eta (sig - 1) - eta sig
            d_logit(j) = -eta / ne;
        } else {
            neg_o += softplus(z);
            d_logit(j) = sig / no;
        }
    }
    return eta * pos / ne + neg_o / no - eta * neg_e / ne;
}

double dwbc_kernel(const Vector& logp, Eigen::Index n_expert, const Vector& d, const DwbcHyper& hyper,
                   Vector& d_logp, WeightStats* stats) {
    const Eigen::Index n = logp.size();
    const Eigen::Index n_off = n - n_expert;
    if (n_expert <= 0 || n_off <= 0) throw std::invalid_argument("dwbc_policy_loss: empty batch");
    if (d.size() != n) throw std::invalid_argument("dwbc_policy_loss: discriminator output length mismatch");
    const double ne = static_cast<double>(n_expert);
    const double no = static_cast<double>(n_off);
    d_logp.resize(n);
    double bc_term = 0.0;
    double expert_correction = 0.0;
    double offline_term = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double c = hyper.clip(d(j));
        const double nll = -logp(j);
        if (j < n_expert) {
            const double corr = hyper.eta / (c * (1.0 - c));
            bc_term += nll;
            expert_correction += nll * corr;
            d_logp(j) = -(hyper.alpha - corr) / ne;
            if (stats) stats->add(Source::expert, hyper.alpha - corr);
        } else {
            const double w = 1.0 / (1.0 - c);
            offline_term += nll * w;
            d_logp(j) = -w / no;
            if (stats) stats->add(Source::offline, w);
        }
    }
    return hyper.alpha * bc_term / ne - expert_correction / ne + offline_term / no;
}

double corrective_kernel(const Vector& logp, Eigen::Index n_expert, const Vector& d, const DwbcHyper& hyper,
                         Vector& d_logp) {
    const Eigen::Index n = logp.size();
    const Eigen::Index n_off = n - n_expert;
    if (n_expert <= 0 || n_off <= 0) throw std::invalid_argument("corrective_loss: empty batch");
    if (d.size() != n) throw std::invalid_argument("corrective_loss: discriminator output length mismatch");
    const double ne = static_cast<double>(n_expert);
    const double no = static_cast<double>(n_off);
    d_logp.resize(n);
    double expert_term = 0.0;
    double offline_term = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double c = hyper.clip(d(j));
        if (j < n_expert) {
            const double coef = hyper.eta / c + hyper.eta / (1.0 - c);
            expert_term += logp(j) * coef;
            d_logp(j) = coef / ne;
        } else {
            const double coef = 1.0 / (1.0 - c);
            offline_term += logp(j) * coef;
            d_logp(j) = -coef / no;
        }
    }
    return expert_term / ne - offline_term / no;
}

LossResult bc_loss(const GaussianPolicy& policy, const Batch& batch_e) {
    require_nonempty(batch_e, "bc_loss");
    if (batch_e.source != Source::expert) throw std::invalid_argument("bc_loss: batch must come from D_e");
    const std::vector<double> ones(batch_e.size(), 1.0);
    return weighted_bc_loss(policy, batch_e, ones);
}

LossResult weighted_bc_loss(const GaussianPolicy& policy, const Batch& batch, std::span<const double> weights) {
    require_nonempty(batch, "weighted_bc_loss");
    const PolicyEval ev = policy_log_prob_batch(policy, batch.states, batch.actions);
    Vector d_logp;
    LossResult r;
    r.value = weighted_bc_kernel(ev.logp, weights, d_logp);
    r.policy_grad.assign(policy.params.size(), 0.0);
    policy_log_prob_backward(policy, ev, d_logp, r.policy_grad);
    return r;
}

Vector discriminator_scores(const TwoStreamDiscriminator& disc, const GaussianPolicy& policy,
                            const Matrix& states, const Matrix& actions, const LogProbBounds& bounds) {
    const PolicyEval ev = policy_log_prob_batch(policy, states, actions);
    return discriminator_forward_batch(disc, states, actions, normalized_logp(ev.logp, bounds)).d;
}

LossResult pu_discriminator_loss(const TwoStreamDiscriminator& disc, const GaussianPolicy& policy,
                                 const Batch& batch_e, const Batch& batch_o, double eta,
                                 const LogProbBounds& bounds) {
    require_nonempty(batch_e, "pu_discriminator_loss");
    require_nonempty(batch_o, "pu_discriminator_loss");
    const Batch joint = stack_batches(batch_e, batch_o);
    const PolicyEval pev = policy_log_prob_batch(policy, joint.states, joint.actions);
    const DiscriminatorEval dev =
        discriminator_forward_batch(disc, joint.states, joint.actions, normalized_logp(pev.logp, bounds));
    Vector d_logit;
    LossResult r;
    r.value = pu_kernel(dev.logit, static_cast<Eigen::Index>(batch_e.size()), eta, d_logit);
    r.disc_grad.assign(disc.params.size(), 0.0);
    discriminator_backward(disc, dev, d_logit, r.disc_grad);
    r.policy_grad.assign(policy.params.size(), 0.0);
    return r;
}

double bc_weight(double d_value, Source source, const DwbcHyper& hyper) {
    if (!(d_value > 0.0 && d_value < 1.0)) {
        throw std::domain_error("bc_weight: discriminator value " + std::to_string(d_value) + " outside (0, 1)");
    }
    const double c = hyper.clip(d_value);
    if (source == Source::expert) return hyper.alpha - hyper.eta / (c * (1.0 - c));
    return 1.0 / (1.0 - c);
}

LossResult corrective_loss(const GaussianPolicy& policy, const TwoStreamDiscriminator& disc,
                           const Batch& batch_e, const Batch& batch_o, const DwbcHyper& hyper,
                           const LogProbBounds& bounds) {
    require_nonempty(batch_e, "corrective_loss");
    require_nonempty(batch_o, "corrective_loss");
    const Batch joint = stack_batches(batch_e, batch_o);
    const PolicyEval pev = policy_log_prob_batch(policy, joint.states, joint.actions);
    const Vector d =
        discriminator_forward_batch(disc, joint.states, joint.actions, normalized_logp(pev.logp, bounds)).d;
    Vector d_logp;
    LossResult r;
    r.value = corrective_kernel(pev.logp, static_cast<Eigen::Index>(batch_e.size()), d, hyper, d_logp);
    r.policy_grad.assign(policy.params.size(), 0.0);
    policy_log_prob_backward(policy, pev, d_logp, r.policy_grad);
    r.disc_grad.assign(disc.params.size(), 0.0);
    return r;
}

LossResult dwbc_policy_loss(const GaussianPolicy& policy, const TwoStreamDiscriminator& disc,
                            const Batch& batch_e, const Batch& batch_o, const DwbcHyper& hyper,
                            const LogProbBounds& bounds, WeightStats* stats) {
    require_nonempty(batch_e, "dwbc_policy_loss");
    require_nonempty(batch_o, "dwbc_policy_loss");
    const Batch joint = stack_batches(batch_e, batch_o);
    const PolicyEval pev = policy_log_prob_batch(policy, joint.states, joint.actions);
    const Vector d =
        discriminator_forward_batch(disc, joint.states, joint.actions, normalized_logp(pev.logp, bounds)).d;
    Vector d_logp;
    LossResult r;
    r.value = dwbc_kernel(pev.logp, static_cast<Eigen::Index>(batch_e.size()), d, hyper, d_logp, stats);
    r.policy_grad.assign(policy.params.size(), 0.0);
    policy_log_prob_backward(policy, pev, d_logp, r.policy_grad);
    r.disc_grad.assign(disc.params.size(), 0.0);
    return r;
}

}  // namespace dwbc
