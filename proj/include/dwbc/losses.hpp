#pragma once

// Training objectives with analytic gradients.
//
// Two-network losses use stop-gradient semantics in both directions:
// discriminator outputs are constants inside the policy objectives, and
// log pi inputs are constants inside the discriminator objective.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dwbc/models.hpp"
#include "dwbc/nn.hpp"

namespace dwbc {

enum class Source { expert, offline };

struct DwbcHyper {
    double alpha = 7.5;
    double eta = 0.5;
    double d_clip_lo = 0.1;
    double d_clip_hi = 0.9;

    void validate() const;
    double clip(double d) const;
};

/// Rows of `states` / `actions` are samples. Carries no reward.
struct Batch {
    Matrix states;
    Matrix actions;
    Source source = Source::expert;

    std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
    void validate() const;
};

struct LossResult {
    double value = 0.0;
    std::vector<double> policy_grad;  // empty when the loss does not involve the policy
    std::vector<double> disc_grad;    // empty when the loss does not involve the discriminator
};

/// Running min/max/mean of emitted BC weights.
struct WeightStats {
    double expert_min = std::numeric_limits<double>::infinity();
    double expert_max = -std::numeric_limits<double>::infinity();
    double expert_sum = 0.0;
    std::size_t expert_count = 0;
    double offline_min = std::numeric_limits<double>::infinity();
    double offline_max = -std::numeric_limits<double>::infinity();
    double offline_sum = 0.0;
    std::size_t offline_count = 0;

    void add(Source source, double w);
    void merge(const WeightStats& other);
    double expert_mean() const;
    double offline_mean() const;
};

/// Mean of -log pi(a|s) over an expert batch.
LossResult bc_loss(const GaussianPolicy& policy, const Batch& batch_e);

/// Mean of -log pi(a|s) * w over the batch.
LossResult weighted_bc_loss(const GaussianPolicy& policy, const Batch& batch, std::span<const double> weights);

/// eta E_e[-log d] + E_o[-log(1-d)] - eta E_e[-log(1-d)], evaluated in logit
/// space. The gradient is taken w.r.t. the discriminator parameters only.
LossResult pu_discriminator_loss(const TwoStreamDiscriminator& disc, const GaussianPolicy& policy,
                                 const Batch& batch_e, const Batch& batch_o, double eta,
                                 const LogProbBounds& bounds = {});

/// Expert rows: alpha - eta / (c (1 - c)); offline rows: 1 / (1 - c), with c
/// the clipped discriminator output.
double bc_weight(double d_value, Source source, const DwbcHyper& hyper);

/// L_w = E_e[log pi (eta/c + eta/(1-c))] - E_o[log pi / (1-c)].
LossResult corrective_loss(const GaussianPolicy& policy, const TwoStreamDiscriminator& disc,
                           const Batch& batch_e, const Batch& batch_o, const DwbcHyper& hyper,
                           const LogProbBounds& bounds = {});

/// alpha E_e[-log pi] - E_e[-log pi * eta/(c(1-c))] + E_o[-log pi / (1-c)].
LossResult dwbc_policy_loss(const GaussianPolicy& policy, const TwoStreamDiscriminator& disc,
                            const Batch& batch_e, const Batch& batch_o, const DwbcHyper& hyper,
                            const LogProbBounds& bounds = {}, WeightStats* stats = nullptr);

/// Discriminator outputs for each row, fed with the policy's normalized log pi.
Vector discriminator_scores(const TwoStreamDiscriminator& disc, const GaussianPolicy& policy,
                            const Matrix& states, const Matrix& actions, const LogProbBounds& bounds);

// Kernels over precomputed quantities. Rows [0, n_expert) are expert rows,
// the rest are offline rows. Each returns the loss value and writes
// d(loss)/d(input) into the output vector.

double weighted_bc_kernel(const Vector& logp, std::span<const double> weights, Vector& d_logp);
double pu_kernel(const Vector& logit, Eigen::Index n_expert, double eta, Vector& d_logit);
double dwbc_kernel(const Vector& logp, Eigen::Index n_expert, const Vector& d, const DwbcHyper& hyper,
                   Vector& d_logp, WeightStats* stats = nullptr);
double corrective_kernel(const Vector& logp, Eigen::Index n_expert, const Vector& d, const DwbcHyper& hyper,
                         Vector& d_logp);

/// Stacks expert rows on top of offline rows.
Batch stack_batches(const Batch& batch_e, const Batch& batch_o);

}  // namespace dwbc
