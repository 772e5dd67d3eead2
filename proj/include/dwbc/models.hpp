#pragma once

// The two learned functions: a tanh-squashed Gaussian policy and the
// two-stream discriminator d(s, a, log pi(a|s)).

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dwbc/nn.hpp"

namespace dwbc {

/// Per-dimension affine state normalization, (s - mean) / std.
struct StateNormalizer {
    std::vector<double> mean;
    std::vector<double> std;

    static StateNormalizer identity(std::size_t dim);
    /// Rows of `states` are samples. Dimensions with std below 1e-6 use std 1.
    static StateNormalizer fit(const Matrix& states);
    Matrix apply(const Matrix& states) const;
};

struct LogProbBounds {
    double lo = -20.0;
    double hi = 10.0;
    void validate() const;
};

/// Clamps a log-density into the discriminator's input range.
double normalize_logp(double logp, const LogProbBounds& bounds);

/// Clamp margin applied to stored actions sitting on the (-1, 1) boundary.
inline constexpr double kActionBoundaryMargin = 1e-6;
/// Epsilon inside log(1 - a^2 + eps) for the tanh change of variables.
inline constexpr double kTanhCorrectionEps = 1e-6;

struct GaussianPolicy {
    MlpSpec spec;  // outputs [mean..., log_std...]
    ParamVector params;
    double log_std_min = -5.0;
    double log_std_max = 2.0;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    StateNormalizer normalizer;

    static GaussianPolicy create(std::size_t state_dim, std::size_t action_dim,
                                 std::vector<std::size_t> hidden, std::uint64_t seed,
                                 Activation act = Activation::relu);
};

double policy_log_prob(const GaussianPolicy& policy, std::span<const double> s, std::span<const double> a);

std::vector<double> policy_sample(const GaussianPolicy& policy, std::span<const double> s,
                                  std::mt19937_64& rng, bool deterministic);

/// Batched log-probabilities with everything needed for the reverse pass.
struct PolicyEval {
    Vector logp;
    Matrix output;  // raw network output
    Matrix u;       // atanh of the (clamped) actions
    MlpTape tape;
};

PolicyEval policy_log_prob_batch(const GaussianPolicy& policy, const Matrix& states, const Matrix& actions);

/// Accumulates sum_j d_logp[j] * grad(log pi_j) into `grad`.
void policy_log_prob_backward(const GaussianPolicy& policy, const PolicyEval& eval, const Vector& d_logp,
                              std::span<double> grad);

/// First layer split into an (s, a) stream and a log pi stream; both are
/// concatenated, passed through ReLU and mapped by `merge` to one logit.
struct TwoStreamDiscriminator {
    MlpSpec sa_stream;
    MlpSpec logp_stream;
    MlpSpec merge;
    ParamVector params;  // blocks: sa_stream, logp_stream, merge
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    StateNormalizer normalizer;

    static TwoStreamDiscriminator create(std::size_t state_dim, std::size_t action_dim,
                                         std::size_t stream_width, std::vector<std::size_t> merge_hidden,
                                         std::uint64_t seed);
    std::vector<MlpSpec> specs() const { return {sa_stream, logp_stream, merge}; }
    /// Zeroes the final merge layer so the logit is 0 everywhere.
    void zero_output_layer();
};

/// Logistic function kept strictly inside (0, 1) in double precision.
double logistic(double logit);

double discriminator_forward(const TwoStreamDiscriminator& disc, std::span<const double> s,
                             std::span<const double> a, double logp);

struct DiscriminatorEval {
    Vector logit;
    Vector d;
    MlpTape sa_tape;
    MlpTape logp_tape;
    MlpTape merge_tape;
    Matrix hidden_pre;  // concatenated stream outputs before ReLU
};

/// `logp` must already be normalized.
DiscriminatorEval discriminator_forward_batch(const TwoStreamDiscriminator& disc, const Matrix& states,
                                              const Matrix& actions, const Vector& logp);

/// Accumulates sum_j d_logit[j] * grad(logit_j) into `grad`.
void discriminator_backward(const TwoStreamDiscriminator& disc, const DiscriminatorEval& eval,
                            const Vector& d_logit, std::span<double> grad);

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols);

}  // namespace dwbc
