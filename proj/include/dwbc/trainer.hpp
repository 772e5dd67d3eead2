#pragma once

// Alternating supervised training loop for DWBC and the BC baselines,
// evaluation, checkpoints and metrics files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dwbc/config.hpp"
#include "dwbc/data.hpp"
#include "dwbc/envs.hpp"
#include "dwbc/losses.hpp"
#include "dwbc/models.hpp"

namespace dwbc {

struct Checkpoint {
    TrainConfig config;
    std::string env_name;
    std::uint64_t step = 0;
    GaussianPolicy policy;
    std::optional<TwoStreamDiscriminator> disc;
};

/// Text metadata block, then per parameter group a little-endian u64 count
/// followed by that many little-endian float32 values.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Rejects version mismatches, corrupted payloads and, when given,
/// dimensions that differ from the expected ones.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::size_t> expected_state_dim = std::nullopt,
                           std::optional<std::size_t> expected_action_dim = std::nullopt);

struct MetricsRecord {
    std::uint64_t step = 0;
    double policy_loss = 0.0;
    std::optional<double> disc_loss;
    double mean_expert_weight = 0.0;
    double mean_offline_weight = 0.0;
    double eval_mean_return = 0.0;
    double normalized_score = 0.0;
    double wall_time_seconds = 0.0;
};

/// Wall time is machine dependent and goes to a separate timing file so
/// that equal seeds give byte-identical metrics files.
void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
void write_timing(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

struct EvalReport {
    double mean_return = 0.0;
    double std_return = 0.0;
    double normalized_score = 0.0;
    std::size_t episodes = 0;
    std::vector<double> returns;
};

/// Deterministic-action rollouts scored against the reference returns.
EvalReport evaluate(const GaussianPolicy& policy, const Env& env, std::size_t n_episodes, std::mt19937_64& rng,
                    const ReferenceReturns& refs);

/// exp(log pi'(a|s)) under a frozen policy, clamped to [0, 1]. Without a
/// previous policy every weight is 1.
std::vector<double> bcnd_lite_weights(const GaussianPolicy* prev_policy, const Batch& batch);

struct TrainOptions {
    /// Steps at which a copy of the policy is kept (e.g. mid-training snapshots).
    std::vector<std::uint64_t> snapshot_steps;
    /// Called after every evaluation.
    std::function<void(const MetricsRecord&)> on_eval;
    /// Called with the weights of every DWBC policy update.
    std::function<void(const WeightStats&)> on_weights;
    bool evaluate = true;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<MetricsRecord> metrics;
    std::vector<std::pair<std::uint64_t, GaussianPolicy>> snapshots;
    WeightStats weights;
    std::size_t disc_updates = 0;
    std::size_t policy_updates = 0;
    std::size_t negative_pu_losses = 0;
    /// Time spent in training steps, excluding evaluation.
    double step_seconds = 0.0;
    /// Mean normalized score over the last (up to) 10 evaluations.
    double final_score = 0.0;
};

/// Thrown when a loss turns non-finite; carries the partial history.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::uint64_t step, const std::string& what_loss);
    std::uint64_t step() const { return step_; }

private:
    std::uint64_t step_;
};

TrainResult train(const TrainConfig& config, const Dataset& d_e, const Dataset* d_o, const Env& env,
                  const ReferenceReturns& refs, const TrainOptions& options = {});

}  // namespace dwbc
