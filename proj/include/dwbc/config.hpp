#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dwbc {

enum class Algo { dwbc, bc_exp, bc_all, bcnd_lite };

std::string to_string(Algo algo);
Algo algo_from_string(const std::string& name);

/// All hyperparameters of a training run. Defaults are desk-scale; the
/// comments give the full-scale values where they differ.
struct TrainConfig {
    Algo algo = Algo::dwbc;
    double alpha = 7.5;
    double eta = 0.5;
    std::size_t batch_size = 256;
    double policy_lr = 1e-4;
    double disc_lr = 1e-4;
    std::size_t policy_update_period = 1;
    std::size_t disc_update_period = 100;
    std::size_t total_steps = 20000;  // 500000 at full scale
    std::size_t eval_period = 1000;   // 5000 at full scale
    std::size_t eval_episodes = 10;
    double gamma = 0.99;  // recorded only; no loss discounts
    std::uint64_t seed = 0;
    double weight_decay = 0.005;
    double d_clip_lo = 0.1;
    double d_clip_hi = 0.9;
    double logp_lo = -20.0;
    double logp_hi = 10.0;
    std::vector<std::size_t> policy_hidden{64, 64};  // {256, 256} at full scale
    std::size_t disc_stream_width = 32;               // 128 at full scale
    std::vector<std::size_t> disc_hidden{64};
    std::size_t bcnd_rounds = 5;
    /// When false the eta / (c (1 - c)) expert correction is dropped (ablation).
    bool correction = true;

    bool operator==(const TrainConfig&) const = default;
    void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues to_key_values(const TrainConfig& cfg);
/// Overrides the fields named in `kv`; unknown keys are rejected.
void apply_key_values(TrainConfig& cfg, const KeyValues& kv);

/// Parses `key = value` lines; `#` starts a comment.
KeyValues read_key_value_file(const std::filesystem::path& path);

/// Independent, reproducible sub-stream seed (data, init, train, eval, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Reads DWBC_LOG_LEVEL once; defaults to info.
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

/// Keeps freed training buffers in the heap instead of returning them to the
/// OS after every step (glibc only; a no-op elsewhere). Process-wide.
void use_large_heap_thresholds();

std::string join_sizes(const std::vector<std::size_t>& v);
std::vector<std::size_t> parse_sizes(const std::string& text);

}  // namespace dwbc
