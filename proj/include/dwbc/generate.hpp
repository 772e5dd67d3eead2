#pragma once

// Synthetic expert/offline dataset bundles for the three data settings.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>

#include "dwbc/data.hpp"
#include "dwbc/envs.hpp"

namespace dwbc {

struct GenDataConfig {
    std::size_t expert_trajs = 10;
    std::size_t other_trajs = 200;
    /// 1: expert + random, split by X%. 2: expert + random pooled, split by
    /// return with step X. 3: expert + noisy expert, split by X%.
    int setting = 1;
    double x = 90.0;
    std::uint64_t seed = 0;
    /// Length cap of each random episode (0 = full horizon).
    std::size_t random_steps = 7;
    /// Gaussian action noise of the setting-3 behaviour.
    double noisy_expert_std = 0.5;
    std::size_t reference_episodes = 200;
};

struct GeneratedData {
    Dataset d_e;
    Dataset d_o;
    ReferenceReturns refs;
    /// traj_id -> generated by the scripted expert. Tests only.
    std::map<std::int64_t, bool> expert_label;
    std::size_t expert_transitions = 0;
    std::size_t other_transitions = 0;
};

/// Expert trajectories get ids 0..expert_trajs-1, the others follow.
GeneratedData generate_data(const Env& env, const GenDataConfig& cfg);

void save_labels(const std::map<std::int64_t, bool>& labels, const std::filesystem::path& path);
std::map<std::int64_t, bool> load_labels(const std::filesystem::path& path);

}  // namespace dwbc
