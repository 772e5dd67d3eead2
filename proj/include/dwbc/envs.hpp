#pragma once

// Small continuous-control test beds with scripted expert and uniform
// random behaviour, used to generate demonstrations and score policies.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dwbc/data.hpp"

namespace dwbc {

/// Double integrator on [-1, 1]^2. State (px, py, vx, vy); actions are
/// accelerations in [-1, 1]^2.
struct PointMassConfig {
    double dt = 0.05;
    double v_max = 2.0;
    double noise_std = 0.05;  // velocity noise per sqrt(second)
    double goal_x = 0.0;
    double goal_y = 0.0;
    double goal_radius = 0.05;
    double goal_bonus = 10.0;
    double min_start_distance = 0.3;
    std::size_t horizon = 100;
    double expert_kp = 4.0;
    double expert_kd = 2.5;
};

/// Position on [-1, 1]; the action is a velocity command scaled by `step`.
struct Reach1dConfig {
    double step = 0.1;
    double noise_std = 0.02;
    double goal = 0.5;
    double goal_radius = 0.05;
    double goal_bonus = 10.0;
    double min_start_distance = 0.2;
    std::size_t horizon = 30;
    double expert_gain = 8.0;
};

struct StepResult {
    std::vector<double> next_state;
    double reward = 0.0;
    bool done = false;
};

class Env {
public:
    explicit Env(PointMassConfig cfg);
    explicit Env(Reach1dConfig cfg);

    /// "point-mass" or "reach-1d".
    static Env by_name(const std::string& name);

    std::string name() const;
    std::size_t state_dim() const;
    std::size_t action_dim() const;
    std::size_t horizon() const;

    std::vector<double> reset(std::mt19937_64& rng) const;
    /// Actions outside [-1, 1] are clamped and counted in `clamped_actions()`.
    StepResult step(std::span<const double> state, std::span<const double> action, std::mt19937_64& rng) const;

    std::vector<double> expert_action(std::span<const double> state) const;
    std::vector<double> random_action(std::mt19937_64& rng) const;

    std::size_t clamped_actions() const { return clamped_; }

    const std::variant<PointMassConfig, Reach1dConfig>& config() const { return cfg_; }
    std::variant<PointMassConfig, Reach1dConfig>& config() { return cfg_; }

private:
    std::variant<PointMassConfig, Reach1dConfig> cfg_;
    mutable std::size_t clamped_ = 0;
};

/// Physical constants as `key -> value` (dt, noise_std, goal_x, ...).
std::map<std::string, std::string> env_key_values(const Env& env);
/// Overrides the named constants; unknown keys are rejected.
void apply_env_key_values(Env& env, const std::map<std::string, std::string>& kv);

using Actor = std::function<std::vector<double>(std::span<const double> state, std::mt19937_64& rng)>;

Actor expert_actor(const Env& env);
Actor random_actor(const Env& env);

struct RolloutResult {
    Trajectory trajectory;
    double episode_return = 0.0;
};

/// `max_steps` = 0 runs to the environment horizon; otherwise the episode is
/// cut after min(max_steps, horizon) steps.
RolloutResult rollout(const Env& env, const Actor& actor, std::mt19937_64& rng, std::int64_t traj_id = 0,
                      std::size_t max_steps = 0);

double normalized_score(double raw, double random_ref, double expert_ref);

struct ReferenceReturns {
    double random_ref = 0.0;
    double expert_ref = 0.0;
};

/// Mean returns of the random and scripted-expert behaviours.
ReferenceReturns measure_references(const Env& env, std::size_t episodes, std::uint64_t seed);

enum class Behavior { expert, random, noisy_expert };

/// Rolls out `n_traj` episodes of one behaviour with traj_ids first_id,
/// first_id + 1, ... `action_noise` is the Gaussian action noise of
/// `noisy_expert`; `max_steps` as in rollout().
Dataset generate_demonstrations(const Env& env, Behavior behavior, std::size_t n_traj, std::uint64_t seed,
                                std::int64_t first_id, double action_noise = 0.0, std::size_t max_steps = 0);

void save_references(const ReferenceReturns& refs, const std::filesystem::path& path);
ReferenceReturns load_references(const std::filesystem::path& path);

}  // namespace dwbc
