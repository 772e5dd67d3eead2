#include "dwbc/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dwbc {

namespace {

double clamp_unit(double a, std::size_t& counter) {
    if (a < -1.0 || a > 1.0) ++counter;
    return std::clamp(a, -1.0, 1.0);
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

Env::Env(PointMassConfig cfg) : cfg_(cfg) {}
Env::Env(Reach1dConfig cfg) : cfg_(cfg) {}

Env Env::by_name(const std::string& name) {
    if (name == "point-mass") return Env(PointMassConfig{});
    if (name == "reach-1d") return Env(Reach1dConfig{});
    throw std::invalid_argument("unknown environment '" + name + "' (expected point-mass or reach-1d)");
}

std::string Env::name() const {
    return std::holds_alternative<PointMassConfig>(cfg_) ? "point-mass" : "reach-1d";
}

std::size_t Env::state_dim() const { return std::holds_alternative<PointMassConfig>(cfg_) ? 4 : 1; }
std::size_t Env::action_dim() const { return std::holds_alternative<PointMassConfig>(cfg_) ? 2 : 1; }

std::size_t Env::horizon() const {
    return std::visit([](const auto& c) { return c.horizon; }, cfg_);
}

std::vector<double> Env::reset(std::mt19937_64& rng) const {
    return std::visit(overloaded{
                          [&](const PointMassConfig& c) {
                              std::uniform_real_distribution<double> pos(-0.9, 0.9);
                              double x = 0.0, y = 0.0;
                              do {
                                  x = pos(rng);
                                  y = pos(rng);
                              } while (std::hypot(x - c.goal_x, y - c.goal_y) < c.min_start_distance);
                              return std::vector<double>{x, y, 0.0, 0.0};
                          },
                          [&](const Reach1dConfig& c) {
                              std::uniform_real_distribution<double> pos(-1.0, 1.0);
                              double x = 0.0;
                              do {
                                  x = pos(rng);
                              } while (std::abs(x - c.goal) < c.min_start_distance);
                              return std::vector<double>{x};
                          }},
                      cfg_);
}

StepResult Env::step(std::span<const double> state, std::span<const double> action, std::mt19937_64& rng) const {
    if (state.size() != state_dim() || action.size() != action_dim()) {
        throw std::invalid_argument("env_step: state or action dimension mismatch");
    }
    return std::visit(
        overloaded{
            [&](const PointMassConfig& c) {
                const double ax = clamp_unit(action[0], clamped_);
                const double ay = clamp_unit(action[1], clamped_);
                double px = state[0], py = state[1], vx = state[2], vy = state[3];
                px += vx * c.dt + 0.5 * ax * c.dt * c.dt;
                py += vy * c.dt + 0.5 * ay * c.dt * c.dt;
                vx += ax * c.dt;
                vy += ay * c.dt;
                if (c.noise_std > 0.0) {
                    std::normal_distribution<double> noise(0.0, c.noise_std * std::sqrt(c.dt));
                    vx += noise(rng);
                    vy += noise(rng);
                }
                // Walls absorb velocity.
                if (px < -1.0 || px > 1.0) {
                    px = std::clamp(px, -1.0, 1.0);
                    vx = 0.0;
                }
                if (py < -1.0 || py > 1.0) {
                    py = std::clamp(py, -1.0, 1.0);
                    vy = 0.0;
                }
                vx = std::clamp(vx, -c.v_max, c.v_max);
                vy = std::clamp(vy, -c.v_max, c.v_max);
                const double dist = std::hypot(px - c.goal_x, py - c.goal_y);
                StepResult r;
                r.next_state = {px, py, vx, vy};
                r.done = dist <= c.goal_radius;
                r.reward = -dist + (r.done ? c.goal_bonus : 0.0);
                return r;
            },
            [&](const Reach1dConfig& c) {
                const double a = clamp_unit(action[0], clamped_);
                double x = state[0] + c.step * a;
                if (c.noise_std > 0.0) {
                    std::normal_distribution<double> noise(0.0, c.noise_std);
                    x += noise(rng);
                }
                x = std::clamp(x, -1.0, 1.0);
                const double dist = std::abs(x - c.goal);
                StepResult r;
                r.next_state = {x};
                r.done = dist <= c.goal_radius;
                r.reward = -dist + (r.done ? c.goal_bonus : 0.0);
                return r;
            }},
        cfg_);
}

std::vector<double> Env::expert_action(std::span<const double> state) const {
    if (state.size() != state_dim()) throw std::invalid_argument("expert_action: state dimension mismatch");
    // PD control, saturated smoothly into (-1, 1).
    return std::visit(overloaded{[&](const PointMassConfig& c) {
                                     const double ux = c.expert_kp * (c.goal_x - state[0]) - c.expert_kd * state[2];
                                     const double uy = c.expert_kp * (c.goal_y - state[1]) - c.expert_kd * state[3];
                                     return std::vector<double>{std::tanh(ux), std::tanh(uy)};
                                 },
                                 [&](const Reach1dConfig& c) {
                                     return std::vector<double>{std::tanh(c.expert_gain * (c.goal - state[0]))};
                                 }},
                      cfg_);
}

std::vector<double> Env::random_action(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> a(action_dim());
    for (auto& x : a) x = u(rng);
    return a;
}

namespace {

using Field = std::variant<double*, std::size_t*>;

std::map<std::string, Field> fields_of(std::variant<PointMassConfig, Reach1dConfig>& cfg) {
    return std::visit(overloaded{[](PointMassConfig& c) {
                                     return std::map<std::string, Field>{
                                         {"dt", &c.dt},
                                         {"v_max", &c.v_max},
                                         {"noise_std", &c.noise_std},
                                         {"goal_x", &c.goal_x},
                                         {"goal_y", &c.goal_y},
                                         {"goal_radius", &c.goal_radius},
                                         {"goal_bonus", &c.goal_bonus},
                                         {"min_start_distance", &c.min_start_distance},
                                         {"horizon", &c.horizon},
                                         {"expert_kp", &c.expert_kp},
                                         {"expert_kd", &c.expert_kd}};
                                 },
                                 [](Reach1dConfig& c) {
                                     return std::map<std::string, Field>{
                                         {"step", &c.step},
                                         {"noise_std", &c.noise_std},
                                         {"goal", &c.goal},
                                         {"goal_radius", &c.goal_radius},
                                         {"goal_bonus", &c.goal_bonus},
                                         {"min_start_distance", &c.min_start_distance},
                                         {"horizon", &c.horizon},
                                         {"expert_gain", &c.expert_gain}};
                                 }},
                      cfg);
}

}  // namespace

std::map<std::string, std::string> env_key_values(const Env& env) {
    auto cfg = env.config();
    std::map<std::string, std::string> out;
    for (const auto& [k, f] : fields_of(cfg)) {
        out[k] = std::visit(overloaded{[](double* d) { return format_double(*d); },
                                       [](std::size_t* n) { return std::to_string(*n); }},
                            f);
    }
    return out;
}

void apply_env_key_values(Env& env, const std::map<std::string, std::string>& kv) {
    auto fields = fields_of(env.config());
    for (const auto& [k, v] : kv) {
        const auto it = fields.find(k);
        if (it == fields.end()) throw std::invalid_argument("unknown " + env.name() + " constant '" + k + "'");
        std::visit(overloaded{[&](double* d) { *d = parse_double(v); },
                              [&](std::size_t* n) {
                                  std::size_t pos = 0;
                                  const long long x = std::stoll(v, &pos);
                                  if (pos != v.size() || x < 1) {
                                      throw std::invalid_argument("constant '" + k + "' must be a positive integer");
                                  }
                                  *n = static_cast<std::size_t>(x);
                              }},
                   it->second);
    }
}

Actor expert_actor(const Env& env) {
    return [&env](std::span<const double> s, std::mt19937_64&) { return env.expert_action(s); };
}

Actor random_actor(const Env& env) {
    return [&env](std::span<const double>, std::mt19937_64& rng) { return env.random_action(rng); };
}

RolloutResult rollout(const Env& env, const Actor& actor, std::mt19937_64& rng, std::int64_t traj_id,
                      std::size_t max_steps) {
    RolloutResult out;
    out.trajectory.traj_id = traj_id;
    const std::size_t limit = max_steps == 0 ? env.horizon() : std::min(max_steps, env.horizon());
    std::vector<double> state = env.reset(rng);
    for (std::size_t t = 0; t < limit; ++t) {
        auto action = actor(state, rng);
        for (auto& a : action) a = std::clamp(a, -1.0, 1.0);
        StepResult sr = env.step(state, action, rng);
        out.episode_return += sr.reward;
        out.trajectory.transitions.push_back(Transition{state, action, sr.next_state, sr.reward, sr.done});
        state = std::move(sr.next_state);
        if (sr.done) break;
    }
    return out;
}

double normalized_score(double raw, double random_ref, double expert_ref) {
    if (!(expert_ref > random_ref)) throw std::invalid_argument("normalized_score: expert reference must exceed random");
    return 100.0 * (raw - random_ref) / (expert_ref - random_ref);
}

ReferenceReturns measure_references(const Env& env, std::size_t episodes, std::uint64_t seed) {
    if (episodes == 0) throw std::invalid_argument("measure_references: need at least one episode");
    std::mt19937_64 rng_r(seed);
    std::mt19937_64 rng_e(seed ^ 0x9e3779b97f4a7c15ULL);
    ReferenceReturns refs;
    const auto rand = random_actor(env);
    const auto expert = expert_actor(env);
    for (std::size_t i = 0; i < episodes; ++i) {
        refs.random_ref += rollout(env, rand, rng_r).episode_return;
        refs.expert_ref += rollout(env, expert, rng_e).episode_return;
    }
    refs.random_ref /= static_cast<double>(episodes);
    refs.expert_ref /= static_cast<double>(episodes);
    return refs;
}

Dataset generate_demonstrations(const Env& env, Behavior behavior, std::size_t n_traj, std::uint64_t seed,
                                std::int64_t first_id, double action_noise, std::size_t max_steps) {
    Dataset ds;
    ds.state_dim = env.state_dim();
    ds.action_dim = env.action_dim();
    ds.role = DatasetRole::unsplit;
    std::mt19937_64 rng(seed);
    Actor actor;
    switch (behavior) {
        case Behavior::expert: actor = expert_actor(env); break;
        case Behavior::random: actor = random_actor(env); break;
        case Behavior::noisy_expert:
            actor = [&env, action_noise](std::span<const double> s, std::mt19937_64& r) {
                std::normal_distribution<double> noise(0.0, action_noise);
                auto a = env.expert_action(s);
                for (auto& x : a) x = std::clamp(x + noise(r), -1.0, 1.0);
                return a;
            };
            break;
    }
    for (std::size_t i = 0; i < n_traj; ++i) {
        ds.trajectories.push_back(rollout(env, actor, rng, first_id + static_cast<std::int64_t>(i), max_steps).trajectory);
    }
    return ds;
}

void save_references(const ReferenceReturns& refs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "random_ref=" << format_double(refs.random_ref) << '\n'
        << "expert_ref=" << format_double(refs.expert_ref) << '\n';
}

ReferenceReturns load_references(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open reference file '" + path.string() + "'");
    ReferenceReturns refs;
    bool have_r = false, have_e = false;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const auto key = line.substr(0, eq);
        const double val = parse_double(line.substr(eq + 1));
        if (key == "random_ref") {
            refs.random_ref = val;
            have_r = true;
        } else if (key == "expert_ref") {
            refs.expert_ref = val;
            have_e = true;
        }
    }
    if (!have_r || !have_e) throw std::runtime_error("reference file '" + path.string() + "' is incomplete");
    return refs;
}

}  // namespace dwbc
