#include "dwbc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#if defined(__SSE__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace dwbc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector clamp_logp(const Vector& logp, const LogProbBounds& bounds) {
    Vector out(logp.size());
    for (Eigen::Index j = 0; j < logp.size(); ++j) out(j) = normalize_logp(logp(j), bounds);
    return out;
}

// Subnormals flushed to zero for the lifetime of the guard.
class FlushDenormals {
public:
    FlushDenormals() {
#if defined(__SSE__)
        saved_ = _mm_getcsr();
        _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
        _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
    }
    ~FlushDenormals() {
#if defined(__SSE__)
        _mm_setcsr(saved_);
#endif
    }
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
    unsigned saved_ = 0;
};

}  // namespace

TrainingDiverged::TrainingDiverged(std::uint64_t step, const std::string& what_loss)
    : std::runtime_error("non-finite " + what_loss + " at step " + std::to_string(step)), step_(step) {}

EvalReport evaluate(const GaussianPolicy& policy, const Env& env, std::size_t n_episodes, std::mt19937_64& rng,
                    const ReferenceReturns& refs) {
    if (n_episodes == 0) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
    if (policy.state_dim != env.state_dim() || policy.action_dim != env.action_dim()) {
        throw std::invalid_argument("evaluate: policy dimensions do not match the environment");
    }
    const Actor actor = [&policy](std::span<const double> s, std::mt19937_64& r) {
        return policy_sample(policy, s, r, true);
    };
    EvalReport rep;
    rep.episodes = n_episodes;
    for (std::size_t i = 0; i < n_episodes; ++i) rep.returns.push_back(rollout(env, actor, rng).episode_return);
    const double n = static_cast<double>(n_episodes);
    rep.mean_return = std::accumulate(rep.returns.begin(), rep.returns.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rep.returns) var += (r - rep.mean_return) * (r - rep.mean_return);
    rep.std_return = std::sqrt(var / n);
    rep.normalized_score = normalized_score(rep.mean_return, refs.random_ref, refs.expert_ref);
    return rep;
}

std::vector<double> bcnd_lite_weights(const GaussianPolicy* prev_policy, const Batch& batch) {
    if (!prev_policy) return std::vector<double>(batch.size(), 1.0);
    const PolicyEval ev = policy_log_prob_batch(*prev_policy, batch.states, batch.actions);
    std::vector<double> w(batch.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = std::clamp(std::exp(ev.logp(static_cast<Eigen::Index>(j))), 0.0, 1.0);
    }
    return w;
}

TrainResult train(const TrainConfig& config, const Dataset& d_e, const Dataset* d_o, const Env& env,
                  const ReferenceReturns& refs, const TrainOptions& options) {
    config.validate();
    d_e.validate();
    const FlushDenormals ftz;
    const bool have_offline = d_o && !d_o->trajectories.empty();
    if (have_offline) d_o->validate();
    if (d_e.state_dim != env.state_dim() || d_e.action_dim != env.action_dim() ||
        (have_offline && (d_o->state_dim != d_e.state_dim || d_o->action_dim != d_e.action_dim))) {
        throw std::invalid_argument("train: dataset dimensions do not match the environment");
    }
    if (!have_offline && config.algo != Algo::bc_exp && config.algo != Algo::dwbc) {
        throw std::invalid_argument("train: " + to_string(config.algo) + " needs an offline dataset");
    }

    const TransitionTable expert_tab = TransitionTable::from(d_e);
    const TransitionTable offline_tab = have_offline ? TransitionTable::from(*d_o) : TransitionTable{};
    const TransitionTable union_tab = have_offline ? TransitionTable::concat(expert_tab, offline_tab) : expert_tab;
    const StateNormalizer normalizer = StateNormalizer::fit(union_tab.states);

    const std::size_t sdim = d_e.state_dim;
    const std::size_t adim = d_e.action_dim;
    GaussianPolicy policy =
        GaussianPolicy::create(sdim, adim, config.policy_hidden, derive_seed(config.seed, "init-policy"));
    policy.normalizer = normalizer;
    AdamState policy_opt = AdamState::for_params(policy.params.size(), config.policy_lr);

    std::optional<TwoStreamDiscriminator> disc;
    AdamState disc_opt;
    if (config.algo == Algo::dwbc) {
        disc = TwoStreamDiscriminator::create(sdim, adim, config.disc_stream_width, config.disc_hidden,
                                              derive_seed(config.seed, "init-disc"));
        disc->normalizer = normalizer;
        disc_opt = AdamState::for_params(disc->params.size(), config.disc_lr);
    }

    const DwbcHyper hyper{config.alpha, config.eta, config.d_clip_lo, config.d_clip_hi};
    const LogProbBounds bounds{config.logp_lo, config.logp_hi};
    std::mt19937_64 train_rng(derive_seed(config.seed, "train"));
    std::mt19937_64 eval_rng(derive_seed(config.seed, "eval"));

    TrainResult result;
    std::optional<GaussianPolicy> bcnd_prev;
    const std::size_t bcnd_round_len = std::max<std::size_t>(1, config.total_steps / config.bcnd_rounds);

    std::vector<double> policy_grad(policy.params.size());
    std::vector<double> disc_grad(disc ? disc->params.size() : 0);
    double last_policy_loss = 0.0;
    std::optional<double> last_disc_loss;
    WeightStats window;
    const auto run_start = Clock::now();

    for (std::uint64_t step = 1; step <= config.total_steps; ++step) {
        const auto step_start = Clock::now();
        const bool update_policy = step % config.policy_update_period == 0;

        if (config.algo == Algo::dwbc) {
            const std::size_t n_e = have_offline ? config.batch_size / 2 : config.batch_size;
            Batch batch = expert_tab.sample(n_e, Source::expert, train_rng);
            if (have_offline) {
                batch = stack_batches(batch, offline_tab.sample(config.batch_size - n_e, Source::offline, train_rng));
            }
            const auto n_expert = static_cast<Eigen::Index>(n_e);
            // log pi and d for the whole batch, before either update.
            const PolicyEval pev = policy_log_prob_batch(policy, batch.states, batch.actions);
            const DiscriminatorEval dev =
                discriminator_forward_batch(*disc, batch.states, batch.actions, clamp_logp(pev.logp, bounds));

            if (have_offline && step % config.disc_update_period == 0) {
                Vector d_logit;
                const double loss = pu_kernel(dev.logit, n_expert, config.eta, d_logit);
                if (!std::isfinite(loss)) throw TrainingDiverged(step, "discriminator loss");
                if (loss < 0.0) {
                    ++result.negative_pu_losses;
                    log_message(LogLevel::debug, "step " + std::to_string(step) + ": PU loss below zero (" +
                                                     format_double(loss) + ")");
                }
                std::fill(disc_grad.begin(), disc_grad.end(), 0.0);
                discriminator_backward(*disc, dev, d_logit, disc_grad);
                if (!all_finite(disc_grad)) throw TrainingDiverged(step, "discriminator gradient");
                adam_update(disc_opt, disc->params.span(), disc_grad);
                last_disc_loss = loss;
                ++result.disc_updates;
            }
            if (update_policy) {
                Vector d_logp;
                WeightStats ws;
                double loss = 0.0;
                if (have_offline) {
                    DwbcHyper h = hyper;
                    if (!config.correction) h.eta = 0.0;
                    loss = dwbc_kernel(pev.logp, n_expert, dev.d, h, d_logp, &ws);
                } else {
                    // No offline data: only the expert term remains.
                    std::vector<double> w(static_cast<std::size_t>(n_expert), config.alpha);
                    if (config.correction) {
                        for (Eigen::Index j = 0; j < n_expert; ++j) {
                            const double c = hyper.clip(dev.d(j));
                            w[static_cast<std::size_t>(j)] -= config.eta / (c * (1.0 - c));
                        }
                    }
                    for (double x : w) ws.add(Source::expert, x);
                    loss = weighted_bc_kernel(pev.logp, w, d_logp);
                }
                if (!std::isfinite(loss)) throw TrainingDiverged(step, "policy loss");
                std::fill(policy_grad.begin(), policy_grad.end(), 0.0);
                policy_log_prob_backward(policy, pev, d_logp, policy_grad);
                if (!all_finite(policy_grad)) throw TrainingDiverged(step, "policy gradient");
                adam_update(policy_opt, policy.params.span(), policy_grad);
                apply_weight_decay(policy.params.span(), config.policy_lr, config.weight_decay);
                last_policy_loss = loss;
                result.weights.merge(ws);
                window.merge(ws);
                if (options.on_weights) options.on_weights(ws);
                ++result.policy_updates;
            }
        } else if (update_policy) {
            Batch batch;
            std::vector<double> weights;
            if (config.algo == Algo::bc_exp) {
                batch = expert_tab.sample(config.batch_size, Source::expert, train_rng);
                weights.assign(config.batch_size, 1.0);
            } else {
                batch = union_tab.sample(config.batch_size, Source::offline, train_rng);
                if (config.algo == Algo::bcnd_lite) {
                    if (step > 1 && (step - 1) % bcnd_round_len == 0) bcnd_prev = policy;
                    weights = bcnd_lite_weights(bcnd_prev ? &*bcnd_prev : nullptr, batch);
                } else {
                    weights.assign(config.batch_size, 1.0);
                }
            }
            const PolicyEval pev = policy_log_prob_batch(policy, batch.states, batch.actions);
            Vector d_logp;
            const double loss = weighted_bc_kernel(pev.logp, weights, d_logp);
            if (!std::isfinite(loss)) throw TrainingDiverged(step, "policy loss");
            std::fill(policy_grad.begin(), policy_grad.end(), 0.0);
            policy_log_prob_backward(policy, pev, d_logp, policy_grad);
            if (!all_finite(policy_grad)) throw TrainingDiverged(step, "policy gradient");
            adam_update(policy_opt, policy.params.span(), policy_grad);
            apply_weight_decay(policy.params.span(), config.policy_lr, config.weight_decay);
            last_policy_loss = loss;
            ++result.policy_updates;
        }
        result.step_seconds += seconds_since(step_start);

        if (std::find(options.snapshot_steps.begin(), options.snapshot_steps.end(), step) !=
            options.snapshot_steps.end()) {
            result.snapshots.emplace_back(step, policy);
        }

        if (step % config.eval_period == 0) {
            MetricsRecord rec;
            rec.step = step;
            rec.policy_loss = last_policy_loss;
            rec.disc_loss = last_disc_loss;
            rec.mean_expert_weight = window.expert_mean();
            rec.mean_offline_weight = window.offline_mean();
            if (options.evaluate) {
                const EvalReport rep = evaluate(policy, env, config.eval_episodes, eval_rng, refs);
                rec.eval_mean_return = rep.mean_return;
                rec.normalized_score = rep.normalized_score;
            }
            rec.wall_time_seconds = seconds_since(run_start);
            window = WeightStats{};
            result.metrics.push_back(rec);
            log_message(LogLevel::debug, to_string(config.algo) + " step " + std::to_string(step) + " score " +
                                             format_double(rec.normalized_score));
            if (options.on_eval) options.on_eval(rec);
        }
    }

    const std::size_t tail = std::min<std::size_t>(10, result.metrics.size());
    if (tail > 0) {
        double sum = 0.0;
        for (std::size_t i = result.metrics.size() - tail; i < result.metrics.size(); ++i) {
            sum += result.metrics[i].normalized_score;
        }
        result.final_score = sum / static_cast<double>(tail);
    }
    result.checkpoint = Checkpoint{config, env.name(), config.total_steps, std::move(policy), std::move(disc)};
    return result;
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "step|policy_loss|disc_loss|mean_expert_weight|mean_offline_weight|eval_mean_return|normalized_score\n";
    for (const auto& r : records) {
        out << r.step << '|' << format_double(r.policy_loss) << '|'
            << (r.disc_loss ? format_double(*r.disc_loss) : std::string()) << '|' << format_double(r.mean_expert_weight)
            << '|' << format_double(r.mean_offline_weight) << '|' << format_double(r.eval_mean_return) << '|'
            << format_double(r.normalized_score) << '\n';
    }
}

void write_timing(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "step|wall_time_seconds\n";
    for (const auto& r : records) out << r.step << '|' << format_double(r.wall_time_seconds) << '\n';
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics file '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    std::vector<MetricsRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string part;
        while (std::getline(ss, part, '|')) f.push_back(part);
        if (!line.empty() && line.back() == '|') f.emplace_back();
        if (f.size() != 7) throw std::runtime_error("metrics line " + std::to_string(line_no) + ": expected 7 fields");
        MetricsRecord r;
        r.step = std::stoull(f[0]);
        r.policy_loss = parse_double(f[1]);
        if (!f[2].empty()) r.disc_loss = parse_double(f[2]);
        r.mean_expert_weight = parse_double(f[3]);
        r.mean_offline_weight = parse_double(f[4]);
        r.eval_mean_return = parse_double(f[5]);
        r.normalized_score = parse_double(f[6]);
        out.push_back(r);
    }
    return out;
}

}  // namespace dwbc
