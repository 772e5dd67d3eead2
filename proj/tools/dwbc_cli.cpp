// dwbc: data generation, training, evaluation and policy selection.
//
//   dwbc gen-data --env point-mass --expert-trajs 10 --random-trajs 200 --setting 1 --x 90 --out runs/d1
//   dwbc train --algo dwbc --de runs/d1/d_e --do runs/d1/d_o --steps 20000 --seed 1 --out runs/t1
//   dwbc eval --checkpoint runs/t1/checkpoint --refs runs/d1/refs
//   dwbc ops-rank --disc runs/t1/checkpoint --de runs/d1/d_e --policy a=runs/t1/checkpoint --policy b=...
//   dwbc grad-check --trials 10

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dwbc/config.hpp"
#include "dwbc/data.hpp"
#include "dwbc/envs.hpp"
#include "dwbc/generate.hpp"
#include "dwbc/gradcheck.hpp"
#include "dwbc/ops.hpp"
#include "dwbc/trainer.hpp"

namespace fs = std::filesystem;
using namespace dwbc;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

// Flags whose values are merged over a --config file, keyed like the file.
class Flags {
public:
    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        opts_.emplace_back(key, app->add_option(flag, values_[key], help));
    }
    KeyValues given() const {
        KeyValues kv;
        for (const auto& [key, opt] : opts_) {
            if (opt->count() > 0) kv[key] = values_.at(key);
        }
        return kv;
    }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::pair<std::string, CLI::Option*>> opts_;
};

KeyValues layered(const std::string& config_path, const Flags& flags) {
    KeyValues kv;
    if (!config_path.empty()) {
        if (!fs::exists(config_path)) throw std::runtime_error("config file '" + config_path + "' not found");
        kv = read_key_value_file(config_path);
    }
    for (const auto& [k, v] : flags.given()) kv[k] = v;
    return kv;
}

// Removes and returns the `env.*` keys (prefix stripped).
KeyValues take_env_keys(KeyValues& kv) {
    KeyValues env;
    for (auto it = kv.begin(); it != kv.end();) {
        if (it->first.rfind("env.", 0) == 0) {
            env[it->first.substr(4)] = it->second;
            it = kv.erase(it);
        } else {
            ++it;
        }
    }
    return env;
}

std::string take(KeyValues& kv, const std::string& key, const std::string& fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::string v = it->second;
    kv.erase(it);
    return v;
}

void reject_leftovers(const KeyValues& kv, const std::string& command) {
    if (!kv.empty()) throw std::invalid_argument(command + ": unknown setting '" + kv.begin()->first + "'");
}

Env make_env(const std::string& name, const KeyValues& constants) {
    Env env = Env::by_name(name);
    apply_env_key_values(env, constants);
    return env;
}

std::uint64_t parse_seed(const std::string& v) {
    std::size_t pos = 0;
    const unsigned long long s = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad seed '" + v + "'");
    return s;
}

Dataset read_dataset(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("input file '" + path + "' not found");
    try {
        return load_dataset(path);
    } catch (const DatasetFormatError& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

ReferenceReturns read_refs(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("reference file '" + path + "' not found");
    return load_references(path);
}

Checkpoint read_checkpoint(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("checkpoint '" + path + "' not found");
    return load_checkpoint(path);
}

class Manifest {
public:
    Manifest(std::string command_line, std::string subcommand) {
        kv_["command"] = std::move(command_line);
        kv_["subcommand"] = std::move(subcommand);
        kv_["version"] = DWBC_VERSION;
        kv_["start_time"] = utc_now();
    }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void set_all(const std::string& prefix, const KeyValues& kv) {
        for (const auto& [k, v] : kv) kv_[prefix + k] = v;
    }
    void write(const fs::path& dir) const {
        fs::create_directories(dir);
        std::ofstream out(dir / "manifest", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + (dir / "manifest").string() + "'");
        for (const auto& [k, v] : kv_) out << k << '=' << v << '\n';
    }
    // The manifest itself is never rewritten; the end time goes next to it.
    static void finish(const fs::path& dir) {
        std::ofstream out(dir / "manifest.end", std::ios::binary);
        out << "end_time=" << utc_now() << '\n';
    }

private:
    KeyValues kv_;
};

std::string one_line(std::string msg) {
    for (auto& c : msg) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return msg;
}

struct Context {
    std::string command_line;
};

// --- gen-data ---------------------------------------------------------------

struct GenArgs {
    Flags flags;
    std::string config;
    std::string out;
};

void setup_gen(CLI::App& app, GenArgs& a) {
    auto* cmd = app.add_subcommand("gen-data", "Generate expert and offline datasets plus reference returns");
    a.flags.add(cmd, "--env", "env", "Environment: point-mass or reach-1d (default point-mass)");
    a.flags.add(cmd, "--expert-trajs", "expert_trajs", "Scripted-expert trajectories (default 10)");
    a.flags.add(cmd, "--random-trajs", "random_trajs", "Non-expert trajectories (default 200)");
    a.flags.add(cmd, "--setting", "setting", "1: expert+random by X%, 2: pooled, top returns, step X, 3: expert+noisy expert");
    a.flags.add(cmd, "--x", "x", "Split parameter: percent for settings 1/3, step for setting 2 (default 90)");
    a.flags.add(cmd, "--seed", "seed", "Root seed (default 0)");
    a.flags.add(cmd, "--random-steps", "random_steps", "Length cap of random episodes, 0 = horizon (default 7)");
    a.flags.add(cmd, "--noisy-std", "noisy_expert_std", "Action noise of the setting-3 behaviour (default 0.5)");
    a.flags.add(cmd, "--ref-episodes", "reference_episodes", "Episodes per reference return (default 200)");
    cmd->add_option("--config", a.config, "key = value file; flags override it");
    cmd->add_option("--out", a.out, "Output directory")->required();
}

int run_gen(const Context& ctx, GenArgs& a) {
    KeyValues kv = layered(a.config, a.flags);
    const KeyValues env_consts = take_env_keys(kv);
    const std::string env_name = take(kv, "env", "point-mass");
    GenDataConfig g;
    g.expert_trajs = std::stoull(take(kv, "expert_trajs", std::to_string(g.expert_trajs)));
    g.other_trajs = std::stoull(take(kv, "random_trajs", std::to_string(g.other_trajs)));
    g.setting = std::stoi(take(kv, "setting", std::to_string(g.setting)));
    g.x = parse_double(take(kv, "x", format_double(g.x)));
    g.seed = parse_seed(take(kv, "seed", "0"));
    g.random_steps = std::stoull(take(kv, "random_steps", std::to_string(g.random_steps)));
    g.noisy_expert_std = parse_double(take(kv, "noisy_expert_std", format_double(g.noisy_expert_std)));
    g.reference_episodes = std::stoull(take(kv, "reference_episodes", std::to_string(g.reference_episodes)));
    reject_leftovers(kv, "gen-data");
    const Env env = make_env(env_name, env_consts);

    const fs::path out(a.out);
    Manifest m(ctx.command_line, "gen-data");
    m.set("env", env_name);
    m.set_all("env.", env_key_values(env));
    m.set("expert_trajs", std::to_string(g.expert_trajs));
    m.set("random_trajs", std::to_string(g.other_trajs));
    m.set("setting", std::to_string(g.setting));
    m.set("x", format_double(g.x));
    m.set("seed", std::to_string(g.seed));
    m.set("seed.data-expert", std::to_string(derive_seed(g.seed, "data-expert")));
    m.set("seed.data-other", std::to_string(derive_seed(g.seed, "data-other")));
    m.set("seed.data-refs", std::to_string(derive_seed(g.seed, "data-refs")));
    m.set("random_steps", std::to_string(g.random_steps));
    m.set("noisy_expert_std", format_double(g.noisy_expert_std));
    m.set("reference_episodes", std::to_string(g.reference_episodes));
    for (const char* f : {"d_e", "d_o", "refs", "labels"}) m.set(std::string("output.") + f, (out / f).string());
    m.write(out);

    const GeneratedData data = generate_data(env, g);
    save_dataset(data.d_e, out / "d_e");
    save_dataset(data.d_o, out / "d_o");
    save_references(data.refs, out / "refs");
    save_labels(data.expert_label, out / "labels");
    log_message(LogLevel::info, "generated " + std::to_string(g.expert_trajs) + " expert trajectories (" +
                                    std::to_string(data.expert_transitions) + " transitions) and " +
                                    std::to_string(g.other_trajs) + " others (" +
                                    std::to_string(data.other_transitions) + " transitions)");
    log_message(LogLevel::info, "d_e: " + std::to_string(data.d_e.num_trajectories()) + " trajectories, " +
                                    std::to_string(data.d_e.num_transitions()) + " transitions; d_o: " +
                                    std::to_string(data.d_o.num_trajectories()) + " trajectories, " +
                                    std::to_string(data.d_o.num_transitions()) + " transitions");
    log_message(LogLevel::info, "reference returns: random " + format_double(data.refs.random_ref) + ", expert " +
                                    format_double(data.refs.expert_ref));
    Manifest::finish(out);
    return 0;
}

// --- split ------------------------------------------------------------------

struct SplitArgs {
    std::string expert, random, mixed, out;
    int setting = 1;
    double x = 90.0;
};

void setup_split(CLI::App& app, SplitArgs& a) {
    auto* cmd = app.add_subcommand("split", "Split existing datasets into D_e and D_o");
    cmd->add_option("--expert", a.expert, "Expert dataset (settings 1 and 3)");
    cmd->add_option("--random", a.random, "Non-expert dataset (settings 1 and 3)");
    cmd->add_option("--mixed", a.mixed, "Pooled dataset (setting 2)");
    cmd->add_option("--setting", a.setting, "1, 2 or 3")->check(CLI::Range(1, 3));
    cmd->add_option("--x", a.x, "Percent (settings 1/3) or step (setting 2)");
    cmd->add_option("--out", a.out, "Output directory")->required();
}

int run_split(const Context& ctx, const SplitArgs& a) {
    const fs::path out(a.out);
    Manifest m(ctx.command_line, "split");
    m.set("setting", std::to_string(a.setting));
    m.set("x", format_double(a.x));
    std::pair<Dataset, Dataset> parts;
    if (a.setting == 2) {
        if (a.mixed.empty()) throw std::invalid_argument("split: setting 2 needs --mixed");
        m.set("input.mixed", a.mixed);
        m.write(out);
        if (a.x < 1.0 || a.x != static_cast<double>(static_cast<std::size_t>(a.x))) {
            throw std::invalid_argument("split: setting 2 needs an integer --x >= 1");
        }
        parts = split_setting2(read_dataset(a.mixed), static_cast<std::size_t>(a.x));
    } else {
        if (a.expert.empty() || a.random.empty()) throw std::invalid_argument("split: needs --expert and --random");
        m.set("input.expert", a.expert);
        m.set("input.random", a.random);
        m.write(out);
        parts = split_setting1(read_dataset(a.expert), read_dataset(a.random), a.x);
    }
    save_dataset(parts.first, out / "d_e");
    save_dataset(parts.second, out / "d_o");
    log_message(LogLevel::info, "d_e: " + std::to_string(parts.first.num_trajectories()) + " trajectories; d_o: " +
                                    std::to_string(parts.second.num_trajectories()) + " trajectories");
    Manifest::finish(out);
    return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    Flags flags;
    std::string config, de, d_o, refs, out;
    std::vector<std::uint64_t> snapshots;
    bool no_correction = false;
};

void setup_train(CLI::App& app, TrainArgs& a) {
    auto* cmd = app.add_subcommand("train", "Train DWBC or a BC baseline");
    a.flags.add(cmd, "--algo", "algo", "dwbc, bc_exp, bc_all or bcnd_lite");
    a.flags.add(cmd, "--alpha", "alpha", "Expert-term weight (default 7.5)");
    a.flags.add(cmd, "--eta", "eta", "PU class prior (default 0.5)");
    a.flags.add(cmd, "--batch-size", "batch_size", "Samples per step (default 256)");
    a.flags.add(cmd, "--policy-lr", "policy_lr", "Policy learning rate (default 1e-4)");
    a.flags.add(cmd, "--disc-lr", "disc_lr", "Discriminator learning rate (default 1e-4)");
    a.flags.add(cmd, "--policy-period", "policy_update_period", "Policy update period (default 1)");
    a.flags.add(cmd, "--disc-period", "disc_update_period", "Discriminator update period (default 100)");
    a.flags.add(cmd, "--steps", "total_steps", "Training steps (default 20000)");
    a.flags.add(cmd, "--eval-period", "eval_period", "Steps between evaluations (default 1000)");
    a.flags.add(cmd, "--eval-episodes", "eval_episodes", "Episodes per evaluation (default 10)");
    a.flags.add(cmd, "--seed", "seed", "Root seed (default 0)");
    a.flags.add(cmd, "--weight-decay", "weight_decay", "Policy weight decay (default 0.005)");
    a.flags.add(cmd, "--d-clip-lo", "d_clip_lo", "Lower clip of d in the weights (default 0.1)");
    a.flags.add(cmd, "--d-clip-hi", "d_clip_hi", "Upper clip of d in the weights (default 0.9)");
    a.flags.add(cmd, "--logp-lo", "logp_lo", "Lower clamp of log pi fed to d (default -20)");
    a.flags.add(cmd, "--logp-hi", "logp_hi", "Upper clamp of log pi fed to d (default 10)");
    a.flags.add(cmd, "--env", "env", "Environment used for evaluation (default point-mass)");
    cmd->add_flag("--no-correction", a.no_correction, "Drop the eta/(c(1-c)) expert correction");
    cmd->add_option("--de", a.de, "Expert dataset")->required();
    cmd->add_option("--do", a.d_o, "Offline dataset");
    cmd->add_option("--refs", a.refs, "Reference returns (default: refs next to --de)");
    cmd->add_option("--snapshot", a.snapshots, "Also save the policy at this step (repeatable)");
    cmd->add_option("--config", a.config, "key = value file; flags override it");
    cmd->add_option("--out", a.out, "Output directory")->required();
}

int run_train(const Context& ctx, TrainArgs& a) {
    KeyValues kv = layered(a.config, a.flags);
    const KeyValues env_consts = take_env_keys(kv);
    const std::string env_name = take(kv, "env", "point-mass");
    if (a.no_correction) kv["correction"] = "0";
    TrainConfig cfg;
    apply_key_values(cfg, kv);
    cfg.validate();
    const Env env = make_env(env_name, env_consts);
    const std::string refs_path = a.refs.empty() ? (fs::path(a.de).parent_path() / "refs").string() : a.refs;

    const fs::path out(a.out);
    Manifest m(ctx.command_line, "train");
    m.set_all("config.", to_key_values(cfg));
    m.set("env", env_name);
    m.set_all("env.", env_key_values(env));
    for (const char* s : {"init-policy", "init-disc", "train", "eval"}) {
        m.set(std::string("seed.") + s, std::to_string(derive_seed(cfg.seed, s)));
    }
    m.set("input.d_e", a.de);
    m.set("input.d_o", a.d_o);
    m.set("input.refs", refs_path);
    m.set("output.checkpoint", (out / "checkpoint").string());
    m.set("output.metrics", (out / "metrics").string());

    const Dataset d_e = read_dataset(a.de);
    std::optional<Dataset> d_o;
    if (!a.d_o.empty()) d_o = read_dataset(a.d_o);
    const ReferenceReturns refs = read_refs(refs_path);
    m.write(out);

    TrainOptions opts;
    opts.snapshot_steps = a.snapshots;
    opts.on_eval = [&](const MetricsRecord& r) {
        log_message(LogLevel::info, "step " + std::to_string(r.step) + " return " + format_double(r.eval_mean_return) +
                                        " score " + format_double(r.normalized_score));
    };
    TrainResult res;
    try {
        res = train(cfg, d_e, d_o ? &*d_o : nullptr, env, refs, opts);
    } catch (const TrainingDiverged& e) {
        std::ofstream diag(out / "diverged", std::ios::binary);
        diag << "step=" << e.step() << '\n' << "reason=" << e.what() << '\n';
        throw;
    }
    save_checkpoint(out / "checkpoint", res.checkpoint);
    for (const auto& [step, policy] : res.snapshots) {
        Checkpoint snap{cfg, env.name(), step, policy, std::nullopt};
        save_checkpoint(out / ("checkpoint_step" + std::to_string(step)), snap);
    }
    write_metrics(out / "metrics", res.metrics);
    write_timing(out / "timing", res.metrics);
    std::cout << "final_score=" << format_double(res.final_score) << " disc_updates=" << res.disc_updates
              << " policy_updates=" << res.policy_updates << '\n';
    Manifest::finish(out);
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, refs, env, out;
    std::size_t episodes = 10;
    std::uint64_t seed = 0;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
    auto* cmd = app.add_subcommand("eval", "Roll out a checkpointed policy");
    cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
    cmd->add_option("--refs", a.refs, "Reference returns")->required();
    cmd->add_option("--env", a.env, "Environment (default: the one recorded in the checkpoint)");
    cmd->add_option("--episodes", a.episodes, "Episodes")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "Root seed");
    cmd->add_option("--out", a.out, "Optional output directory for the report and manifest");
}

int run_eval(const Context& ctx, const EvalArgs& a) {
    const Checkpoint ck = read_checkpoint(a.checkpoint);
    const Env env = Env::by_name(a.env.empty() ? ck.env_name : a.env);
    const ReferenceReturns refs = read_refs(a.refs);
    if (!a.out.empty()) {
        Manifest m(ctx.command_line, "eval");
        m.set("input.checkpoint", a.checkpoint);
        m.set("input.refs", a.refs);
        m.set("env", env.name());
        m.set("episodes", std::to_string(a.episodes));
        m.set("seed", std::to_string(a.seed));
        m.set("seed.eval", std::to_string(derive_seed(a.seed, "eval")));
        m.write(a.out);
    }
    std::mt19937_64 rng(derive_seed(a.seed, "eval"));
    const EvalReport rep = evaluate(ck.policy, env, a.episodes, rng, refs);
    std::ostringstream os;
    os << "mean_return=" << format_double(rep.mean_return) << '\n'
       << "std_return=" << format_double(rep.std_return) << '\n'
       << "normalized_score=" << format_double(rep.normalized_score) << '\n'
       << "episodes=" << rep.episodes << '\n';
    std::cout << os.str();
    if (!a.out.empty()) {
        std::ofstream(fs::path(a.out) / "eval", std::ios::binary) << os.str();
        Manifest::finish(a.out);
    }
    return 0;
}

// --- ops-rank ---------------------------------------------------------------

struct OpsArgs {
    std::string disc, de, out;
    std::vector<std::string> policies;
    std::vector<std::string> returns;
};

void setup_ops(CLI::App& app, OpsArgs& a) {
    auto* cmd = app.add_subcommand("ops-rank", "Rank candidate policies with a trained discriminator");
    cmd->add_option("--disc", a.disc, "Checkpoint holding the discriminator")->required();
    cmd->add_option("--de", a.de, "Expert dataset")->required();
    cmd->add_option("--policy", a.policies, "Candidate as id=checkpoint (repeatable, at least 2)")->required();
    cmd->add_option("--true-return", a.returns, "Measured return as id=value, for the rank correlation");
    cmd->add_option("--out", a.out, "Optional output directory for the report and manifest");
}

std::pair<std::string, std::string> split_pair(const std::string& s, const std::string& what) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument(what + " must look like id=value: '" + s + "'");
    return {s.substr(0, eq), s.substr(eq + 1)};
}

int run_ops(const Context& ctx, const OpsArgs& a) {
    if (!a.out.empty()) {
        Manifest m(ctx.command_line, "ops-rank");
        m.set("input.disc", a.disc);
        m.set("input.d_e", a.de);
        for (const auto& p : a.policies) {
            const auto [id, path] = split_pair(p, "--policy");
            m.set("input.policy." + id, path);
        }
        m.write(a.out);
    }
    const Checkpoint disc_ck = read_checkpoint(a.disc);
    if (!disc_ck.disc) throw std::runtime_error("checkpoint '" + a.disc + "' has no discriminator");
    const Dataset d_e = read_dataset(a.de);
    const LogProbBounds bounds{disc_ck.config.logp_lo, disc_ck.config.logp_hi};

    std::vector<OpsCandidate> cands;
    for (const auto& p : a.policies) {
        const auto [id, path] = split_pair(p, "--policy");
        cands.push_back({id, read_checkpoint(path).policy});
    }
    std::optional<std::vector<double>> truth;
    if (!a.returns.empty()) {
        std::map<std::string, double> by_id;
        for (const auto& r : a.returns) {
            const auto [id, v] = split_pair(r, "--true-return");
            by_id[id] = parse_double(v);
        }
        truth.emplace();
        for (const auto& c : cands) {
            const auto it = by_id.find(c.id);
            if (it == by_id.end()) throw std::invalid_argument("no --true-return for policy '" + c.id + "'");
            truth->push_back(it->second);
        }
    }
    const OpsResult res = ops_rank(*disc_ck.disc, d_e, cands, truth, bounds);
    for (std::size_t i = 0; i < res.ranking.size(); ++i) {
        std::cout << res.ranking[i] << '|' << format_double(res.scores.at(res.ranking[i])) << '|' << i + 1 << '\n';
    }
    if (res.spearman) std::cout << "spearman|" << format_double(*res.spearman) << '\n';
    if (!a.out.empty()) {
        write_ops_report(fs::path(a.out) / "ops_report", res);
        Manifest::finish(a.out);
    }
    return 0;
}

// --- grad-check -------------------------------------------------------------

struct GradArgs {
    std::size_t trials = 10;
    std::uint64_t seed = 0;
    double h = 1e-5;
    double tol = 1e-4;
};

void setup_grad(CLI::App& app, GradArgs& a) {
    auto* cmd = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients of every loss");
    cmd->add_option("--trials", a.trials, "Random draws per loss")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "Seed");
    cmd->add_option("--step", a.h, "Finite-difference step h");
    cmd->add_option("--tol", a.tol, "Maximum relative error");
}

int run_grad(const GradArgs& a) {
    bool ok = true;
    for (const auto& r : run_grad_checks(a.trials, a.seed, a.h)) {
        const bool pass = r.max_rel_error <= a.tol;
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << r.loss << " trials=" << r.trials
                  << " max_rel_error=" << format_double(r.max_rel_error) << '\n';
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    use_large_heap_thresholds();
    CLI::App app{"Discriminator-weighted behavioral cloning"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", DWBC_VERSION);

    GenArgs gen;
    SplitArgs split;
    TrainArgs tr;
    EvalArgs ev;
    OpsArgs ops;
    GradArgs grad;
    setup_gen(app, gen);
    setup_split(app, split);
    setup_train(app, tr);
    setup_eval(app, ev);
    setup_ops(app, ops);
    setup_grad(app, grad);

    CLI11_PARSE(app, argc, argv);

    Context ctx;
    for (int i = 0; i < argc; ++i) ctx.command_line += (i ? " " : "") + std::string(argv[i]);
    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "gen-data") return run_gen(ctx, gen);
        if (name == "split") return run_split(ctx, split);
        if (name == "train") return run_train(ctx, tr);
        if (name == "eval") return run_eval(ctx, ev);
        if (name == "ops-rank") return run_ops(ctx, ops);
        return run_grad(grad);
    } catch (const std::exception& e) {
        std::cerr << "error: " << name << ": " << one_line(e.what()) << '\n';
        return 1;
    }
}
