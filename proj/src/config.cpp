#include "dwbc/config.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <stdexcept>

#include "dwbc/data.hpp"

namespace dwbc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long n = 0;
    try {
        n = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || n < 0) throw std::invalid_argument("config key '" + key + "': bad count '" + v + "'");
    return static_cast<std::size_t>(n);
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        return parse_double(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad number '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument("config key '" + key + "': bad boolean '" + v + "'");
}

}  // namespace

std::string to_string(Algo algo) {
    switch (algo) {
        case Algo::dwbc: return "dwbc";
        case Algo::bc_exp: return "bc_exp";
        case Algo::bc_all: return "bc_all";
        case Algo::bcnd_lite: return "bcnd_lite";
    }
    return "dwbc";
}

Algo algo_from_string(const std::string& name) {
    if (name == "dwbc") return Algo::dwbc;
    if (name == "bc_exp" || name == "bc-exp") return Algo::bc_exp;
    if (name == "bc_all" || name == "bc-all") return Algo::bc_all;
    if (name == "bcnd_lite" || name == "bcnd-lite") return Algo::bcnd_lite;
    throw std::invalid_argument("unknown algorithm '" + name + "'");
}

void TrainConfig::validate() const {
    if (policy_update_period == 0 || disc_update_period == 0 || eval_period == 0) {
        throw std::invalid_argument("update and evaluation periods must be >= 1");
    }
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (eval_episodes == 0) throw std::invalid_argument("eval_episodes must be >= 1");
    if (!(alpha >= 1.0)) throw std::invalid_argument("alpha must be >= 1");
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    if (!(d_clip_lo > 0.0 && d_clip_lo < d_clip_hi && d_clip_hi < 1.0)) {
        throw std::invalid_argument("d clip bounds must satisfy 0 < lo < hi < 1");
    }
    if (!(logp_lo < logp_hi)) throw std::invalid_argument("logp bounds must satisfy lo < hi");
    if (!(policy_lr >= 0.0) || !(disc_lr >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
    if (bcnd_rounds == 0) throw std::invalid_argument("bcnd_rounds must be >= 1");
    if (disc_stream_width == 0) throw std::invalid_argument("disc_stream_width must be >= 1");
}

KeyValues to_key_values(const TrainConfig& c) {
    return {
        {"algo", to_string(c.algo)},
        {"alpha", format_double(c.alpha)},
        {"eta", format_double(c.eta)},
        {"batch_size", std::to_string(c.batch_size)},
        {"policy_lr", format_double(c.policy_lr)},
        {"disc_lr", format_double(c.disc_lr)},
        {"policy_update_period", std::to_string(c.policy_update_period)},
        {"disc_update_period", std::to_string(c.disc_update_period)},
        {"total_steps", std::to_string(c.total_steps)},
        {"eval_period", std::to_string(c.eval_period)},
        {"eval_episodes", std::to_string(c.eval_episodes)},
        {"gamma", format_double(c.gamma)},
        {"seed", std::to_string(c.seed)},
        {"weight_decay", format_double(c.weight_decay)},
        {"d_clip_lo", format_double(c.d_clip_lo)},
        {"d_clip_hi", format_double(c.d_clip_hi)},
        {"logp_lo", format_double(c.logp_lo)},
        {"logp_hi", format_double(c.logp_hi)},
        {"policy_hidden", join_sizes(c.policy_hidden)},
        {"disc_stream_width", std::to_string(c.disc_stream_width)},
        {"disc_hidden", join_sizes(c.disc_hidden)},
        {"bcnd_rounds", std::to_string(c.bcnd_rounds)},
        {"correction", c.correction ? "1" : "0"},
    };
}

void apply_key_values(TrainConfig& c, const KeyValues& kv) {
    const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
        {"algo", [&](auto&, auto& v) { c.algo = algo_from_string(v); }},
        {"alpha", [&](auto& k, auto& v) { c.alpha = parse_real(k, v); }},
        {"eta", [&](auto& k, auto& v) { c.eta = parse_real(k, v); }},
        {"batch_size", [&](auto& k, auto& v) { c.batch_size = parse_count(k, v); }},
        {"policy_lr", [&](auto& k, auto& v) { c.policy_lr = parse_real(k, v); }},
        {"disc_lr", [&](auto& k, auto& v) { c.disc_lr = parse_real(k, v); }},
        {"policy_update_period", [&](auto& k, auto& v) { c.policy_update_period = parse_count(k, v); }},
        {"disc_update_period", [&](auto& k, auto& v) { c.disc_update_period = parse_count(k, v); }},
        {"total_steps", [&](auto& k, auto& v) { c.total_steps = parse_count(k, v); }},
        {"eval_period", [&](auto& k, auto& v) { c.eval_period = parse_count(k, v); }},
        {"eval_episodes", [&](auto& k, auto& v) { c.eval_episodes = parse_count(k, v); }},
        {"gamma", [&](auto& k, auto& v) { c.gamma = parse_real(k, v); }},
        {"seed", [&](auto& k, auto& v) { c.seed = parse_count(k, v); }},
        {"weight_decay", [&](auto& k, auto& v) { c.weight_decay = parse_real(k, v); }},
        {"d_clip_lo", [&](auto& k, auto& v) { c.d_clip_lo = parse_real(k, v); }},
        {"d_clip_hi", [&](auto& k, auto& v) { c.d_clip_hi = parse_real(k, v); }},
        {"logp_lo", [&](auto& k, auto& v) { c.logp_lo = parse_real(k, v); }},
        {"logp_hi", [&](auto& k, auto& v) { c.logp_hi = parse_real(k, v); }},
        {"policy_hidden", [&](auto&, auto& v) { c.policy_hidden = parse_sizes(v); }},
        {"disc_stream_width", [&](auto& k, auto& v) { c.disc_stream_width = parse_count(k, v); }},
        {"disc_hidden", [&](auto&, auto& v) { c.disc_hidden = parse_sizes(v); }},
        {"bcnd_rounds", [&](auto& k, auto& v) { c.bcnd_rounds = parse_count(k, v); }},
        {"correction", [&](auto& k, auto& v) { c.correction = parse_bool(k, v); }},
    };
    for (const auto& [key, value] : kv) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
        it->second(key, value);
    }
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
    KeyValues kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
    // FNV-1a over the stream name, then a splitmix64 finalizer.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : stream) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("DWBC_LOG_LEVEL");
        if (!env) return LogLevel::info;
        const std::string v(env);
        if (v == "error") return LogLevel::error;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

void log_message(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    static constexpr const char* names[] = {"error", "info", "debug"};
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

void use_large_heap_thresholds() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    if (text.empty()) return out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        out.push_back(parse_count("sizes", trim(part)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace dwbc
