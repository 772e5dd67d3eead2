#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dwbc/trainer.hpp"

namespace dwbc {

namespace {

constexpr const char* kMagic = "dwbc-checkpoint";
constexpr int kVersion = 1;
constexpr const char* kPayloadMarker = "payload";

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(parse_double(part));
    return out;
}

std::string join_activations(const std::vector<Activation>& acts) {
    std::string out;
    for (std::size_t i = 0; i < acts.size(); ++i) {
        if (i) out += ',';
        out += to_string(acts[i]);
    }
    return out;
}

std::vector<Activation> parse_activations(const std::string& text) {
    std::vector<Activation> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(activation_from_string(part));
    return out;
}

void put_spec(KeyValues& kv, const std::string& prefix, const MlpSpec& spec) {
    kv[prefix + ".layer_sizes"] = join_sizes(spec.layer_sizes);
    kv[prefix + ".activations"] = join_activations(spec.activations);
    kv[prefix + ".seed"] = std::to_string(spec.seed);
}

const std::string& need(const KeyValues& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint metadata is missing '" + key + "'");
    return it->second;
}

MlpSpec get_spec(const KeyValues& kv, const std::string& prefix) {
    MlpSpec spec;
    spec.layer_sizes = parse_sizes(need(kv, prefix + ".layer_sizes"));
    spec.activations = parse_activations(need(kv, prefix + ".activations"));
    spec.seed = std::stoull(need(kv, prefix + ".seed"));
    spec.validate();
    return spec;
}

void append_group(std::string& payload, std::span<const double> values) {
    std::uint64_t n = values.size();
    if constexpr (std::endian::native == std::endian::big) n = __builtin_bswap64(n);
    payload.append(reinterpret_cast<const char*>(&n), sizeof(n));
    for (double v : values) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        payload.append(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
}

std::vector<double> read_group(const std::string& payload, std::size_t& pos) {
    std::uint64_t n = 0;
    if (pos + sizeof(n) > payload.size()) throw std::runtime_error("checkpoint payload truncated");
    std::memcpy(&n, payload.data() + pos, sizeof(n));
    if constexpr (std::endian::native == std::endian::big) n = __builtin_bswap64(n);
    pos += sizeof(n);
    if (n > (payload.size() - pos) / 4) throw std::runtime_error("checkpoint payload truncated");
    std::vector<double> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, payload.data() + pos, sizeof(bits));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
        pos += sizeof(bits);
    }
    return out;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

void check_normalizer(const StateNormalizer& n, std::size_t dim) {
    if (n.mean.size() != dim || n.std.size() != dim) {
        throw std::runtime_error("checkpoint normalization stats do not match state_dim");
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    KeyValues kv;
    for (const auto& [k, v] : to_key_values(ckpt.config)) kv["config." + k] = v;
    kv["env"] = ckpt.env_name;
    kv["step"] = std::to_string(ckpt.step);
    const auto& p = ckpt.policy;
    put_spec(kv, "policy", p.spec);
    kv["policy.state_dim"] = std::to_string(p.state_dim);
    kv["policy.action_dim"] = std::to_string(p.action_dim);
    kv["policy.log_std_min"] = format_double(p.log_std_min);
    kv["policy.log_std_max"] = format_double(p.log_std_max);
    kv["policy.norm_mean"] = join_doubles(p.normalizer.mean);
    kv["policy.norm_std"] = join_doubles(p.normalizer.std);

    std::string payload;
    append_group(payload, p.params.span());
    kv["groups"] = ckpt.disc ? "policy,discriminator" : "policy";
    if (ckpt.disc) {
        const auto& d = *ckpt.disc;
        put_spec(kv, "disc.sa_stream", d.sa_stream);
        put_spec(kv, "disc.logp_stream", d.logp_stream);
        put_spec(kv, "disc.merge", d.merge);
        kv["disc.state_dim"] = std::to_string(d.state_dim);
        kv["disc.action_dim"] = std::to_string(d.action_dim);
        kv["disc.norm_mean"] = join_doubles(d.normalizer.mean);
        kv["disc.norm_std"] = join_doubles(d.normalizer.std);
        append_group(payload, d.params.span());
    }
    kv["payload_bytes"] = std::to_string(payload.size());
    kv["payload_fnv1a"] = fnv1a_hex(payload);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << kMagic << ' ' << kVersion << '\n';
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
    out << kPayloadMarker << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::size_t> expected_state_dim,
                           std::optional<std::size_t> expected_action_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != kMagic) throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
    if (version != kVersion) {
        throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kVersion) + ")");
    }
    KeyValues kv;
    std::string line;
    bool saw_payload = false;
    while (std::getline(in, line)) {
        if (line == kPayloadMarker) {
            saw_payload = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad checkpoint metadata line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!saw_payload) throw std::runtime_error("checkpoint has no payload");
    const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (std::to_string(payload.size()) != need(kv, "payload_bytes") || fnv1a_hex(payload) != need(kv, "payload_fnv1a")) {
        throw std::runtime_error("checkpoint payload is corrupted");
    }

    Checkpoint ck;
    KeyValues cfg;
    for (const auto& [k, v] : kv) {
        if (k.rfind("config.", 0) == 0) cfg[k.substr(7)] = v;
    }
    apply_key_values(ck.config, cfg);
    ck.env_name = need(kv, "env");
    ck.step = std::stoull(need(kv, "step"));

    auto& p = ck.policy;
    p.spec = get_spec(kv, "policy");
    p.state_dim = std::stoull(need(kv, "policy.state_dim"));
    p.action_dim = std::stoull(need(kv, "policy.action_dim"));
    if (p.spec.input_size() != p.state_dim || p.spec.output_size() != 2 * p.action_dim) {
        throw std::runtime_error("checkpoint policy spec does not match its dimensions");
    }
    if (expected_state_dim && *expected_state_dim != p.state_dim) {
        throw std::runtime_error("checkpoint state_dim " + std::to_string(p.state_dim) + " does not match expected " +
                                 std::to_string(*expected_state_dim));
    }
    if (expected_action_dim && *expected_action_dim != p.action_dim) {
        throw std::runtime_error("checkpoint action_dim " + std::to_string(p.action_dim) +
                                 " does not match expected " + std::to_string(*expected_action_dim));
    }
    p.log_std_min = parse_double(need(kv, "policy.log_std_min"));
    p.log_std_max = parse_double(need(kv, "policy.log_std_max"));
    p.normalizer.mean = parse_doubles(need(kv, "policy.norm_mean"));
    p.normalizer.std = parse_doubles(need(kv, "policy.norm_std"));
    check_normalizer(p.normalizer, p.state_dim);

    std::size_t pos = 0;
    const MlpSpec pspec[] = {p.spec};
    p.params = ParamVector::unflatten(pspec, read_group(payload, pos));

    if (need(kv, "groups") == "policy,discriminator") {
        TwoStreamDiscriminator d;
        d.sa_stream = get_spec(kv, "disc.sa_stream");
        d.logp_stream = get_spec(kv, "disc.logp_stream");
        d.merge = get_spec(kv, "disc.merge");
        d.state_dim = std::stoull(need(kv, "disc.state_dim"));
        d.action_dim = std::stoull(need(kv, "disc.action_dim"));
        if (d.state_dim != p.state_dim || d.action_dim != p.action_dim ||
            d.sa_stream.input_size() != d.state_dim + d.action_dim) {
            throw std::runtime_error("checkpoint discriminator dimensions are inconsistent");
        }
        d.normalizer.mean = parse_doubles(need(kv, "disc.norm_mean"));
        d.normalizer.std = parse_doubles(need(kv, "disc.norm_std"));
        check_normalizer(d.normalizer, d.state_dim);
        d.params = ParamVector::unflatten(d.specs(), read_group(payload, pos));
        ck.disc = std::move(d);
    }
    if (pos != payload.size()) throw std::runtime_error("checkpoint payload has trailing bytes");
    return ck;
}

}  // namespace dwbc
