#include "dwbc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace dwbc {

namespace {

constexpr const char* kMagic = "dwbc-dataset";
constexpr int kFormatVersion = 1;

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(text.substr(start));
            break;
        }
        parts.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

std::string join_vector(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out;
}

std::vector<double> parse_vector(std::string_view text, std::size_t expected, std::size_t line, const char* what) {
    std::vector<double> out;
    for (auto part : split(text, ',')) {
        try {
            out.push_back(parse_double(part));
        } catch (const std::exception&) {
            throw DatasetFormatError(line, std::string("bad number in ") + what + ": '" + std::string(part) + "'");
        }
    }
    if (out.size() != expected) {
        throw DatasetFormatError(line, std::string(what) + " has " + std::to_string(out.size()) +
                                           " entries, expected " + std::to_string(expected));
    }
    return out;
}

template <typename Int>
Int parse_int(std::string_view text, std::size_t line, const char* what) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw DatasetFormatError(line, std::string("bad integer in ") + what + ": '" + std::string(text) + "'");
    }
    return v;
}

Dataset with_trajectories(const Dataset& like, DatasetRole role) {
    Dataset d;
    d.role = role;
    d.state_dim = like.state_dim;
    d.action_dim = like.action_dim;
    return d;
}

std::vector<const Trajectory*> sorted_by_id(const Dataset& d) {
    std::vector<const Trajectory*> out;
    for (const auto& t : d.trajectories) out.push_back(&t);
    std::stable_sort(out.begin(), out.end(),
                     [](const Trajectory* a, const Trajectory* b) { return a->traj_id < b->traj_id; });
    return out;
}

}  // namespace

DatasetFormatError::DatasetFormatError(std::size_t line, const std::string& msg)
    : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

std::string to_string(DatasetRole role) {
    switch (role) {
        case DatasetRole::expert: return "expert";
        case DatasetRole::offline: return "offline";
        case DatasetRole::unsplit: return "unsplit";
    }
    return "unsplit";
}

DatasetRole dataset_role_from_string(const std::string& s) {
    if (s == "expert") return DatasetRole::expert;
    if (s == "offline") return DatasetRole::offline;
    if (s == "unsplit") return DatasetRole::unsplit;
    throw std::invalid_argument("unknown dataset role '" + s + "'");
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    }
    return v;
}

void Trajectory::validate(std::size_t state_dim, std::size_t action_dim) const {
    const std::string where = "trajectory " + std::to_string(traj_id);
    if (transitions.empty()) throw std::invalid_argument(where + " is empty");
    for (std::size_t t = 0; t < transitions.size(); ++t) {
        const auto& tr = transitions[t];
        if (tr.s.size() != state_dim || tr.s_next.size() != state_dim || tr.a.size() != action_dim) {
            throw std::invalid_argument(where + ": dimension mismatch at step " + std::to_string(t));
        }
        if (tr.done && t + 1 != transitions.size()) {
            throw std::invalid_argument(where + ": terminal flag before the final step");
        }
        if (t + 1 < transitions.size() && tr.s_next != transitions[t + 1].s) {
            throw std::invalid_argument(where + ": s_next of step " + std::to_string(t) +
                                        " does not match the next state");
        }
    }
}

void Dataset::validate() const {
    if (trajectories.empty()) throw std::invalid_argument("dataset has no trajectories");
    if (state_dim == 0 || action_dim == 0) throw std::invalid_argument("dataset dimensions must be positive");
    for (const auto& t : trajectories) t.validate(state_dim, action_dim);
}

std::size_t Dataset::num_transitions() const {
    return std::accumulate(trajectories.begin(), trajectories.end(), std::size_t{0},
                           [](std::size_t acc, const Trajectory& t) { return acc + t.transitions.size(); });
}

double trajectory_return(const Trajectory& traj) {
    double total = 0.0;
    for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
        const auto& r = traj.transitions[t].r;
        if (!r) {
            throw std::invalid_argument("trajectory " + std::to_string(traj.traj_id) + " has no reward at step " +
                                        std::to_string(t));
        }
        total += *r;
    }
    return total;
}

std::pair<Dataset, Dataset> split_setting1(const Dataset& expert, const Dataset& random, double x_percent) {
    if (!(x_percent >= 0.0 && x_percent <= 100.0)) throw std::invalid_argument("X must lie in [0, 100]");
    if (expert.state_dim != random.state_dim || expert.action_dim != random.action_dim) {
        throw std::invalid_argument("expert and random datasets have different dimensions");
    }
    const auto ordered = sorted_by_id(expert);
    const std::size_t n = ordered.size();
    const auto moved = static_cast<std::size_t>(std::floor(x_percent * static_cast<double>(n) / 100.0 + 1e-9));
    if (moved >= n) {
        throw std::invalid_argument("split leaves no expert trajectory in D_e; at least one must remain");
    }
    Dataset d_e = with_trajectories(expert, DatasetRole::expert);
    Dataset d_o = with_trajectories(expert, DatasetRole::offline);
    for (std::size_t i = 0; i < n; ++i) {
        (i < moved ? d_o : d_e).trajectories.push_back(*ordered[i]);
    }
    for (const auto* t : sorted_by_id(random)) d_o.trajectories.push_back(*t);
    return {std::move(d_e), std::move(d_o)};
}

std::pair<Dataset, Dataset> split_setting2(const Dataset& mixed, std::size_t x_step, double top_fraction) {
    if (x_step == 0) throw std::invalid_argument("x_step must be positive");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw std::invalid_argument("top_fraction must lie in (0, 1]");
    const std::size_t n = mixed.trajectories.size();
    if (static_cast<double>(n) * top_fraction < 1.0 - 1e-9) {
        throw std::invalid_argument("too few trajectories for the requested top fraction");
    }
    struct Ranked {
        const Trajectory* traj;
        double ret;
    };
    std::vector<Ranked> ranked;
    for (const auto& t : mixed.trajectories) ranked.push_back({&t, trajectory_return(t)});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.ret != b.ret) return a.ret > b.ret;
        return a.traj->traj_id < b.traj->traj_id;
    });
    const auto top = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(n) - 1e-9));
    Dataset d_e = with_trajectories(mixed, DatasetRole::expert);
    Dataset d_o = with_trajectories(mixed, DatasetRole::offline);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const bool pick = i < top && i % x_step == 0;
        (pick ? d_e : d_o).trajectories.push_back(*ranked[i].traj);
    }
    if (d_e.trajectories.empty()) throw std::invalid_argument("setting-2 split produced an empty D_e");
    return {std::move(d_e), std::move(d_o)};
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << kMagic << ' ' << kFormatVersion << " state_dim=" << dataset.state_dim
        << " action_dim=" << dataset.action_dim << " role=" << to_string(dataset.role) << '\n';
    for (const auto& traj : dataset.trajectories) {
        for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
            const auto& tr = traj.transitions[t];
            out << traj.traj_id << '|' << t << '|' << join_vector(tr.s) << '|' << join_vector(tr.a) << '|'
                << join_vector(tr.s_next) << '|' << (tr.r ? format_double(*tr.r) : std::string()) << '|'
                << (tr.done ? 1 : 0) << '\n';
        }
    }
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    if (content.empty()) throw DatasetFormatError(1, "empty file");

    std::vector<std::string_view> lines = split(content, '\n');
    // A well-formed file ends with LF, leaving one empty trailing element.
    const bool terminated = lines.back().empty();
    if (terminated) lines.pop_back();

    Dataset ds;
    {
        std::istringstream header{std::string(lines.front())};
        std::string magic;
        int version = 0;
        header >> magic >> version;
        if (magic != kMagic) throw DatasetFormatError(1, "missing dataset header");
        if (version != kFormatVersion) throw DatasetFormatError(1, "unsupported format version");
        std::string kv;
        bool have_s = false, have_a = false;
        while (header >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw DatasetFormatError(1, "bad header field '" + kv + "'");
            const auto key = kv.substr(0, eq);
            const auto val = kv.substr(eq + 1);
            if (key == "state_dim") {
                ds.state_dim = parse_int<std::size_t>(val, 1, "state_dim");
                have_s = true;
            } else if (key == "action_dim") {
                ds.action_dim = parse_int<std::size_t>(val, 1, "action_dim");
                have_a = true;
            } else if (key == "role") {
                ds.role = dataset_role_from_string(val);
            }
        }
        if (!have_s || !have_a) throw DatasetFormatError(1, "header must declare state_dim and action_dim");
    }
    if (!terminated) throw DatasetFormatError(lines.size(), "truncated record (missing line terminator)");

    std::map<std::int64_t, std::size_t> index;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        const auto fields = split(lines[li], '|');
        if (fields.size() != 7) {
            throw DatasetFormatError(line_no, "expected 7 fields, found " + std::to_string(fields.size()));
        }
        const auto id = parse_int<std::int64_t>(fields[0], line_no, "traj_id");
        const auto t = parse_int<std::size_t>(fields[1], line_no, "t");
        Transition tr;
        tr.s = parse_vector(fields[2], ds.state_dim, line_no, "s");
        tr.a = parse_vector(fields[3], ds.action_dim, line_no, "a");
        tr.s_next = parse_vector(fields[4], ds.state_dim, line_no, "s_next");
        if (!fields[5].empty()) {
            try {
                tr.r = parse_double(fields[5]);
            } catch (const std::exception&) {
                throw DatasetFormatError(line_no, "bad reward '" + std::string(fields[5]) + "'");
            }
        }
        if (fields[6] != "0" && fields[6] != "1") throw DatasetFormatError(line_no, "done must be 0 or 1");
        tr.done = fields[6] == "1";

        auto it = index.find(id);
        if (it == index.end()) {
            it = index.emplace(id, ds.trajectories.size()).first;
            ds.trajectories.push_back(Trajectory{{}, id});
        }
        auto& traj = ds.trajectories[it->second];
        if (t != traj.transitions.size()) {
            throw DatasetFormatError(line_no, "step index " + std::to_string(t) + " out of order for trajectory " +
                                                  std::to_string(id));
        }
        traj.transitions.push_back(std::move(tr));
    }
    ds.validate();
    return ds;
}

TransitionTable TransitionTable::from(const Dataset& dataset) {
    TransitionTable tab;
    const auto n = static_cast<Eigen::Index>(dataset.num_transitions());
    tab.states.resize(n, static_cast<Eigen::Index>(dataset.state_dim));
    tab.actions.resize(n, static_cast<Eigen::Index>(dataset.action_dim));
    Eigen::Index row = 0;
    for (const auto& traj : dataset.trajectories) {
        for (const auto& tr : traj.transitions) {
            for (std::size_t i = 0; i < tr.s.size(); ++i) tab.states(row, static_cast<Eigen::Index>(i)) = tr.s[i];
            for (std::size_t i = 0; i < tr.a.size(); ++i) tab.actions(row, static_cast<Eigen::Index>(i)) = tr.a[i];
            tab.traj_ids.push_back(traj.traj_id);
            ++row;
        }
    }
    return tab;
}

TransitionTable TransitionTable::concat(const TransitionTable& a, const TransitionTable& b) {
    TransitionTable out;
    out.states.resize(a.states.rows() + b.states.rows(), a.states.cols());
    out.states << a.states, b.states;
    out.actions.resize(a.actions.rows() + b.actions.rows(), a.actions.cols());
    out.actions << a.actions, b.actions;
    out.traj_ids = a.traj_ids;
    out.traj_ids.insert(out.traj_ids.end(), b.traj_ids.begin(), b.traj_ids.end());
    return out;
}

Batch TransitionTable::sample(std::size_t n, Source source, std::mt19937_64& rng) const {
    if (size() == 0) throw std::invalid_argument("cannot sample from an empty dataset");
    std::uniform_int_distribution<Eigen::Index> pick(0, states.rows() - 1);
    Batch b;
    b.source = source;
    b.states.resize(static_cast<Eigen::Index>(n), states.cols());
    b.actions.resize(static_cast<Eigen::Index>(n), actions.cols());
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j) {
        const auto r = pick(rng);
        b.states.row(j) = states.row(r);
        b.actions.row(j) = actions.row(r);
    }
    return b;
}

Batch TransitionTable::all(Source source) const { return Batch{states, actions, source}; }

}  // namespace dwbc
