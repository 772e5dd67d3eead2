#include "dwbc/generate.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dwbc/config.hpp"

namespace dwbc {

GeneratedData generate_data(const Env& env, const GenDataConfig& cfg) {
    if (cfg.setting < 1 || cfg.setting > 3) throw std::invalid_argument("setting must be 1, 2 or 3");
    if (cfg.expert_trajs == 0) throw std::invalid_argument("need at least one expert trajectory");
    GeneratedData out;
    out.refs = measure_references(env, cfg.reference_episodes, derive_seed(cfg.seed, "data-refs"));

    const Dataset expert =
        generate_demonstrations(env, Behavior::expert, cfg.expert_trajs, derive_seed(cfg.seed, "data-expert"), 0);
    const auto first_other = static_cast<std::int64_t>(cfg.expert_trajs);
    const Dataset other =
        cfg.setting == 3
            ? generate_demonstrations(env, Behavior::noisy_expert, cfg.other_trajs, derive_seed(cfg.seed, "data-other"),
                                      first_other, cfg.noisy_expert_std)
            : generate_demonstrations(env, Behavior::random, cfg.other_trajs, derive_seed(cfg.seed, "data-other"),
                                      first_other, 0.0, cfg.random_steps);
    for (const auto& t : expert.trajectories) out.expert_label[t.traj_id] = true;
    for (const auto& t : other.trajectories) out.expert_label[t.traj_id] = false;
    out.expert_transitions = expert.num_transitions();
    out.other_transitions = other.num_transitions();

    if (cfg.setting == 2) {
        if (cfg.x < 1.0 || cfg.x != std::floor(cfg.x)) throw std::invalid_argument("setting 2 needs an integer x >= 1");
        Dataset mixed = expert;
        mixed.trajectories.insert(mixed.trajectories.end(), other.trajectories.begin(), other.trajectories.end());
        std::tie(out.d_e, out.d_o) = split_setting2(mixed, static_cast<std::size_t>(cfg.x));
    } else {
        std::tie(out.d_e, out.d_o) = split_setting1(expert, other, cfg.x);
    }
    return out;
}

void save_labels(const std::map<std::int64_t, bool>& labels, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "traj_id|expert\n";
    for (const auto& [id, is_expert] : labels) out << id << '|' << (is_expert ? 1 : 0) << '\n';
}

std::map<std::int64_t, bool> load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open label file '" + path.string() + "'");
    std::map<std::int64_t, bool> labels;
    std::string line;
    std::getline(in, line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto bar = line.find('|');
        const std::string flag = bar == std::string::npos ? "" : line.substr(bar + 1);
        if (flag != "0" && flag != "1") {
            throw std::runtime_error("label file line " + std::to_string(line_no) + ": expected traj_id|0 or traj_id|1");
        }
        labels[std::stoll(line.substr(0, bar))] = flag == "1";
    }
    return labels;
}

}  // namespace dwbc
