#pragma once

// Demonstration datasets: in-memory types, the line-delimited text format
// and the expert/offline split procedures.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dwbc/losses.hpp"
#include "dwbc/nn.hpp"

namespace dwbc {

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    std::vector<double> s_next;
    std::optional<double> r;
    bool done = false;

    bool operator==(const Transition&) const = default;
};

struct Trajectory {
    std::vector<Transition> transitions;
    std::int64_t traj_id = 0;

    bool operator==(const Trajectory&) const = default;
    /// Checks dimensions, s_next/s chaining and that only the last step may be terminal.
    void validate(std::size_t state_dim, std::size_t action_dim) const;
};

enum class DatasetRole { expert, offline, unsplit };

std::string to_string(DatasetRole role);
DatasetRole dataset_role_from_string(const std::string& s);

struct Dataset {
    std::vector<Trajectory> trajectories;
    DatasetRole role = DatasetRole::unsplit;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;

    bool operator==(const Dataset&) const = default;
    void validate() const;
    std::size_t num_trajectories() const { return trajectories.size(); }
    std::size_t num_transitions() const;
};

/// Thrown by `load_dataset`; carries the 1-based line number of the fault.
class DatasetFormatError : public std::runtime_error {
public:
    DatasetFormatError(std::size_t line, const std::string& msg);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

double trajectory_return(const Trajectory& traj);

/// Moves the first floor(x% * n) expert trajectories (by traj_id) into the
/// offline set next to every random trajectory; the rest stay expert.
std::pair<Dataset, Dataset> split_setting1(const Dataset& expert, const Dataset& random, double x_percent);

/// Ranks by return (ties by traj_id), takes every `x_step`-th of the top
/// ceil(top_fraction * n) as expert data, everything else offline.
std::pair<Dataset, Dataset> split_setting2(const Dataset& mixed, std::size_t x_step, double top_fraction = 0.05);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_double(double v);
double parse_double(std::string_view text);

/// Flat (s, a) view of a dataset for minibatch sampling.
struct TransitionTable {
    Matrix states;
    Matrix actions;
    std::vector<std::int64_t> traj_ids;

    static TransitionTable from(const Dataset& dataset);
    static TransitionTable concat(const TransitionTable& a, const TransitionTable& b);
    std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
    /// Uniform with-replacement draw of `n` rows.
    Batch sample(std::size_t n, Source source, std::mt19937_64& rng) const;
    Batch all(Source source) const;
};

}  // namespace dwbc
