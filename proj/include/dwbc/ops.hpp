#pragma once

// Offline policy selection: rank candidate policies by the discriminator's
// mean output on expert data, without touching the environment.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dwbc/data.hpp"
#include "dwbc/models.hpp"

namespace dwbc {

struct OpsCandidate {
    std::string id;
    GaussianPolicy policy;
};

struct OpsResult {
    std::map<std::string, double> scores;
    /// Mean of 1 - d computed from the logits. Orders the candidates even
    /// where every score rounds to 1.
    std::map<std::string, double> shortfall;
    std::vector<std::string> ranking;  // best first; ties by id ascending
    std::optional<double> spearman;
};

/// Mean of d(s, a, normalize(log pi(a|s))) over every (s, a) in `d_e`.
double ops_score(const TwoStreamDiscriminator& disc, const Dataset& d_e, const GaussianPolicy& policy,
                 const LogProbBounds& bounds = {});

OpsResult ops_rank(const TwoStreamDiscriminator& disc, const Dataset& d_e, std::span<const OpsCandidate> candidates,
                   const std::optional<std::vector<double>>& true_returns = std::nullopt,
                   const LogProbBounds& bounds = {});

/// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation (Pearson correlation of average ranks).
double spearman(std::span<const double> a, std::span<const double> b);

/// One `policy_id|score|rank` line per candidate, plus `spearman|value` when known.
void write_ops_report(const std::filesystem::path& path, const OpsResult& result);

}  // namespace dwbc
