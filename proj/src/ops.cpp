#include "dwbc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dwbc/losses.hpp"

namespace dwbc {

namespace {

struct ScoreParts {
    double mean_d = 0.0;
    double shortfall = 0.0;
};

ScoreParts score_parts(const TwoStreamDiscriminator& disc, const Dataset& d_e, const GaussianPolicy& policy,
                       const LogProbBounds& bounds) {
    if (policy.state_dim != disc.state_dim || policy.action_dim != disc.action_dim ||
        d_e.state_dim != disc.state_dim || d_e.action_dim != disc.action_dim) {
        throw std::invalid_argument("ops_score: policy, discriminator and dataset dimensions differ");
    }
    const TransitionTable tab = TransitionTable::from(d_e);
    if (tab.size() == 0) throw std::invalid_argument("ops_score: expert dataset is empty");
    const PolicyEval pev = policy_log_prob_batch(policy, tab.states, tab.actions);
    Vector logp(pev.logp.size());
    for (Eigen::Index i = 0; i < logp.size(); ++i) logp(i) = normalize_logp(pev.logp(i), bounds);
    const DiscriminatorEval dev = discriminator_forward_batch(disc, tab.states, tab.actions, logp);
    ScoreParts parts;
    for (Eigen::Index i = 0; i < dev.logit.size(); ++i) {
        parts.mean_d += dev.d(i);
        // 1 - d from the logit directly; exact even where d rounds to 1.
        const double z = dev.logit(i);
        parts.shortfall += z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
    }
    const double n = static_cast<double>(dev.logit.size());
    parts.mean_d /= n;
    parts.shortfall /= n;
    return parts;
}

}  // namespace

double ops_score(const TwoStreamDiscriminator& disc, const Dataset& d_e, const GaussianPolicy& policy,
                 const LogProbBounds& bounds) {
    return score_parts(disc, d_e, policy, bounds).mean_d;
}

OpsResult ops_rank(const TwoStreamDiscriminator& disc, const Dataset& d_e, std::span<const OpsCandidate> candidates,
                   const std::optional<std::vector<double>>& true_returns, const LogProbBounds& bounds) {
    if (candidates.size() < 2) throw std::invalid_argument("ops_rank: need at least two candidate policies");
    if (true_returns && true_returns->size() != candidates.size()) {
        throw std::invalid_argument("ops_rank: " + std::to_string(true_returns->size()) + " returns for " +
                                    std::to_string(candidates.size()) + " policies");
    }
    OpsResult res;
    std::vector<double> order_key;
    for (const auto& c : candidates) {
        if (res.scores.count(c.id)) throw std::invalid_argument("ops_rank: duplicate policy id '" + c.id + "'");
        const ScoreParts p = score_parts(disc, d_e, c.policy, bounds);
        res.scores[c.id] = p.mean_d;
        res.shortfall[c.id] = p.shortfall;
        order_key.push_back(-p.shortfall);
    }
    for (const auto& c : candidates) res.ranking.push_back(c.id);
    std::sort(res.ranking.begin(), res.ranking.end(), [&](const std::string& a, const std::string& b) {
        const double sa = res.shortfall.at(a), sb = res.shortfall.at(b);
        if (sa != sb) return sa < sb;
        return a < b;
    });
    if (true_returns) res.spearman = spearman(order_key, *true_returns);
    return res;
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

void write_ops_report(const std::filesystem::path& path, const OpsResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "policy_id|score|rank\n";
    for (std::size_t i = 0; i < result.ranking.size(); ++i) {
        const auto& id = result.ranking[i];
        out << id << '|' << format_double(result.scores.at(id)) << '|' << (i + 1) << '\n';
    }
    if (result.spearman) out << "spearman|" << format_double(*result.spearman) << '\n';
}

}  // namespace dwbc
