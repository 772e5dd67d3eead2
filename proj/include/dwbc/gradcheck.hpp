#pragma once

// Analytic-vs-finite-difference checks for every training objective.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dwbc {

struct GradCheckResult {
    std::string loss;
    std::size_t trials = 0;
    double max_rel_error = 0.0;
};

/// Draws `trials` random networks and batches per loss and compares the
/// analytic gradient against central differences with step `h`. The
/// reference values are recomputed one sample at a time, with the other
/// network's outputs held fixed.
std::vector<GradCheckResult> run_grad_checks(std::size_t trials, std::uint64_t seed, double h = 1e-5);

}  // namespace dwbc
