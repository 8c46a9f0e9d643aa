#pragma once

#include <vector>

#include "cadiff/error.hpp"
#include "cadiff/rng.hpp"

namespace cadiff {

// ============================================================================
// Autoregressive step plans: a partition of l latent tokens into contiguous
// blocks, each generated (or trained) as one AR step.
// ============================================================================

struct ArPlan {
    std::vector<int> sizes;   // tokens per AR step, every entry >= 1
    std::vector<int> cumsum;  // block boundaries; cumsum[0] = 0, cumsum.back() = l

    int l() const { return cumsum.back(); }
    int steps() const { return static_cast<int>(sizes.size()); }
};

// Builds a plan from explicit block sizes, validating the partition.
ArPlan plan_from_sizes(std::vector<int> sizes);

// Draws the number of AR steps and the block boundaries.
//
// The step count I is uniform over {1..l} when gamma == 1.0; otherwise it
// follows p(I = i+1) = b * gamma^i for i in [0, l-1] with the normalizer
// b = (1 - gamma) / (1 - gamma^l). The I-1 interior cut points are then drawn
// uniformly without replacement from [1, l) and sorted; sizes are the
// consecutive differences.
ArPlan generate_ar_steps(int l, double gamma, Rng& rng);

// The distribution of the step count I over {1..l} for the given decay.
std::vector<double> step_count_pmf(int l, double gamma);

}  // namespace cadiff
