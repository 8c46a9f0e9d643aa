#include "cadiff/arplan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cadiff {

namespace {

void check_l_gamma(int l, double gamma) {
    if (l < 1) throw ConfigError("arplan.l: must be >= 1, got " + std::to_string(l));
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw ConfigError("arplan.gamma: must be in (0,1], got " + std::to_string(gamma));
    }
}

}  // namespace

ArPlan plan_from_sizes(std::vector<int> sizes) {
    if (sizes.empty()) throw ConfigError("arplan.sizes: must contain at least one block");
    ArPlan p;
    p.cumsum.resize(sizes.size() + 1);
    p.cumsum[0] = 0;
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < 1) {
            throw ConfigError("arplan.sizes: block " + std::to_string(i) + " is not positive");
        }
        p.cumsum[i + 1] = p.cumsum[i] + sizes[i];
    }
    p.sizes = std::move(sizes);
    return p;
}

std::vector<double> step_count_pmf(int l, double gamma) {
    check_l_gamma(l, gamma);
    std::vector<double> pmf(l);
    if (gamma == 1.0) {
        std::fill(pmf.begin(), pmf.end(), 1.0 / l);
        return pmf;
    }
    const double b = (1.0 - gamma) / (1.0 - std::pow(gamma, l));
    double g = 1.0;  // gamma^i
    for (int i = 0; i < l; ++i) {
        pmf[i] = b * g;
        g *= gamma;
    }
    return pmf;
}

ArPlan generate_ar_steps(int l, double gamma, Rng& rng) {
    check_l_gamma(l, gamma);

    int steps;
    if (gamma == 1.0) {
        steps = static_cast<int>(rng.int_in(1, l));
    } else {
        const std::vector<double> pmf = step_count_pmf(l, gamma);
        const double u = rng.uniform01();
        double cdf = 0.0;
        steps = l;  // guards the cdf falling short of 1 by rounding
        for (int i = 0; i < l; ++i) {
            cdf += pmf[i];
            if (u < cdf) {
                steps = i + 1;
                break;
            }
        }
    }

    // steps - 1 distinct interior cuts, drawn by a partial Fisher-Yates over
    // the candidate positions [1, l), then sorted.
    std::vector<int> candidates(l - 1);
    std::iota(candidates.begin(), candidates.end(), 1);
    std::vector<int> cuts;
    cuts.reserve(steps - 1);
    for (int j = 0; j < steps - 1; ++j) {
        const int pick = j + static_cast<int>(rng.below(candidates.size() - j));
        std::swap(candidates[j], candidates[pick]);
        cuts.push_back(candidates[j]);
    }
    std::sort(cuts.begin(), cuts.end());

    std::vector<int> sizes;
    sizes.reserve(steps);
    int prev = 0;
    for (int c : cuts) {
        sizes.push_back(c - prev);
        prev = c;
    }
    sizes.push_back(l - prev);
    return plan_from_sizes(std::move(sizes));
}

}  // namespace cadiff
