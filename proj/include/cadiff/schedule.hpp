#pragma once

#include <vector>

#include "cadiff/error.hpp"

namespace cadiff {

// ============================================================================
// Diffusion variance schedule.
//
// betas holds the per-step noise rates for t = 1..T, strictly increasing.
// alpha_bars[t] is the running product of (1 - beta_s) for s <= t, with
// alpha_bars[0] = 1, so a clean block is corrupted to step t in closed form:
//   sqrt(alpha_bar(t)) * x0 + sqrt(1 - alpha_bar(t)) * noise.
// ============================================================================

struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // betas[t-1] is the rate at step t
    std::vector<double> alphas;      // 1 - beta, same indexing
    std::vector<double> alpha_bars;  // alpha_bars[t] for t in [0, T]
};

// Linearly spaced rates from beta_start at t=1 to beta_end at t=T, endpoints
// inclusive. Requires 0 < beta_start < beta_end < 1, except T=1 where the
// single rate is given as beta_start == beta_end.
NoiseSchedule linear_schedule(int T, double beta_start, double beta_end);

// alpha_bars[t] with bounds checking; alpha_bar(s, 0) == 1 exactly.
double alpha_bar(const NoiseSchedule& s, int t);

double beta(const NoiseSchedule& s, int t);

// Descending inference ladder: t_k = T - k * floor(T / S_T) for
// k = 0..S_T-1. Starts at T, stays within [1, T], strictly decreasing.
std::vector<int> subsample(const NoiseSchedule& s, int S_T);

}  // namespace cadiff
