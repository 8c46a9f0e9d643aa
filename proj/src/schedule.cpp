#include "cadiff/schedule.hpp"

#include <string>

namespace cadiff {

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule.T: must be >= 1, got " + std::to_string(T));
    if (T == 1) {
        if (beta_start != beta_end) {
            throw ConfigError("schedule: T=1 takes a single rate, pass beta_start == beta_end");
        }
    } else if (!(beta_start < beta_end)) {
        throw ConfigError("schedule: beta_start must be < beta_end for T >= 2");
    }
    if (!(beta_start > 0.0) || !(beta_end < 1.0)) {
        throw ConfigError("schedule: rates must lie in (0,1)");
    }
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    for (int t = 1; t <= T; ++t) {
        const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.betas[t - 1] = beta_start + frac * (beta_end - beta_start);
        s.alphas[t - 1] = 1.0 - s.betas[t - 1];
    }
    s.alpha_bars.resize(T + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        s.alpha_bars[t] = s.alpha_bars[t - 1] * s.alphas[t - 1];
    }
    for (int t = 1; t <= T; ++t) {
        if (!(s.alpha_bars[t] > 0.0 && s.alpha_bars[t] < s.alpha_bars[t - 1])) {
            throw ContractError("schedule: alpha_bar must stay positive and strictly decrease");
        }
    }
    return s;
}

double alpha_bar(const NoiseSchedule& s, int t) {
    if (t < 0 || t > s.T) {
        throw ContractError("alpha_bar: t=" + std::to_string(t) + " outside [0," +
                            std::to_string(s.T) + "]");
    }
    return s.alpha_bars[t];
}

double beta(const NoiseSchedule& s, int t) {
    if (t < 1 || t > s.T) {
        throw ContractError("beta: t=" + std::to_string(t) + " outside [1," +
                            std::to_string(s.T) + "]");
    }
    return s.betas[t - 1];
}

std::vector<int> subsample(const NoiseSchedule& s, int S_T) {
    if (S_T < 1 || S_T > s.T) {
        throw ConfigError("sample.steps: must be in [1," + std::to_string(s.T) + "], got " +
                          std::to_string(S_T));
    }
    const int stride = s.T / S_T;
    std::vector<int> ladder(S_T);
    for (int k = 0; k < S_T; ++k) ladder[k] = s.T - k * stride;
    return ladder;
}

}  // namespace cadiff
