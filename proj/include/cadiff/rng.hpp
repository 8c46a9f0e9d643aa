#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "cadiff/error.hpp"

namespace cadiff {

// ============================================================================
// Deterministic random streams.
//
// Every random decision in the system is drawn from an Rng that was derived,
// through a chain of named children, from a single top-level seed. Children
// are derived from the parent's seed and a label, not from the parent's
// engine state, so the draw order inside one stream never perturbs another.
// All distributions are implemented on top of the raw engine output; nothing
// here depends on the (unspecified) std::<distribution> algorithms, so the
// same seed produces the same bytes on any conforming standard library.
// ============================================================================

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), eng_(detail::splitmix64(seed)) {}

    uint64_t seed() const { return seed_; }

    // Derive the seed a child stream would get, for APIs that take raw seeds.
    uint64_t derive_seed(std::string_view label, uint64_t index = 0) const {
        uint64_t h = detail::splitmix64(seed_ ^ detail::fnv1a64(label));
        return detail::splitmix64(h ^ index);
    }

    Rng child(std::string_view label, uint64_t index = 0) const {
        return Rng(derive_seed(label, index));
    }

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, n), unbiased via rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) throw ContractError("Rng::below: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Uniform integer in [lo, hi], both ends inclusive.
    int64_t int_in(int64_t lo, int64_t hi) {
        if (lo > hi) throw ContractError("Rng::int_in: empty range");
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo) + 1));
    }

    // Standard normal via Box-Muller. The spare from each pair is cached, so
    // draws come out in a fixed order regardless of how they are consumed.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    uint64_t seed_;
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cadiff
