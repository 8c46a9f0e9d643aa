#pragma once

#include <optional>
#include <vector>

#include "cadiff/datagen.hpp"
#include "cadiff/latent.hpp"
#include "cadiff/matrix.hpp"
#include "cadiff/sampler.hpp"

namespace cadiff {

// All rates live in [0,1]. diversity is the mean pairwise (1 - cosine)
// halved, since the raw mean ranges over [0,2]. Absent fields were not
// applicable to the sample set (e.g. no conditional samples) and are
// excluded from overall, never imputed.
struct MetricReport {
    std::optional<double> similarity;
    std::optional<double> novelty;
    std::optional<double> diversity;
    std::optional<double> validity;
    std::optional<double> uniqueness;
    std::optional<double> mode_accuracy;
    std::vector<double> mode_shares;

    double overall() const;
};

double cos_sim(const LatentSequence& a, const LatentSequence& b);

double similarity_rate(const std::vector<LatentSequence>& gen,
                       const std::vector<LatentSequence>& refs);

double novelty_rate(const std::vector<LatentSequence>& gen,
                    const std::vector<LatentSequence>& train, double tau_nov);

double diversity_mean(const std::vector<LatentSequence>& gen);

double uniqueness_rate(const std::vector<LatentSequence>& gen, double tau_uni);

double validity_rate(const std::vector<LatentSequence>& gen, double token_norm_bound);

// RMS token norm of the training set, the base for the validity bound.
double data_token_rms(const Dataset& ds);

MetricReport evaluate(const std::vector<SampleRecord>& samples, const Dataset& ds);

}  // namespace cadiff
