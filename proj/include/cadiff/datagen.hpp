#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cadiff/diffusion.hpp"
#include "cadiff/latent.hpp"
#include "cadiff/matrix.hpp"
#include "cadiff/rng.hpp"

namespace cadiff {

struct SynthConfig {
    int K = 4;
    int n = 4000;
    int l = 8;
    int d_token = 16;
    double rho = 0.7;
    double sigma = 1.0;
    int cl = 1;
    double min_center_dist = 0.0;
    uint64_t seed = 0;

    void validate() const;
};

struct DataRecord {
    Matrix cond;
    Matrix x0;
    int mode = 0;
};

struct Dataset {
    SynthConfig config;
    Matrix centers;    // K x d_token
    Matrix cond_proj;  // K x d_token, the fixed one-hot projection
    std::vector<DataRecord> records;
};

Dataset gen_dataset(const SynthConfig& cfg);

int assign_mode(const LatentSequence& x, const Matrix& centers);

// Canonical (noise-free) condition tokens for mode k: projection row k
// replicated cl times.
ConditionSequence condition_for_mode(const Dataset& ds, int k);

std::vector<TrainSample> to_train_samples(const Dataset& ds);

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace cadiff
