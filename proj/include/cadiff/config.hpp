#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadiff/datagen.hpp"
#include "cadiff/denoiser.hpp"
#include "cadiff/diffusion.hpp"
#include "cadiff/sampler.hpp"

namespace cadiff {

// Everything a run can configure, read from one JSON file with optional
// sections plus command-line overrides. The top-level seed drives training;
// data and sampling carry their own seeds.
struct RunConfig {
    uint64_t seed = 0;
    SynthConfig data;
    DenoiserConfig model;
    TrainConfig train;
    SampleConfig sample;
};

nlohmann::json synth_config_to_json(const SynthConfig& c);
nlohmann::json denoiser_config_to_json(const DenoiserConfig& c);
nlohmann::json train_config_to_json(const TrainConfig& c);
nlohmann::json sample_config_to_json(const SampleConfig& c);
nlohmann::json run_config_to_json(const RunConfig& c);

SynthConfig synth_config_from_json(const nlohmann::json& j, const std::string& prefix);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j, const std::string& prefix);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix);
SampleConfig sample_config_from_json(const nlohmann::json& j, const std::string& prefix);
RunConfig run_config_from_json(const nlohmann::json& j);

// Applies one "key.path=value" override to the config tree. Values parse as
// JSON scalars where possible and fall back to strings.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// Empty path loads an all-defaults config. Overrides apply on top of the
// file before conversion, so they face the same strict validation.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace cadiff
