#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cadiff/arplan.hpp"
#include "cadiff/denoiser.hpp"
#include "cadiff/schedule.hpp"

namespace cadiff {

// ============================================================================
// Forward noising, the training objective over sampled AR plans with
// classifier-free-guidance dropout, the Adam loop, and checkpoint files.
// ============================================================================

enum class LossScope { all_noisy, current_step };

struct TrainConfig {
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double gamma = 0.5;
    double cfg_dropout = 0.1;
    double lr = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 200;
    int batch_size = 64;
    MaskVariant variant = MaskVariant::partial;
    LossScope loss_scope = LossScope::all_noisy;
    bool shared_t = true;

    void validate() const;
    NoiseSchedule make_schedule() const { return linear_schedule(T, beta_start, beta_end); }
};

// Closed-form corruption to step t: sqrt(a_bar_t) * x0 + sqrt(1 - a_bar_t) * noise.
// t = 0 returns x0 exactly.
LatentSequence forward_diffuse(const LatentSequence& x0, int t, const NoiseSchedule& s,
                               const Matrix& noise);

// With probability p, swaps the condition for the learned null condition.
ConditionSequence cfg_dropout(const ConditionSequence& cond, double p, Rng& rng);

// One sample's drawn randomness, separated out so tests can force degenerate
// draws (t = 0, fixed plans) that the training path would never roll.
struct StepDraw {
    ArPlan plan;
    std::vector<int> t;    // per block; a single shared value is repeated
    Matrix noise;          // l x d_token standard normal
    int loss_block = -1;   // -1 trains all noisy positions, else one block
};

// Builds the training layout for one sample under `draw`, runs the denoiser,
// and returns the loss; gradients (per manifest order) are accumulated into
// *grads when non-null. The loss is normalized by l * d_token regardless of
// scope, so per-block losses over a plan sum exactly to the all-noisy loss.
double sample_loss_grads(const Denoiser& den, const ConditionSequence& cond, const Matrix& x0,
                         const StepDraw& draw, const NoiseSchedule& s, MaskVariant variant,
                         std::vector<Matrix>* grads);

struct TrainSample {
    ConditionSequence cond;
    Matrix x0;
};

// Mean loss and mean gradients over a batch. Each sample draws its plan,
// timesteps, dropout, and noise from a stream named by its batch index, and
// samples are reduced over a fixed slot grid, so the result is identical for
// any thread count. step_index only labels error diagnostics.
double training_step(const Denoiser& den, std::span<const TrainSample> batch,
                     const NoiseSchedule& s, const TrainConfig& cfg, const Rng& step_rng,
                     std::vector<Matrix>& grads_out, int n_threads, int step_index = -1);

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    int64_t step = 0;
};

AdamState make_adam_state(const ParamStore& params);

// Standard bias-corrected Adam, applied in manifest order.
void adam_update(ParamStore& params, const std::vector<Matrix>& grads, AdamState& state,
                 double lr, double beta1, double beta2, double eps);

// ----------------------------------------------------------------------------
// Checkpoints: magic "CADIFF1", one JSON header line (configs, seed, epoch,
// parameter manifest with names/shapes), then the parameters as raw
// little-endian 32-bit floats in manifest order.
// ----------------------------------------------------------------------------
struct Checkpoint {
    DenoiserConfig model;
    TrainConfig train;
    uint64_t seed = 0;
    int epoch = 0;
    ParamStore params;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

struct TrainLogEntry {
    int step = 0;
    int epoch = 0;
    double loss = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogEntry> log;
};

// Shuffled mini-batch Adam loop; deterministic per seed for any thread count.
TrainResult train(const std::vector<TrainSample>& data, const TrainConfig& cfg,
                  const DenoiserConfig& dcfg, uint64_t seed, int n_threads,
                  const std::function<void(const TrainLogEntry&)>& on_log = {});

// Central-difference sweep over every parameter entry on one fixed random
// training example. Returns the max relative error against the tape
// gradients. Cost grows with the parameter count; meant for small configs.
double denoiser_grad_check(const DenoiserConfig& cfg, uint64_t seed, double eps);

}  // namespace cadiff
