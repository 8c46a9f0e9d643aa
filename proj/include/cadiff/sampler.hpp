#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cadiff/arplan.hpp"
#include "cadiff/causal_mask.hpp"
#include "cadiff/denoiser.hpp"
#include "cadiff/diffusion.hpp"
#include "cadiff/latent.hpp"
#include "cadiff/matrix.hpp"
#include "cadiff/rng.hpp"
#include "cadiff/schedule.hpp"

namespace cadiff {

enum class SampleMode { single, ar };

struct SampleConfig {
    // 0 picks the default ladder length at sampling time: 50 when a condition
    // is given, 25 unconditionally. Sampling operations require a resolved
    // value in [1, T].
    int S_T = 0;
    double w = 2.0;
    SampleMode mode = SampleMode::single;
    uint64_t seed = 0;

    void validate(int T) const;
    int resolved_S_T(bool conditional) const {
        return S_T > 0 ? S_T : (conditional ? 50 : 25);
    }
};

// Clean-token predictor backing the reverse process. The production
// implementation wraps a Denoiser; tests substitute closed-form oracles.
class X0Predictor {
public:
    virtual ~X0Predictor() = default;
    virtual int l() const = 0;
    virtual int d_token() const = 0;
    virtual int cl() const = 0;
    virtual Matrix predict(const ConditionSequence& cond, const Matrix& clean_visible,
                           const Matrix& noisy, int noisy_pos_offset,
                           const std::vector<int>& block_sizes, const std::vector<int>& t,
                           const AttnMask& mask) const = 0;
};

class DenoiserPredictor : public X0Predictor {
public:
    explicit DenoiserPredictor(const Denoiser& den) : den_(&den) {}
    int l() const override { return den_->config().l; }
    int d_token() const override { return den_->config().d_token; }
    int cl() const override { return den_->config().cl; }
    Matrix predict(const ConditionSequence& cond, const Matrix& clean_visible,
                   const Matrix& noisy, int noisy_pos_offset,
                   const std::vector<int>& block_sizes, const std::vector<int>& t,
                   const AttnMask& mask) const override;

private:
    const Denoiser* den_;
};

Matrix guide(const Matrix& pred_cond, const Matrix& pred_uncond, double w);

Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, int t, int t_prev,
                 const NoiseSchedule& s);

// Supplies the RNG stream that seeds block s's initial noise. Sampling derives
// these as rng.child("block", s); tests inject providers directly to show a
// finalized block never depends on later blocks' streams.
using BlockRngProvider = std::function<Rng(int)>;

LatentSequence sample_ar_with_block_rngs(const X0Predictor& pred, const NoiseSchedule& s,
                                         const ConditionSequence& cond, const ArPlan& plan,
                                         const SampleConfig& scfg,
                                         const BlockRngProvider& block_rng);

LatentSequence sample_ar(const X0Predictor& pred, const NoiseSchedule& s,
                         const ConditionSequence& cond, const ArPlan& plan,
                         const SampleConfig& scfg, const Rng& rng);

LatentSequence sample_single(const X0Predictor& pred, const NoiseSchedule& s,
                             const ConditionSequence& cond, const SampleConfig& scfg,
                             const Rng& rng);

// One generated sequence with provenance. cond_mode is -1 for unconditional
// samples and serializes as null.
struct SampleRecord {
    Matrix tokens;
    int cond_mode = -1;
    uint64_t seed = 0;
};

void write_samples(const std::string& path, const std::vector<SampleRecord>& samples,
                   const std::string& config_echo_json);
std::vector<SampleRecord> read_samples(const std::string& path,
                                       std::string* config_echo_json = nullptr);

}  // namespace cadiff
