#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cadiff/causal_mask.hpp"
#include "cadiff/latent.hpp"
#include "cadiff/tape.hpp"

namespace cadiff {

// ============================================================================
// Attention-based denoiser: embeds condition, visible-clean, and noisy
// tokens, runs pre-norm masked-attention blocks over the combined sequence,
// and predicts the clean tokens at the noisy positions.
// ============================================================================

struct DenoiserConfig {
    int d_token = 16;
    int d_model = 128;
    int n_heads = 4;
    int n_blocks = 8;
    int l = 8;    // latent tokens per sequence
    int cl = 1;   // condition tokens
    int T = 100;  // timestep range for embeddings
    int d_ff = 0; // feedforward width; 0 means 4 * d_model

    int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    int head_dim() const { return d_model / n_heads; }
    void validate() const;
};

// Named parameter list in a fixed manifest order. The order is the contract
// for checkpoints and gradient indexing.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Matrix> values;

    int add(std::string name, Matrix m);
    int index_of(const std::string& name) const;
    size_t count() const { return values.size(); }
    size_t total_entries() const;
    void require_finite() const;
};

// The manifest: every parameter's name and shape, in order, derived purely
// from the config. Checkpoint layout and init follow this list.
std::vector<std::pair<std::string, std::pair<int, int>>> param_manifest(const DenoiserConfig& cfg);

// Fresh parameters: weights N(0, 0.02^2), normalization gains 1, biases 0.
// Deterministic per seed; each parameter has its own derived stream, so the
// draw for one is independent of the shapes of the others.
ParamStore init_params(const DenoiserConfig& cfg, uint64_t seed);

// One forward pass's layout. noisy covers all l tokens during training; at
// AR inference it is a single block, with noisy_pos_offset locating it in
// the sequence. t gives the diffusion timestep per noisy block.
struct DenoiserInput {
    const ConditionSequence* cond = nullptr;
    Matrix clean_visible;             // v x d_token, v may be 0
    Matrix noisy;                     // n x d_token
    int noisy_pos_offset = 0;
    std::vector<int> block_sizes;     // partition of the n noisy rows
    std::vector<int> t;               // one timestep per block, each in [0, T]
    const AttnMask* mask = nullptr;
};

// Per-layer hidden states, captured on demand for leakage tests and dumps.
struct ForwardTrace {
    Matrix embedded;
    std::vector<Matrix> block_out;
    Matrix final_norm;
};

class Denoiser {
public:
    Denoiser(DenoiserConfig cfg, ParamStore params);

    static Denoiser init(const DenoiserConfig& cfg, uint64_t seed) {
        return Denoiser(cfg, init_params(cfg, seed));
    }

    const DenoiserConfig& config() const { return cfg_; }
    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }

    // Sinusoidal timestep encoding before the learned projection:
    // interleaved sin/cos over geometrically spaced frequencies, base 10000.
    Matrix timestep_embedding(int t) const;

    // Records the forward pass on the tape and returns the prediction node
    // (n x d_token, noisy positions only). Registers every parameter with
    // param_id = manifest index, so backward() covers them all.
    Tape::Id forward_on_tape(Tape& tape, const DenoiserInput& in,
                             ForwardTrace* trace = nullptr) const;

    // Eager forward for inference paths that never differentiate.
    Matrix forward(const DenoiserInput& in, ForwardTrace* trace = nullptr) const;

private:
    void validate_input(const DenoiserInput& in) const;

    struct BlockIx {
        int ln1g, ln1b, wq, wk, wv, wo, ln2g, ln2b, w1, b1, w2, b2;
    };
    struct Ix {
        int embed_cond_w, embed_cond_b;
        int embed_clean_w, embed_clean_b;
        int embed_noisy_w, embed_noisy_b;
        int null_cond, pos_table, region_cond, region_clean;
        int temb_w, temb_b;
        std::vector<BlockIx> blocks;
        int final_g, final_b, head_w, head_b;
    };

    DenoiserConfig cfg_;
    ParamStore params_;
    Ix ix_;
};

}  // namespace cadiff
