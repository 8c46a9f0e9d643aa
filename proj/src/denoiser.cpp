#include "cadiff/denoiser.hpp"

#include <cmath>
#include <numeric>

#include "cadiff/rng.hpp"

namespace cadiff {

void DenoiserConfig::validate() const {
    if (d_token < 1) throw ConfigError("model.d_token: must be >= 1");
    if (d_model < 1) throw ConfigError("model.d_model: must be >= 1");
    if (n_heads < 1) throw ConfigError("model.n_heads: must be >= 1");
    if (n_blocks < 1) throw ConfigError("model.n_blocks: must be >= 1");
    if (l < 1) throw ConfigError("model.l: must be >= 1");
    if (cl < 1) throw ConfigError("model.cl: must be >= 1");
    if (T < 1) throw ConfigError("model.T: must be >= 1");
    if (d_ff < 0) throw ConfigError("model.d_ff: must be >= 0 (0 means 4*d_model)");
    if (d_model % n_heads != 0) {
        throw ConfigError("model.d_model: must be divisible by n_heads");
    }
    if (d_model % 2 != 0) {
        throw ConfigError("model.d_model: must be even for the sin/cos timestep encoding");
    }
}

int ParamStore::add(std::string name, Matrix m) {
    names.push_back(std::move(name));
    values.push_back(std::move(m));
    return static_cast<int>(values.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw ContractError("ParamStore: no parameter named " + name);
}

size_t ParamStore::total_entries() const {
    size_t n = 0;
    for (const Matrix& m : values) n += m.size();
    return n;
}

void ParamStore::require_finite() const {
    for (size_t i = 0; i < values.size(); ++i) values[i].require_finite(names[i]);
}

std::vector<std::pair<std::string, std::pair<int, int>>> param_manifest(const DenoiserConfig& cfg) {
    cfg.validate();
    const int dm = cfg.d_model;
    const int dt = cfg.d_token;
    const int df = cfg.ff_dim();
    std::vector<std::pair<std::string, std::pair<int, int>>> m;
    m.emplace_back("embed.cond.w", std::make_pair(dt, dm));
    m.emplace_back("embed.cond.b", std::make_pair(1, dm));
    m.emplace_back("embed.clean.w", std::make_pair(dt, dm));
    m.emplace_back("embed.clean.b", std::make_pair(1, dm));
    m.emplace_back("embed.noisy.w", std::make_pair(dt, dm));
    m.emplace_back("embed.noisy.b", std::make_pair(1, dm));
    m.emplace_back("null_cond", std::make_pair(1, dm));
    m.emplace_back("pos_table", std::make_pair(cfg.cl + 2 * cfg.l, dm));
    m.emplace_back("region.cond", std::make_pair(1, dm));
    m.emplace_back("region.clean", std::make_pair(1, dm));
    m.emplace_back("temb.w", std::make_pair(dm, dm));
    m.emplace_back("temb.b", std::make_pair(1, dm));
    for (int k = 0; k < cfg.n_blocks; ++k) {
        const std::string p = "block" + std::to_string(k) + ".";
        m.emplace_back(p + "ln1.g", std::make_pair(1, dm));
        m.emplace_back(p + "ln1.b", std::make_pair(1, dm));
        m.emplace_back(p + "attn.wq", std::make_pair(dm, dm));
        m.emplace_back(p + "attn.wk", std::make_pair(dm, dm));
        m.emplace_back(p + "attn.wv", std::make_pair(dm, dm));
        m.emplace_back(p + "attn.wo", std::make_pair(dm, dm));
        m.emplace_back(p + "ln2.g", std::make_pair(1, dm));
        m.emplace_back(p + "ln2.b", std::make_pair(1, dm));
        m.emplace_back(p + "ff.w1", std::make_pair(dm, df));
        m.emplace_back(p + "ff.b1", std::make_pair(1, df));
        m.emplace_back(p + "ff.w2", std::make_pair(df, dm));
        m.emplace_back(p + "ff.b2", std::make_pair(1, dm));
    }
    m.emplace_back("final_ln.g", std::make_pair(1, dm));
    m.emplace_back("final_ln.b", std::make_pair(1, dm));
    m.emplace_back("head.w", std::make_pair(dm, dt));
    m.emplace_back("head.b", std::make_pair(1, dt));
    return m;
}

namespace {

bool is_gain(const std::string& name) {
    return name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}

bool is_bias(const std::string& name) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) return true;
    return name.size() >= 3 && name.compare(name.size() - 3, 3, ".b1") == 0;
}

bool is_bias2(const std::string& name) {
    return name.size() >= 3 && name.compare(name.size() - 3, 3, ".b2") == 0;
}

}  // namespace

ParamStore init_params(const DenoiserConfig& cfg, uint64_t seed) {
    const Rng root(seed);
    ParamStore store;
    for (const auto& [name, shape] : param_manifest(cfg)) {
        Matrix m(shape.first, shape.second);
        if (is_gain(name)) {
            m = Matrix::filled(shape.first, shape.second, 1.0);
        } else if (is_bias(name) || is_bias2(name)) {
            // stays zero
        } else {
            Rng stream = root.child(name);
            m = Matrix::gaussian(shape.first, shape.second, stream, 0.02);
        }
        store.add(name, std::move(m));
    }
    return store;
}

Denoiser::Denoiser(DenoiserConfig cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    const auto manifest = param_manifest(cfg_);
    if (params_.count() != manifest.size()) {
        throw ContractError("denoiser: parameter count " + std::to_string(params_.count()) +
                            " does not match manifest size " + std::to_string(manifest.size()));
    }
    for (size_t i = 0; i < manifest.size(); ++i) {
        const auto& [name, shape] = manifest[i];
        if (params_.names[i] != name) {
            throw ContractError("denoiser: parameter " + std::to_string(i) + " is " +
                                params_.names[i] + ", manifest expects " + name);
        }
        const Matrix& m = params_.values[i];
        if (m.rows != shape.first || m.cols != shape.second) {
            throw ContractError("denoiser: " + name + " has shape " + shape_str(m) +
                                ", manifest expects [" + std::to_string(shape.first) + "x" +
                                std::to_string(shape.second) + "]");
        }
    }
    params_.require_finite();

    auto at = [&](const std::string& n) { return params_.index_of(n); };
    ix_.embed_cond_w = at("embed.cond.w");
    ix_.embed_cond_b = at("embed.cond.b");
    ix_.embed_clean_w = at("embed.clean.w");
    ix_.embed_clean_b = at("embed.clean.b");
    ix_.embed_noisy_w = at("embed.noisy.w");
    ix_.embed_noisy_b = at("embed.noisy.b");
    ix_.null_cond = at("null_cond");
    ix_.pos_table = at("pos_table");
    ix_.region_cond = at("region.cond");
    ix_.region_clean = at("region.clean");
    ix_.temb_w = at("temb.w");
    ix_.temb_b = at("temb.b");
    for (int k = 0; k < cfg_.n_blocks; ++k) {
        const std::string p = "block" + std::to_string(k) + ".";
        BlockIx b;
        b.ln1g = at(p + "ln1.g");
        b.ln1b = at(p + "ln1.b");
        b.wq = at(p + "attn.wq");
        b.wk = at(p + "attn.wk");
        b.wv = at(p + "attn.wv");
        b.wo = at(p + "attn.wo");
        b.ln2g = at(p + "ln2.g");
        b.ln2b = at(p + "ln2.b");
        b.w1 = at(p + "ff.w1");
        b.b1 = at(p + "ff.b1");
        b.w2 = at(p + "ff.w2");
        b.b2 = at(p + "ff.b2");
        ix_.blocks.push_back(b);
    }
    ix_.final_g = at("final_ln.g");
    ix_.final_b = at("final_ln.b");
    ix_.head_w = at("head.w");
    ix_.head_b = at("head.b");
}

Matrix Denoiser::timestep_embedding(int t) const {
    if (t < 0) throw ContractError("timestep_embedding: t must be >= 0");
    const int half = cfg_.d_model / 2;
    Matrix e(1, cfg_.d_model);
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        e.data[2 * i] = std::sin(t * freq);
        e.data[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

void Denoiser::validate_input(const DenoiserInput& in) const {
    if (in.cond == nullptr) throw ContractError("denoiser: input.cond is required");
    if (!in.cond->is_null) {
        if (in.cond->tokens.rows != cfg_.cl || in.cond->tokens.cols != cfg_.d_token) {
            throw ContractError("denoiser: cond tokens are " + shape_str(in.cond->tokens) +
                                ", expected [" + std::to_string(cfg_.cl) + "x" +
                                std::to_string(cfg_.d_token) + "]");
        }
    }
    const int v = in.clean_visible.rows;
    if (v > 0 && in.clean_visible.cols != cfg_.d_token) {
        throw ContractError("denoiser: clean_visible width " +
                            std::to_string(in.clean_visible.cols) + " != d_token");
    }
    if (v > cfg_.l) throw ContractError("denoiser: clean_visible longer than l");
    const int n = in.noisy.rows;
    if (n < 1 || in.noisy.cols != cfg_.d_token) {
        throw ContractError("denoiser: noisy must be [>=1 x d_token], got " + shape_str(in.noisy));
    }
    if (in.noisy_pos_offset < 0 || in.noisy_pos_offset + n > cfg_.l) {
        throw ContractError("denoiser: noisy rows at offset " +
                            std::to_string(in.noisy_pos_offset) + " overflow l");
    }
    if (in.block_sizes.empty() || in.block_sizes.size() != in.t.size()) {
        throw ContractError("denoiser: block_sizes and t must be non-empty and equal length");
    }
    int total = 0;
    for (int b : in.block_sizes) {
        if (b < 1) throw ContractError("denoiser: block sizes must be positive");
        total += b;
    }
    if (total != n) throw ContractError("denoiser: block sizes do not partition the noisy rows");
    for (int t : in.t) {
        if (t < 0 || t > cfg_.T) {
            throw ContractError("denoiser: timestep " + std::to_string(t) + " outside [0," +
                                std::to_string(cfg_.T) + "]");
        }
    }
    if (in.mask == nullptr) throw ContractError("denoiser: input.mask is required");
    if (in.mask->seq != cfg_.cl + v + n || in.mask->cl != cfg_.cl || in.mask->v != v ||
        in.mask->l != n) {
        throw ContractError("denoiser: mask layout (seq=" + std::to_string(in.mask->seq) +
                            ",cl=" + std::to_string(in.mask->cl) + ",v=" + std::to_string(in.mask->v) +
                            ",l=" + std::to_string(in.mask->l) + ") does not match input layout");
    }
}

Tape::Id Denoiser::forward_on_tape(Tape& tape, const DenoiserInput& in, ForwardTrace* trace) const {
    validate_input(in);
    const int v = in.clean_visible.rows;
    const int n = in.noisy.rows;
    const int dh = cfg_.head_dim();

    std::vector<Tape::Id> pid(params_.count());
    for (size_t i = 0; i < params_.count(); ++i) {
        pid[i] = tape.param(params_.values[i], static_cast<int>(i));
    }

    // Condition rows: learned null row or projected tokens, plus position
    // and region signals.
    Tape::Id cond_e;
    if (in.cond->is_null) {
        cond_e = tape.gather_rows(pid[ix_.null_cond], std::vector<int>(cfg_.cl, 0));
    } else {
        cond_e = tape.add_rowvec(tape.matmul(tape.input(in.cond->tokens), pid[ix_.embed_cond_w]),
                                 pid[ix_.embed_cond_b]);
    }
    {
        std::vector<int> idx(cfg_.cl);
        std::iota(idx.begin(), idx.end(), 0);
        cond_e = tape.add(cond_e, tape.gather_rows(pid[ix_.pos_table], idx));
        cond_e = tape.add_rowvec(cond_e, pid[ix_.region_cond]);
    }

    // Clean rows, when any are visible. Clean slot i uses position cl + i.
    Tape::Id clean_e = -1;
    if (v > 0) {
        clean_e = tape.add_rowvec(tape.matmul(tape.input(in.clean_visible), pid[ix_.embed_clean_w]),
                                  pid[ix_.embed_clean_b]);
        std::vector<int> idx(v);
        std::iota(idx.begin(), idx.end(), cfg_.cl);
        clean_e = tape.add(clean_e, tape.gather_rows(pid[ix_.pos_table], idx));
        clean_e = tape.add_rowvec(clean_e, pid[ix_.region_clean]);
    }

    // Noisy rows: token projection, noisy-slot position cl + l + slot, and
    // the per-block timestep signal, which doubles as the region tag.
    Tape::Id noisy_e = tape.add_rowvec(tape.matmul(tape.input(in.noisy), pid[ix_.embed_noisy_w]),
                                       pid[ix_.embed_noisy_b]);
    {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), cfg_.cl + cfg_.l + in.noisy_pos_offset);
        noisy_e = tape.add(noisy_e, tape.gather_rows(pid[ix_.pos_table], idx));
    }
    {
        std::vector<Tape::Id> pieces;
        for (size_t b = 0; b < in.block_sizes.size(); ++b) {
            Tape::Id sine = tape.input(timestep_embedding(in.t[b]));
            Tape::Id proj = tape.add_rowvec(tape.matmul(sine, pid[ix_.temb_w]), pid[ix_.temb_b]);
            pieces.push_back(tape.gather_rows(proj, std::vector<int>(in.block_sizes[b], 0)));
        }
        noisy_e = tape.add(noisy_e, tape.concat_rows(pieces));
    }

    Tape::Id x;
    if (v > 0) {
        x = tape.concat_rows({cond_e, clean_e, noisy_e});
    } else {
        x = tape.concat_rows({cond_e, noisy_e});
    }
    if (trace) trace->embedded = tape.value(x);

    const MaskRef mask = in.mask->ref();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const BlockIx& blk : ix_.blocks) {
        Tape::Id a = tape.layernorm(x, pid[blk.ln1g], pid[blk.ln1b]);
        Tape::Id q = tape.matmul(a, pid[blk.wq]);
        Tape::Id k = tape.matmul(a, pid[blk.wk]);
        Tape::Id val = tape.matmul(a, pid[blk.wv]);
        std::vector<Tape::Id> heads;
        for (int h = 0; h < cfg_.n_heads; ++h) {
            Tape::Id qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
            Tape::Id kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
            Tape::Id vh = tape.slice_cols(val, h * dh, (h + 1) * dh);
            Tape::Id scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_dh);
            Tape::Id probs = tape.softmax_masked(scores, mask);
            heads.push_back(tape.matmul(probs, vh));
        }
        Tape::Id att = tape.matmul(tape.concat_cols(heads), pid[blk.wo]);
        x = tape.add(x, att);
        Tape::Id f = tape.layernorm(x, pid[blk.ln2g], pid[blk.ln2b]);
        f = tape.add_rowvec(tape.matmul(f, pid[blk.w1]), pid[blk.b1]);
        f = tape.gelu(f);
        f = tape.add_rowvec(tape.matmul(f, pid[blk.w2]), pid[blk.b2]);
        x = tape.add(x, f);
        if (trace) trace->block_out.push_back(tape.value(x));
    }

    Tape::Id hn = tape.layernorm(x, pid[ix_.final_g], pid[ix_.final_b]);
    if (trace) trace->final_norm = tape.value(hn);
    Tape::Id noisy_rows = tape.slice_rows(hn, cfg_.cl + v, cfg_.cl + v + n);
    return tape.add_rowvec(tape.matmul(noisy_rows, pid[ix_.head_w]), pid[ix_.head_b]);
}

Matrix Denoiser::forward(const DenoiserInput& in, ForwardTrace* trace) const {
    Tape tape;
    tape.reserve(64 + 48 * static_cast<size_t>(cfg_.n_blocks) + 2 * params_.count());
    const Tape::Id pred = forward_on_tape(tape, in, trace);
    return tape.value(pred);
}

}  // namespace cadiff
