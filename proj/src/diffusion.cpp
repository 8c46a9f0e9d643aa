#include "cadiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cadiff/causal_mask.hpp"
#include "cadiff/config.hpp"
#include "cadiff/threadpool.hpp"

namespace cadiff {

using nlohmann::json;

void TrainConfig::validate() const {
    if (T < 1) throw ConfigError("train.T: must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma: must be in (0,1]");
    if (!(cfg_dropout >= 0.0 && cfg_dropout <= 1.0)) {
        throw ConfigError("train.cfg_dropout: must be in [0,1]");
    }
    if (!(lr > 0.0)) throw ConfigError("train.lr: must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1: must be in [0,1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2: must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps: must be positive");
    if (epochs < 0) throw ConfigError("train.epochs: must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    (void)linear_schedule(T, beta_start, beta_end);
}

LatentSequence forward_diffuse(const LatentSequence& x0, int t, const NoiseSchedule& s,
                               const Matrix& noise) {
    if (!x0.tokens.same_shape(noise)) {
        throw ContractError("forward_diffuse: noise " + shape_str(noise) + " does not match x0 " +
                            shape_str(x0.tokens));
    }
    if (t == 0) return x0;
    const double ab = alpha_bar(s, t);
    const double c0 = std::sqrt(ab);
    const double cn = std::sqrt(1.0 - ab);
    Matrix out(x0.tokens.rows, x0.tokens.cols);
    for (size_t i = 0; i < out.size(); ++i) {
        out.data[i] = c0 * x0.tokens.data[i] + cn * noise.data[i];
    }
    return {std::move(out)};
}

ConditionSequence cfg_dropout(const ConditionSequence& cond, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("train.cfg_dropout: must be in [0,1]");
    if (rng.uniform01() < p) return ConditionSequence{cond.tokens, true};
    return cond;
}

namespace {

std::string plan_str(const ArPlan& plan) {
    std::string s = "[";
    for (size_t i = 0; i < plan.sizes.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(plan.sizes[i]);
    }
    return s + "]";
}

}  // namespace

double sample_loss_grads(const Denoiser& den, const ConditionSequence& cond, const Matrix& x0,
                         const StepDraw& draw, const NoiseSchedule& s, MaskVariant variant,
                         std::vector<Matrix>* grads) {
    const DenoiserConfig& cfg = den.config();
    if (x0.rows != cfg.l || x0.cols != cfg.d_token) {
        throw ContractError("training: x0 is " + shape_str(x0) + ", expected [" +
                            std::to_string(cfg.l) + "x" + std::to_string(cfg.d_token) + "]");
    }
    if (draw.plan.l() != cfg.l) throw ContractError("training: plan does not partition l tokens");
    if (draw.t.size() != draw.plan.sizes.size()) {
        throw ContractError("training: draw.t must hold one timestep per block");
    }
    if (draw.loss_block < -1 || draw.loss_block >= draw.plan.steps()) {
        throw ContractError("training: loss_block outside the plan");
    }

    LatentSequence x0_seq{x0};
    Matrix noisy(cfg.l, cfg.d_token);
    for (int b = 0; b < draw.plan.steps(); ++b) {
        const int r0 = draw.plan.cumsum[b];
        const int r1 = draw.plan.cumsum[b + 1];
        const LatentSequence blk =
            forward_diffuse({slice_rows(x0, r0, r1)}, draw.t[b], s, slice_rows(draw.noise, r0, r1));
        for (int r = r0; r < r1; ++r) {
            for (int c = 0; c < cfg.d_token; ++c) noisy.at(r, c) = blk.tokens.at(r - r0, c);
        }
    }

    const int v = (variant == MaskVariant::partial) ? cfg.l - draw.plan.sizes.back() : cfg.l;
    const AttnMask mask = build_mask(draw.plan, cfg.cl, variant);

    DenoiserInput in;
    in.cond = &cond;
    in.clean_visible = slice_rows(x0, 0, v);
    in.noisy = std::move(noisy);
    in.noisy_pos_offset = 0;
    in.block_sizes = draw.plan.sizes;
    in.t = draw.t;
    in.mask = &mask;

    Tape tape;
    tape.reserve(96 + 48 * static_cast<size_t>(cfg.n_blocks) + den.params().count());
    const Tape::Id pred = den.forward_on_tape(tape, in);
    const double denom = static_cast<double>(cfg.l) * cfg.d_token;

    Tape::Id loss_id;
    if (draw.loss_block < 0) {
        loss_id = tape.mse(pred, x0, denom);
    } else {
        const int r0 = draw.plan.cumsum[draw.loss_block];
        const int r1 = draw.plan.cumsum[draw.loss_block + 1];
        loss_id = tape.mse(tape.slice_rows(pred, r0, r1), slice_rows(x0, r0, r1), denom);
    }

    const double loss = tape.value(loss_id).data[0];
    if (!std::isfinite(loss)) {
        std::string ts;
        for (size_t i = 0; i < draw.t.size(); ++i) ts += (i ? "," : "") + std::to_string(draw.t[i]);
        throw NumericError("training: non-finite loss (t=[" + ts + "], plan=" +
                           plan_str(draw.plan) + ")");
    }
    if (grads) {
        std::vector<Matrix> g = tape.backward(loss_id, static_cast<int>(den.params().count()));
        if (grads->empty()) {
            *grads = std::move(g);
        } else {
            for (size_t p = 0; p < g.size(); ++p) {
                Matrix& acc = (*grads)[p];
                for (size_t i = 0; i < acc.size(); ++i) acc.data[i] += g[p].data[i];
            }
        }
    }
    return loss;
}

double training_step(const Denoiser& den, std::span<const TrainSample> batch,
                     const NoiseSchedule& s, const TrainConfig& cfg, const Rng& step_rng,
                     std::vector<Matrix>& grads_out, int n_threads, int step_index) {
    if (batch.empty()) throw ContractError("training: empty batch");
    const DenoiserConfig& dcfg = den.config();

    // Samples land on a fixed slot grid by index; each slot accumulates in
    // index order and slots are reduced in slot order, so the result does
    // not depend on the thread count.
    constexpr int kSlots = 8;
    struct Slot {
        std::vector<Matrix> grads;
        double loss = 0.0;
    };
    std::vector<Slot> slots(kSlots);
    std::exception_ptr first_error;
    std::mutex error_mu;

    parallel_for(kSlots, n_threads, [&](int slot) {
        try {
            for (size_t i = slot; i < batch.size(); i += kSlots) {
                const Rng ri = step_rng.child("sample", i);
                StepDraw draw;
                {
                    Rng r = ri.child("plan");
                    draw.plan = generate_ar_steps(dcfg.l, cfg.gamma, r);
                }
                {
                    Rng r = ri.child("t");
                    if (cfg.shared_t) {
                        draw.t.assign(draw.plan.sizes.size(),
                                      static_cast<int>(r.int_in(1, cfg.T)));
                    } else {
                        for (size_t b = 0; b < draw.plan.sizes.size(); ++b) {
                            draw.t.push_back(static_cast<int>(r.int_in(1, cfg.T)));
                        }
                    }
                }
                {
                    Rng r = ri.child("noise");
                    draw.noise = Matrix::gaussian(dcfg.l, dcfg.d_token, r);
                }
                if (cfg.loss_scope == LossScope::current_step) {
                    Rng r = ri.child("scope");
                    draw.loss_block = static_cast<int>(r.below(draw.plan.steps()));
                }
                ConditionSequence cond;
                {
                    Rng r = ri.child("cfg");
                    cond = cfg_dropout(batch[i].cond, cfg.cfg_dropout, r);
                }
                slots[slot].loss +=
                    sample_loss_grads(den, cond, batch[i].x0, draw, s, cfg.variant,
                                      &slots[slot].grads);
            }
        } catch (const Error& e) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) {
                first_error = std::make_exception_ptr(
                    NumericError("training step " + std::to_string(step_index) + ": " + e.what()));
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);

    const auto manifest = param_manifest(dcfg);
    grads_out.clear();
    grads_out.reserve(manifest.size());
    for (const auto& [name, shape] : manifest) {
        grads_out.emplace_back(shape.first, shape.second);
    }
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const Slot& slot : slots) {
        loss += slot.loss;
        if (slot.grads.empty()) continue;
        for (size_t p = 0; p < grads_out.size(); ++p) {
            Matrix& acc = grads_out[p];
            const Matrix& g = slot.grads[p];
            for (size_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
        }
    }
    for (Matrix& g : grads_out) {
        for (double& x : g.data) x *= inv;
    }
    return loss * inv;
}

AdamState make_adam_state(const ParamStore& params) {
    AdamState st;
    st.m.reserve(params.count());
    st.v.reserve(params.count());
    for (const Matrix& p : params.values) {
        st.m.emplace_back(p.rows, p.cols);
        st.v.emplace_back(p.rows, p.cols);
    }
    return st;
}

void adam_update(ParamStore& params, const std::vector<Matrix>& grads, AdamState& state,
                 double lr, double beta1, double beta2, double eps) {
    if (grads.size() != params.count() || state.m.size() != params.count()) {
        throw ContractError("adam: gradient/state count mismatch");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (size_t p = 0; p < params.count(); ++p) {
        Matrix& w = params.values[p];
        const Matrix& g = grads[p];
        if (!w.same_shape(g)) {
            throw ContractError("adam: gradient shape mismatch at " + params.names[p]);
        }
        Matrix& m = state.m[p];
        Matrix& v = state.v[p];
        for (size_t i = 0; i < w.size(); ++i) {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            w.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ----------------------------------------------------------------------------
// Checkpoint IO
// ----------------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "CADIFF1";

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    const auto manifest = param_manifest(c.model);
    json header;
    header["model"] = denoiser_config_to_json(c.model);
    header["train"] = train_config_to_json(c.train);
    header["seed"] = c.seed;
    header["epoch"] = c.epoch;
    json jm = json::array();
    for (const auto& [name, shape] : manifest) {
        jm.push_back({{"name", name}, {"rows", shape.first}, {"cols", shape.second}});
    }
    header["manifest"] = jm;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("checkpoint: cannot open " + tmp + " for writing");
        out << kMagic << "\n" << header.dump() << "\n";
        for (size_t p = 0; p < c.params.count(); ++p) {
            const Matrix& m = c.params.values[p];
            std::vector<float> buf(m.size());
            for (size_t i = 0; i < m.size(); ++i) buf[i] = static_cast<float>(m.data[i]);
            out.write(reinterpret_cast<const char*>(buf.data()),
                      static_cast<std::streamsize>(buf.size() * sizeof(float)));
        }
        if (!out) throw IoError("checkpoint: write failed on " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    std::string magic, header_line;
    if (!std::getline(in, magic) || magic != kMagic) {
        throw IoError("checkpoint: bad magic in " + path);
    }
    if (!std::getline(in, header_line)) throw IoError("checkpoint: missing header in " + path);
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw IoError("checkpoint: malformed header: " + std::string(e.what()));
    }

    Checkpoint c;
    c.model = denoiser_config_from_json(header.at("model"), "model");
    c.train = train_config_from_json(header.at("train"), "train");
    c.seed = header.at("seed").get<uint64_t>();
    c.epoch = header.at("epoch").get<int>();

    const auto manifest = param_manifest(c.model);
    const json& jm = header.at("manifest");
    if (!jm.is_array() || jm.size() != manifest.size()) {
        throw IoError("checkpoint: manifest size does not match model config");
    }
    for (size_t i = 0; i < manifest.size(); ++i) {
        const auto& [name, shape] = manifest[i];
        if (jm[i].at("name").get<std::string>() != name ||
            jm[i].at("rows").get<int>() != shape.first ||
            jm[i].at("cols").get<int>() != shape.second) {
            throw IoError("checkpoint: manifest entry " + std::to_string(i) +
                          " does not match the model config (expected " + name + ")");
        }
    }

    for (const auto& [name, shape] : manifest) {
        const size_t count = static_cast<size_t>(shape.first) * shape.second;
        std::vector<float> buf(count);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (static_cast<size_t>(in.gcount()) != count * sizeof(float)) {
            throw IoError("checkpoint: truncated data for " + name);
        }
        Matrix m(shape.first, shape.second);
        for (size_t i = 0; i < count; ++i) m.data[i] = static_cast<double>(buf[i]);
        c.params.add(name, std::move(m));
    }
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0) {
        throw IoError("checkpoint: trailing bytes after parameter data");
    }
    return c;
}

TrainResult train(const std::vector<TrainSample>& data, const TrainConfig& cfg,
                  const DenoiserConfig& dcfg, uint64_t seed, int n_threads,
                  const std::function<void(const TrainLogEntry&)>& on_log) {
    cfg.validate();
    dcfg.validate();
    if (data.empty()) throw ContractError("train: dataset is empty");
    if (cfg.T != dcfg.T) {
        throw ConfigError("train.T: must equal model.T (timestep embeddings cover [0, model.T])");
    }
    const NoiseSchedule s = cfg.make_schedule();

    const Rng root(seed);
    Denoiser den = Denoiser::init(dcfg, root.derive_seed("init"));
    AdamState adam = make_adam_state(den.params());

    TrainResult result;
    int gstep = 0;
    std::vector<int> order(data.size());
    std::vector<Matrix> grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng sh = root.child("shuffle", static_cast<uint64_t>(epoch));
        for (size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[sh.below(i + 1)]);
        }
        for (size_t b0 = 0; b0 < data.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
            const size_t b1 = std::min(data.size(), b0 + static_cast<size_t>(cfg.batch_size));
            std::vector<TrainSample> batch;
            batch.reserve(b1 - b0);
            for (size_t i = b0; i < b1; ++i) batch.push_back(data[order[i]]);
            const double loss =
                training_step(den, batch, s, cfg, root.child("step", static_cast<uint64_t>(gstep)),
                              grads, n_threads, gstep);
            adam_update(den.params(), grads, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2,
                        cfg.adam_eps);
            result.log.push_back({gstep, epoch, loss});
            if (on_log) on_log(result.log.back());
            ++gstep;
        }
    }
    result.checkpoint =
        Checkpoint{dcfg, cfg, seed, cfg.epochs, std::move(den.params())};
    return result;
}

double denoiser_grad_check(const DenoiserConfig& cfg, uint64_t seed, double eps) {
    cfg.validate();
    const Rng root(seed);
    Denoiser den = Denoiser::init(cfg, root.derive_seed("params"));
    const NoiseSchedule s = linear_schedule(cfg.T, 1e-4, 0.02);

    Rng dr = root.child("draw");
    const ConditionSequence cond{Matrix::gaussian(cfg.cl, cfg.d_token, dr), false};
    const Matrix x0 = Matrix::gaussian(cfg.l, cfg.d_token, dr);
    StepDraw draw;
    draw.plan = generate_ar_steps(cfg.l, 0.5, dr);
    for (int b = 0; b < draw.plan.steps(); ++b) {
        draw.t.push_back(static_cast<int>(dr.int_in(1, cfg.T)));
    }
    draw.noise = Matrix::gaussian(cfg.l, cfg.d_token, dr);

    Matrix noisy(cfg.l, cfg.d_token);
    for (int b = 0; b < draw.plan.steps(); ++b) {
        const int r0 = draw.plan.cumsum[b];
        const int r1 = draw.plan.cumsum[b + 1];
        const LatentSequence blk =
            forward_diffuse({slice_rows(x0, r0, r1)}, draw.t[b], s, slice_rows(draw.noise, r0, r1));
        for (int r = r0; r < r1; ++r) {
            for (int c = 0; c < cfg.d_token; ++c) noisy.at(r, c) = blk.tokens.at(r - r0, c);
        }
    }
    const int v = cfg.l - draw.plan.sizes.back();
    const AttnMask mask = build_mask(draw.plan, cfg.cl, MaskVariant::partial);
    DenoiserInput in;
    in.cond = &cond;
    in.clean_visible = slice_rows(x0, 0, v);
    in.noisy = std::move(noisy);
    in.block_sizes = draw.plan.sizes;
    in.t = draw.t;
    in.mask = &mask;

    // The checked objective is the training loss scaled down by a constant.
    // Central differences carry roundoff of about 1e-16 * |f| / (2 eps); at
    // |f| near 1 that lands above the 1e-8 floor in the relative-error
    // denominator on tiny-gradient entries, so the scale, which gradients
    // inherit exactly, is what makes the comparison meaningful everywhere.
    const double denom = static_cast<double>(cfg.l) * cfg.d_token * 1e4;

    std::vector<Matrix> analytic;
    const auto eval = [&](std::vector<Matrix>* grads) {
        Tape tape;
        tape.reserve(96 + 48 * static_cast<size_t>(cfg.n_blocks) + den.params().count());
        const Tape::Id pred = den.forward_on_tape(tape, in);
        const Tape::Id loss = tape.mse(pred, x0, denom);
        if (grads) *grads = tape.backward(loss, static_cast<int>(den.params().count()));
        return tape.value(loss).data[0];
    };
    eval(&analytic);

    std::vector<Matrix*> ptrs;
    ptrs.reserve(den.params().count());
    for (Matrix& p : den.params().values) ptrs.push_back(&p);
    return grad_check([&eval]() { return eval(nullptr); }, ptrs, analytic, eps);
}

}  // namespace cadiff

