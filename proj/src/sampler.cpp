#include "cadiff/sampler.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace cadiff {

using nlohmann::json;

void SampleConfig::validate(int T) const {
    if (S_T < 1 || S_T > T) {
        throw ConfigError("sample.S_T: must be in [1," + std::to_string(T) + "]");
    }
    if (!(w >= 0.0)) throw ConfigError("sample.w: must be >= 0");
}

Matrix DenoiserPredictor::predict(const ConditionSequence& cond, const Matrix& clean_visible,
                                  const Matrix& noisy, int noisy_pos_offset,
                                  const std::vector<int>& block_sizes, const std::vector<int>& t,
                                  const AttnMask& mask) const {
    DenoiserInput in;
    in.cond = &cond;
    in.clean_visible = clean_visible;
    in.noisy = noisy;
    in.noisy_pos_offset = noisy_pos_offset;
    in.block_sizes = block_sizes;
    in.t = t;
    in.mask = &mask;
    return den_->forward(in);
}

Matrix guide(const Matrix& pred_cond, const Matrix& pred_uncond, double w) {
    if (!pred_cond.same_shape(pred_uncond)) {
        throw ShapeError("guide: branch shapes differ, " + shape_str(pred_cond) + " vs " +
                         shape_str(pred_uncond));
    }
    if (w == 0.0) return pred_uncond;
    if (w == 1.0) return pred_cond;
    Matrix out(pred_cond.rows, pred_cond.cols);
    for (size_t i = 0; i < out.size(); ++i) {
        out.data[i] = pred_uncond.data[i] + w * (pred_cond.data[i] - pred_uncond.data[i]);
    }
    return out;
}

Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, int t, int t_prev,
                 const NoiseSchedule& s) {
    if (!x_t.same_shape(x0_hat)) {
        throw ShapeError("ddim_step: x_t " + shape_str(x_t) + " vs x0_hat " + shape_str(x0_hat));
    }
    if (t_prev < 0 || t <= t_prev) {
        throw ContractError("ddim_step: requires t > t_prev >= 0, got t=" + std::to_string(t) +
                            " t_prev=" + std::to_string(t_prev));
    }
    if (t_prev == 0) return x0_hat;
    const double ab_t = alpha_bar(s, t);
    const double ab_p = alpha_bar(s, t_prev);
    const double sq_t = std::sqrt(ab_t);
    const double sq_1t = std::sqrt(1.0 - ab_t);
    const double sq_p = std::sqrt(ab_p);
    const double sq_1p = std::sqrt(1.0 - ab_p);
    Matrix out(x_t.rows, x_t.cols);
    for (size_t i = 0; i < out.size(); ++i) {
        const double eps = (x_t.data[i] - sq_t * x0_hat.data[i]) / sq_1t;
        out.data[i] = sq_p * x0_hat.data[i] + sq_1p * eps;
    }
    return out;
}

namespace {

Matrix predict_guided(const X0Predictor& pred, const ConditionSequence& cond,
                      const Matrix& clean_visible, const Matrix& noisy, int noisy_pos_offset,
                      const std::vector<int>& block_sizes, const std::vector<int>& t,
                      const AttnMask& mask, double w) {
    const ConditionSequence null_cond{Matrix(), true};
    if (cond.is_null || w == 0.0) {
        return pred.predict(null_cond, clean_visible, noisy, noisy_pos_offset, block_sizes, t,
                            mask);
    }
    const Matrix pc =
        pred.predict(cond, clean_visible, noisy, noisy_pos_offset, block_sizes, t, mask);
    if (w == 1.0) return pc;
    const Matrix pu =
        pred.predict(null_cond, clean_visible, noisy, noisy_pos_offset, block_sizes, t, mask);
    return guide(pc, pu, w);
}

}  // namespace

LatentSequence sample_ar_with_block_rngs(const X0Predictor& pred, const NoiseSchedule& s,
                                         const ConditionSequence& cond, const ArPlan& plan,
                                         const SampleConfig& scfg,
                                         const BlockRngProvider& block_rng) {
    scfg.validate(s.T);
    if (plan.l() != pred.l()) {
        throw ContractError("sampling: plan covers " + std::to_string(plan.l()) +
                            " tokens, model expects " + std::to_string(pred.l()));
    }
    const std::vector<int> ladder = subsample(s, scfg.S_T);
    const int d = pred.d_token();
    Matrix out(plan.l(), d);

    for (int step = 0; step < plan.steps(); ++step) {
        const int done = plan.cumsum[step];
        const int bs = plan.sizes[step];
        const AttnMask mask = mask_for_ar_step(plan, step, pred.cl());
        const Matrix clean_visible = done > 0 ? slice_rows(out, 0, done) : Matrix(0, d);
        Rng rng = block_rng(step);
        Matrix x = Matrix::gaussian(bs, d, rng);
        for (size_t k = 0; k < ladder.size(); ++k) {
            const int t_cur = ladder[k];
            const int t_prev = (k + 1 < ladder.size()) ? ladder[k + 1] : 0;
            const Matrix x0_hat = predict_guided(pred, cond, clean_visible, x, done, {bs},
                                                 {t_cur}, mask, scfg.w);
            x = ddim_step(x, x0_hat, t_cur, t_prev, s);
        }
        for (int r = 0; r < bs; ++r) {
            for (int c = 0; c < d; ++c) out.at(done + r, c) = x.at(r, c);
        }
    }
    out.require_finite("sampled tokens");
    return {std::move(out)};
}

LatentSequence sample_ar(const X0Predictor& pred, const NoiseSchedule& s,
                         const ConditionSequence& cond, const ArPlan& plan,
                         const SampleConfig& scfg, const Rng& rng) {
    return sample_ar_with_block_rngs(
        pred, s, cond, plan, scfg,
        [&rng](int step) { return rng.child("block", static_cast<uint64_t>(step)); });
}

LatentSequence sample_single(const X0Predictor& pred, const NoiseSchedule& s,
                             const ConditionSequence& cond, const SampleConfig& scfg,
                             const Rng& rng) {
    return sample_ar(pred, s, cond, plan_from_sizes({pred.l()}), scfg, rng);
}

void write_samples(const std::string& path, const std::vector<SampleRecord>& samples,
                   const std::string& config_echo_json) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("samples: cannot open " + path + " for writing");
    out << "{\"config\":" << config_echo_json << "}\n";
    for (const SampleRecord& rec : samples) {
        json tokens = json::array();
        for (int r = 0; r < rec.tokens.rows; ++r) {
            json row = json::array();
            for (int c = 0; c < rec.tokens.cols; ++c) row.push_back(rec.tokens.at(r, c));
            tokens.push_back(std::move(row));
        }
        json line;
        line["tokens"] = std::move(tokens);
        if (rec.cond_mode >= 0) {
            line["cond_mode"] = rec.cond_mode;
        } else {
            line["cond_mode"] = nullptr;
        }
        line["seed"] = rec.seed;
        out << line.dump() << "\n";
    }
    if (!out) throw IoError("samples: write failed on " + path);
}

std::vector<SampleRecord> read_samples(const std::string& path, std::string* config_echo_json) {
    std::ifstream in(path);
    if (!in) throw IoError("samples: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("samples: missing header in " + path);
    try {
        const json header = json::parse(line);
        if (config_echo_json) *config_echo_json = header.at("config").dump();
    } catch (const json::exception& e) {
        throw IoError("samples: malformed header: " + std::string(e.what()));
    }
    std::vector<SampleRecord> out;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("samples: malformed record at line " + std::to_string(line_no) + ": " +
                          e.what());
        }
        SampleRecord sr;
        try {
            const json& tokens = rec.at("tokens");
            if (!tokens.is_array() || tokens.empty() || !tokens[0].is_array()) {
                throw IoError("samples: record at line " + std::to_string(line_no) +
                              " has no token matrix");
            }
            Matrix m(static_cast<int>(tokens.size()), static_cast<int>(tokens[0].size()));
            for (int r = 0; r < m.rows; ++r) {
                if (static_cast<int>(tokens[r].size()) != m.cols) {
                    throw IoError("samples: ragged token matrix at line " +
                                  std::to_string(line_no));
                }
                for (int c = 0; c < m.cols; ++c) m.at(r, c) = tokens[r][c].get<double>();
            }
            sr.tokens = std::move(m);
            const json& cm = rec.at("cond_mode");
            sr.cond_mode = cm.is_null() ? -1 : cm.get<int>();
            sr.seed = rec.at("seed").get<uint64_t>();
        } catch (const json::exception& e) {
            throw IoError("samples: malformed record at line " + std::to_string(line_no) + ": " +
                          e.what());
        }
        out.push_back(std::move(sr));
    }
    return out;
}

}  // namespace cadiff
