// Denoiser network: parameter layout, timestep encoding, mask-enforced
// isolation between blocks, and gradient correctness on a tiny config.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "cadiff/arplan.hpp"
#include "cadiff/causal_mask.hpp"
#include "cadiff/denoiser.hpp"
#include "cadiff/diffusion.hpp"
#include "cadiff/error.hpp"
#include "cadiff/matrix.hpp"
#include "cadiff/rng.hpp"

using namespace cadiff;

namespace {

DenoiserConfig small_cfg() {
    DenoiserConfig cfg;
    cfg.d_token = 4;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_blocks = 3;
    cfg.l = 7;
    cfg.cl = 2;
    cfg.T = 20;
    return cfg;
}

struct TrainLayout {
    ArPlan plan;
    AttnMask mask;
    ConditionSequence cond;
    DenoiserInput in;
};

// Training-shaped input for the partial variant: condition, visible clean
// prefix, all l noisy rows.
TrainLayout make_layout(const DenoiserConfig& cfg, const ArPlan& plan, Rng& rng) {
    TrainLayout lay{plan, build_mask(plan, cfg.cl, MaskVariant::partial), {}, {}};
    lay.cond.tokens = Matrix::gaussian(cfg.cl, cfg.d_token, rng);
    lay.cond.is_null = false;
    const int v = cfg.l - plan.sizes.back();
    lay.in.cond = &lay.cond;
    lay.in.clean_visible = Matrix::gaussian(v, cfg.d_token, rng);
    lay.in.noisy = Matrix::gaussian(cfg.l, cfg.d_token, rng);
    lay.in.noisy_pos_offset = 0;
    lay.in.block_sizes = plan.sizes;
    for (int b = 0; b < plan.steps(); ++b)
        lay.in.t.push_back(1 + static_cast<int>(rng.below(cfg.T)));
    lay.in.mask = &lay.mask;
    return lay;
}

size_t closed_form_entries(const DenoiserConfig& cfg) {
    const size_t dm = cfg.d_model, dt = cfg.d_token, df = cfg.ff_dim();
    size_t n = 0;
    n += 3 * (dt * dm + dm);              // per-region input projections
    n += dm;                              // learned null condition
    n += (cfg.cl + 2 * cfg.l) * dm;       // positional table
    n += 2 * dm;                          // region tags (condition, clean)
    n += dm * dm + dm;                    // timestep projection
    n += cfg.n_blocks * (4 * dm * dm + 5 * dm + 2 * dm * df + df);
    n += 2 * dm;                          // final norm
    n += dm * dt + dt;                    // output head
    return n;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("config validation") {
    DenoiserConfig cfg = small_cfg();
    cfg.validate();
    cfg.n_heads = 3;  // 16 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.l = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init is deterministic per seed") {
    const DenoiserConfig cfg = small_cfg();
    const ParamStore a = init_params(cfg, 11);
    const ParamStore b = init_params(cfg, 11);
    REQUIRE(a.count() == b.count());
    for (size_t i = 0; i < a.count(); ++i) {
        CHECK(a.names[i] == b.names[i]);
        CHECK(a.values[i].data == b.values[i].data);
    }
    const ParamStore c = init_params(cfg, 12);
    bool any_diff = false;
    for (size_t i = 0; i < a.count(); ++i) any_diff |= (a.values[i].data != c.values[i].data);
    CHECK(any_diff);
}

TEST_CASE("init fills gains with one, biases with zero, weights near zero") {
    const DenoiserConfig cfg = small_cfg();
    const ParamStore p = init_params(cfg, 3);
    for (size_t i = 0; i < p.count(); ++i) {
        const std::string& name = p.names[i];
        if (name.ends_with(".g")) {
            for (double x : p.values[i].data) CHECK(x == 1.0);
        } else if (name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2")) {
            for (double x : p.values[i].data) CHECK(x == 0.0);
        } else if (name.ends_with(".w") || name == "pos_table" || name == "null_cond") {
            for (double x : p.values[i].data) CHECK(std::abs(x) < 0.2);  // 10 sigma
        }
    }
}

TEST_CASE("parameter count matches the closed-form formula") {
    for (const DenoiserConfig& cfg : {small_cfg(), DenoiserConfig{}}) {
        const ParamStore p = init_params(cfg, 1);
        CHECK(p.total_entries() == closed_form_entries(cfg));
    }
}

TEST_CASE("timestep encoding at t=0 is zero-phase") {
    const Denoiser den = Denoiser::init(small_cfg(), 5);
    const Matrix e = den.timestep_embedding(0);
    REQUIRE(e.cols == 16);
    for (int i = 0; i < e.cols / 2; ++i) {
        CHECK(e.data[2 * i] == 0.0);      // sin
        CHECK(e.data[2 * i + 1] == 1.0);  // cos
    }
}

TEST_CASE("timestep encodings are pairwise distinct over [0, T]") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 5);
    std::vector<Matrix> encs;
    for (int t = 0; t <= cfg.T; ++t) encs.push_back(den.timestep_embedding(t));
    for (size_t a = 0; a < encs.size(); ++a) {
        for (size_t b = a + 1; b < encs.size(); ++b) {
            double max_abs = 0.0;
            for (int i = 0; i < encs[a].cols; ++i)
                max_abs = std::max(max_abs, std::abs(encs[a].data[i] - encs[b].data[i]));
            CHECK(max_abs > 1e-9);
        }
    }
}

TEST_CASE("timestep encoding norm is bounded by sqrt(d_model)") {
    const Denoiser den = Denoiser::init(small_cfg(), 5);
    for (int t : {0, 1, 7, 20}) {
        CHECK(frobenius_norm(den.timestep_embedding(t)) <= std::sqrt(16.0) + 1e-12);
    }
    CHECK_THROWS_AS(den.timestep_embedding(-1), ContractError);
}

TEST_CASE("forward output shape is noisy-rows x d_token") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 7);
    Rng rng(42);
    const TrainLayout lay = make_layout(cfg, plan_from_sizes({2, 2, 3}), rng);
    const Matrix out = den.forward(lay.in);
    CHECK(out.rows == cfg.l);
    CHECK(out.cols == cfg.d_token);
    out.require_finite("denoiser output");
}

TEST_CASE("forward is deterministic") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 7);
    Rng rng(43);
    const TrainLayout lay = make_layout(cfg, plan_from_sizes({3, 4}), rng);
    const Matrix a = den.forward(lay.in);
    const Matrix b = den.forward(lay.in);
    CHECK(a.data == b.data);
}

TEST_CASE("zeroing another noisy block leaves first-layer attention rows unchanged") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 7);
    Rng rng(44);
    TrainLayout lay = make_layout(cfg, plan_from_sizes({2, 2, 3}), rng);

    ForwardTrace base;
    (void)den.forward(lay.in, &base);

    // Zero noisy block 2 (rows 4..6); block 0 (rows 0..1) must not move.
    TrainLayout mod = lay;
    mod.in.mask = &mod.mask;
    mod.in.cond = &mod.cond;
    for (int r = 4; r < 7; ++r)
        for (int c = 0; c < cfg.d_token; ++c) mod.in.noisy.at(r, c) = 0.0;
    ForwardTrace alt;
    (void)den.forward(mod.in, &alt);

    const int row0 = cfg.cl + lay.mask.v;  // first noisy row in the sequence
    for (int r = row0; r < row0 + 2; ++r) {
        for (int c = 0; c < cfg.d_model; ++c) {
            CHECK(base.block_out[0].at(r, c) == alt.block_out[0].at(r, c));
        }
    }
}

TEST_CASE("clean-row hidden states ignore noisy tokens at every layer") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 7);
    Rng rng(45);
    TrainLayout lay = make_layout(cfg, plan_from_sizes({2, 2, 3}), rng);

    ForwardTrace base;
    (void)den.forward(lay.in, &base);

    TrainLayout mod = lay;
    mod.in.mask = &mod.mask;
    mod.in.cond = &mod.cond;
    for (double& x : mod.in.noisy.data) x += 3.5;
    ForwardTrace alt;
    (void)den.forward(mod.in, &alt);

    const int clean_end = cfg.cl + lay.mask.v;
    for (size_t layer = 0; layer < base.block_out.size(); ++layer) {
        for (int r = 0; r < clean_end; ++r) {
            for (int c = 0; c < cfg.d_model; ++c) {
                CHECK(base.block_out[layer].at(r, c) == alt.block_out[layer].at(r, c));
            }
        }
    }
}

TEST_CASE("end-to-end non-leakage across a random plan") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 8);
    Rng rng(46);
    const ArPlan plan = plan_from_sizes({1, 3, 2, 1});
    TrainLayout lay = make_layout(cfg, plan, rng);
    const Matrix base = den.forward(lay.in);
    const int v = lay.mask.v;

    for (int j = 0; j < plan.steps(); ++j) {
        // Perturb every other noisy block and every clean block >= j; the
        // prediction rows of block j must not change a bit.
        TrainLayout mod = lay;
        mod.in.mask = &mod.mask;
        mod.in.cond = &mod.cond;
        for (int b = 0; b < plan.steps(); ++b) {
            if (b == j) continue;
            for (int r = plan.cumsum[b]; r < plan.cumsum[b + 1]; ++r)
                for (int c = 0; c < cfg.d_token; ++c) mod.in.noisy.at(r, c) += 7.0 + b;
        }
        for (int r = plan.cumsum[j]; r < v; ++r)
            for (int c = 0; c < cfg.d_token; ++c) mod.in.clean_visible.at(r, c) -= 4.25;
        const Matrix out = den.forward(mod.in);
        for (int r = plan.cumsum[j]; r < plan.cumsum[j + 1]; ++r) {
            for (int c = 0; c < cfg.d_token; ++c) {
                INFO("block ", j, " row ", r);
                CHECK(out.at(r, c) == base.at(r, c));
            }
        }
    }
}

TEST_CASE("predictions respond to the condition") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 9);
    Rng rng(47);
    TrainLayout lay = make_layout(cfg, plan_from_sizes({2, 2, 3}), rng);
    const Matrix base = den.forward(lay.in);

    TrainLayout mod = lay;
    mod.in.mask = &mod.mask;
    mod.cond.tokens = Matrix::gaussian(cfg.cl, cfg.d_token, rng, 2.0);
    mod.in.cond = &mod.cond;
    const Matrix out = den.forward(mod.in);
    double delta = 0.0;
    for (size_t i = 0; i < out.size(); ++i) delta = std::max(delta, std::abs(out.data[i] - base.data[i]));
    CHECK(delta > 0.0);
}

TEST_CASE("null condition uses the learned token and still runs") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 10);
    Rng rng(48);
    TrainLayout lay = make_layout(cfg, plan_from_sizes({3, 4}), rng);
    const Matrix with_cond = den.forward(lay.in);

    TrainLayout nul = lay;
    nul.in.mask = &nul.mask;
    nul.cond.tokens = Matrix();
    nul.cond.is_null = true;
    nul.in.cond = &nul.cond;
    const Matrix without = den.forward(nul.in);
    CHECK(without.rows == cfg.l);
    without.require_finite("null-cond output");
    bool differs = false;
    for (size_t i = 0; i < without.size(); ++i) differs |= (without.data[i] != with_cond.data[i]);
    CHECK(differs);
}

TEST_CASE("ar-step layout predicts a single block") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 12);
    Rng rng(49);
    const ArPlan plan = plan_from_sizes({2, 2, 3});
    const int step = 1;
    const AttnMask mask = mask_for_ar_step(plan, step, cfg.cl);
    ConditionSequence cond{Matrix::gaussian(cfg.cl, cfg.d_token, rng), false};

    DenoiserInput in;
    in.cond = &cond;
    in.clean_visible = Matrix::gaussian(plan.cumsum[step], cfg.d_token, rng);
    in.noisy = Matrix::gaussian(plan.sizes[step], cfg.d_token, rng);
    in.noisy_pos_offset = plan.cumsum[step];
    in.block_sizes = {plan.sizes[step]};
    in.t = {5};
    in.mask = &mask;
    const Matrix out = den.forward(in);
    CHECK(out.rows == plan.sizes[step]);
    CHECK(out.cols == cfg.d_token);
}

TEST_CASE("forward validates its input") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 13);
    Rng rng(50);
    TrainLayout lay = make_layout(cfg, plan_from_sizes({2, 2, 3}), rng);

    SUBCASE("mask from a different plan") {
        const AttnMask other = build_mask(plan_from_sizes({3, 4}), cfg.cl, MaskVariant::partial);
        lay.in.mask = &other;
        CHECK_THROWS_AS(den.forward(lay.in), ContractError);
    }
    SUBCASE("timestep out of range") {
        lay.in.t.assign(lay.in.t.size(), cfg.T + 1);
        CHECK_THROWS_AS(den.forward(lay.in), ContractError);
    }
    SUBCASE("block sizes do not partition the noisy rows") {
        lay.in.block_sizes = {4, 4};
        CHECK_THROWS_AS(den.forward(lay.in), ContractError);
    }
    SUBCASE("wrong token width") {
        lay.in.noisy = Matrix::gaussian(cfg.l, cfg.d_token + 1, rng);
        CHECK_THROWS_AS(den.forward(lay.in), ContractError);
    }
}

TEST_CASE("tape forward matches the eager forward") {
    const DenoiserConfig cfg = small_cfg();
    const Denoiser den = Denoiser::init(cfg, 14);
    Rng rng(51);
    const TrainLayout lay = make_layout(cfg, plan_from_sizes({2, 5}), rng);
    const Matrix eager = den.forward(lay.in);
    Tape tape;
    const Tape::Id pred = den.forward_on_tape(tape, lay.in);
    const Matrix& taped = tape.value(pred);
    REQUIRE(taped.same_shape(eager));
    for (size_t i = 0; i < eager.size(); ++i) CHECK(taped.data[i] == eager.data[i]);
}

TEST_CASE("tiny-config gradients pass the finite-difference oracle") {
    DenoiserConfig tiny;
    tiny.d_model = 8;
    tiny.n_blocks = 2;
    tiny.n_heads = 2;
    tiny.l = 4;
    tiny.cl = 2;
    tiny.d_token = 4;
    tiny.T = 10;
    const double err = denoiser_grad_check(tiny, 21, 1e-5);
    CHECK(err < 1e-5);
}

}  // TEST_SUITE
