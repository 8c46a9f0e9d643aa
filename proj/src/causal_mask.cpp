#include "cadiff/causal_mask.hpp"

#include <string>

namespace cadiff {

AttnMask build_mask(const ArPlan& plan, int cl, MaskVariant variant) {
    if (cl < 1) throw ConfigError("mask.cl: must be >= 1, got " + std::to_string(cl));
    const int l = plan.l();
    const int S = plan.steps();
    const std::vector<int>& cm = plan.cumsum;

    const int v = (variant == MaskVariant::partial) ? l - plan.sizes.back() : l;
    const int ctx = cl + v;
    const int seq = ctx + l;

    AttnMask m;
    m.seq = seq;
    m.cl = cl;
    m.v = v;
    m.l = l;
    m.grid.assign(static_cast<size_t>(seq) * seq, 1);
    auto set_attend = [&](int r, int c) { m.grid[static_cast<size_t>(r) * seq + c] = 0; };

    // Condition columns are visible to every row.
    for (int r = 0; r < seq; ++r) {
        for (int c = 0; c < cl; ++c) set_attend(r, c);
    }

    // T1, clean-clean: block i attends blocks 0..i. The partial variant has
    // clean blocks 0..S-2; full extends the same loop to block S-1.
    const int clean_blocks = (variant == MaskVariant::partial) ? S - 1 : S;
    for (int i = 0; i < clean_blocks; ++i) {
        for (int r = cm[i]; r < cm[i + 1]; ++r) {
            for (int c = 0; c < cm[i + 1]; ++c) set_attend(cl + r, cl + c);
        }
    }

    // T2, noisy-clean: noisy block i+1 attends clean tokens [0, cm[i+1]).
    for (int i = 0; i + 1 < S; ++i) {
        for (int r = cm[i + 1]; r < cm[i + 2]; ++r) {
            for (int c = 0; c < cm[i + 1]; ++c) set_attend(ctx + r, cl + c);
        }
    }

    // T3, noisy-noisy: block-diagonal.
    for (int i = 0; i < S; ++i) {
        for (int r = cm[i]; r < cm[i + 1]; ++r) {
            for (int c = cm[i]; c < cm[i + 1]; ++c) set_attend(ctx + r, ctx + c);
        }
    }
    return m;
}

namespace {

// Token classification used only by the verifier. Positions are classified
// by scanning the plan boundaries directly rather than reusing any of the
// builder's loop bounds.
struct TokenClass {
    enum Kind { cond, clean, noisy } kind = cond;
    int block = -1;
};

TokenClass classify(int pos, const ArPlan& plan, int cl, int v) {
    TokenClass t;
    if (pos < cl) {
        t.kind = TokenClass::cond;
        return t;
    }
    int token;
    if (pos < cl + v) {
        t.kind = TokenClass::clean;
        token = pos - cl;
    } else {
        t.kind = TokenClass::noisy;
        token = pos - cl - v;
    }
    for (int b = 0; b < plan.steps(); ++b) {
        if (token >= plan.cumsum[b] && token < plan.cumsum[b + 1]) {
            t.block = b;
            return t;
        }
    }
    throw ContractError("verify_mask: token position escapes every block");
}

bool rule_allows(const TokenClass& row, const TokenClass& col) {
    if (col.kind == TokenClass::cond) return true;
    switch (row.kind) {
        case TokenClass::cond:
            return false;
        case TokenClass::clean:
            return col.kind == TokenClass::clean && col.block <= row.block;
        case TokenClass::noisy:
            if (col.kind == TokenClass::clean) return col.block < row.block;
            return col.kind == TokenClass::noisy && col.block == row.block;
    }
    return false;
}

}  // namespace

std::vector<MaskViolation> verify_mask(const AttnMask& mask, const ArPlan& plan, int cl,
                                       MaskVariant variant) {
    std::vector<MaskViolation> report;
    const int l = plan.cumsum.back();
    const int want_v = (variant == MaskVariant::partial) ? l - plan.sizes.back() : l;
    if (mask.cl != cl || mask.v != want_v || mask.l != l || mask.seq != cl + want_v + l ||
        mask.grid.size() != static_cast<size_t>(mask.seq) * mask.seq) {
        report.push_back({-1, -1, 0, 1});  // layout mismatch sentinel
        return report;
    }
    for (int r = 0; r < mask.seq; ++r) {
        const TokenClass row = classify(r, plan, cl, want_v);
        for (int c = 0; c < mask.seq; ++c) {
            const TokenClass col = classify(c, plan, cl, want_v);
            const uint8_t expected = rule_allows(row, col) ? 0 : 1;
            const uint8_t actual = mask.grid[static_cast<size_t>(r) * mask.seq + c];
            if (expected != actual) report.push_back({r, c, expected, actual});
        }
    }
    return report;
}

AttnMask mask_for_ar_step(const ArPlan& plan, int step, int cl) {
    if (step < 0 || step >= plan.steps()) {
        throw ContractError("mask_for_ar_step: step " + std::to_string(step) + " outside plan of " +
                            std::to_string(plan.steps()) + " steps");
    }
    std::vector<int> truncated(plan.sizes.begin(), plan.sizes.begin() + step + 1);
    const ArPlan sub = plan_from_sizes(std::move(truncated));
    const AttnMask training = build_mask(sub, cl, MaskVariant::partial);

    // Keep condition + all clean rows, plus the rows of noisy block `step`.
    const int done = plan.cumsum[step];           // tokens finalized so far
    const int n = plan.sizes[step];               // tokens being denoised
    const int t_ctx = cl + done;                  // ctx of the truncated mask
    std::vector<int> keep;
    keep.reserve(t_ctx + n);
    for (int i = 0; i < t_ctx; ++i) keep.push_back(i);
    for (int i = 0; i < n; ++i) keep.push_back(t_ctx + done + i);

    AttnMask m;
    m.seq = static_cast<int>(keep.size());
    m.cl = cl;
    m.v = done;
    m.l = n;
    m.grid.resize(static_cast<size_t>(m.seq) * m.seq);
    for (int r = 0; r < m.seq; ++r) {
        for (int c = 0; c < m.seq; ++c) {
            m.grid[static_cast<size_t>(r) * m.seq + c] =
                training.grid[static_cast<size_t>(keep[r]) * training.seq + keep[c]];
        }
    }
    return m;
}

}  // namespace cadiff
