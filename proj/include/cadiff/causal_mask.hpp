#pragma once

#include <cstdint>
#include <vector>

#include "cadiff/arplan.hpp"
#include "cadiff/matrix.hpp"

namespace cadiff {

// ============================================================================
// Generalized causal attention mask over [condition | visible clean | noisy]
// regions. grid uses 0 = attend, 1 = blocked. The partial variant exposes
// clean tokens for every AR step except the last (v = l - sizes.back()); the
// full variant exposes all l clean tokens.
// ============================================================================

enum class MaskVariant { partial, full };

struct AttnMask {
    int seq = 0;  // cl + v + l
    int cl = 0;   // condition rows
    int v = 0;    // visible clean rows
    int l = 0;    // noisy rows
    std::vector<uint8_t> grid;  // seq x seq

    bool blocked(int r, int c) const { return grid[static_cast<size_t>(r) * seq + c] != 0; }
    MaskRef ref() const { return {seq, seq, grid.data()}; }
};

// Builds the mask for a training layout: condition rows, then the visible
// clean blocks, then all noisy blocks.
//   - every row attends all condition columns; condition rows attend nothing
//     else
//   - clean block i attends clean blocks 0..i
//   - noisy block j attends clean blocks 0..j-1 (block 0 sees no clean)
//   - noisy block j attends noisy block j only
//   - clean rows never attend noisy columns
AttnMask build_mask(const ArPlan& plan, int cl, MaskVariant variant);

struct MaskViolation {
    int row = 0;
    int col = 0;
    uint8_t expected = 0;  // what the attention rules demand
    uint8_t actual = 0;    // what the grid holds
};

// Independent checker: classifies every (row, col) pair into its region and
// block from scratch and applies the attention rules above cell by cell,
// plus the v/layout bookkeeping. Returns every disagreeing cell; an empty
// report means the mask is correct. Shares no code with build_mask.
std::vector<MaskViolation> verify_mask(const AttnMask& mask, const ArPlan& plan, int cl,
                                       MaskVariant variant);

// Mask for one AR inference step: condition rows, clean blocks 0..step-1
// (the tokens finalized so far), and noisy block `step` alone. Equivalent to
// building the training mask for the plan truncated after `step` and keeping
// only the rows/columns present at inference. The trained variant does not
// matter here: partial and full agree on every block that exists in this
// layout.
AttnMask mask_for_ar_step(const ArPlan& plan, int step, int cl);

}  // namespace cadiff
