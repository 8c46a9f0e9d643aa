#pragma once

#include "cadiff/matrix.hpp"

namespace cadiff {

// A clean or noisy latent token sequence, l x d_token.
struct LatentSequence {
    Matrix tokens;
};

// Conditioning tokens, cl x d_token. is_null marks the learned null
// condition used for classifier-free guidance; the token contents are
// ignored in that case and the denoiser substitutes its learned row.
struct ConditionSequence {
    Matrix tokens;
    bool is_null = false;
};

}  // namespace cadiff
