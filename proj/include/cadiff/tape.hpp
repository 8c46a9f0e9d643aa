#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cadiff/matrix.hpp"

namespace cadiff {

// ============================================================================
// Reverse-mode autodiff over Matrix values.
//
// A Tape records one forward pass as a flat list of nodes in creation order.
// Each op validates shapes eagerly (same checks as the eager kernels) and
// stores its result, so values can be inspected mid-graph. backward() walks
// the list once in reverse and returns the gradient for every registered
// parameter; parameters that never feed the loss get zero gradients of the
// right shape. Tapes are single-use per forward pass: record, differentiate,
// clear (or discard).
// ============================================================================

class Tape {
public:
    using Id = int32_t;

    // --- graph construction -------------------------------------------------

    // Constant leaf. No gradient is tracked.
    Id input(Matrix v);

    // Parameter leaf. param_id keys the gradient slot returned by backward();
    // ids must be registered densely from 0.
    Id param(const Matrix& v, int param_id);

    Id matmul(Id a, Id b);
    Id transpose(Id a);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id hadamard(Id a, Id b);
    Id scale(Id a, double s);
    Id add_rowvec(Id a, Id v);
    Id concat_rows(const std::vector<Id>& parts);
    Id concat_cols(const std::vector<Id>& parts);
    Id slice_rows(Id a, int r0, int r1);
    Id slice_cols(Id a, int c0, int c1);

    // out[i, :] = a[indices[i], :]. Duplicate indices accumulate gradient.
    Id gather_rows(Id a, std::vector<int> indices);

    // Row-wise masked softmax; the mask bytes are copied into the node, so
    // the source mask only needs to live until this call returns.
    Id softmax_masked(Id scores, const MaskRef& mask);

    // Per-row layernorm with 1 x cols gain and bias, epsilon 1e-5.
    Id layernorm(Id a, Id gain, Id bias);

    // Exact-erf GELU, applied elementwise.
    Id gelu(Id a);

    // Scalar (1x1) node: sum of squared differences over denom.
    Id mse(Id pred, const Matrix& target, double denom);

    // Scalar (1x1) node: sum of all entries.
    Id sum(Id a);

    // --- inspection and differentiation -------------------------------------

    const Matrix& value(Id id) const { return nodes_[id].value; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Gradient of the scalar at `loss` w.r.t. every parameter, indexed by
    // param_id. n_params must cover every registered id.
    std::vector<Matrix> backward(Id loss, int n_params) const;

    void clear();
    void reserve(size_t n) { nodes_.reserve(n); }

private:
    enum class Op : uint8_t {
        input, param, matmul, transpose, add, sub, hadamard, scale, add_rowvec,
        concat_rows, concat_cols, slice_rows, slice_cols, gather_rows,
        softmax_masked, layernorm, gelu, mse, sum,
    };

    struct Node {
        Op op{};
        Matrix value;
        std::array<Id, 3> in{-1, -1, -1};
        std::vector<Id> ins;           // concat operands
        double scalar = 0.0;           // scale factor / mse denom
        int i0 = 0, i1 = 0;            // slice bounds
        std::vector<int> indices;      // gather_rows
        std::vector<uint8_t> mask;     // softmax mask copy
        Matrix aux;                    // mse target
        int param_id = -1;
    };

    Id push(Node n);
    const Matrix& val(Id id) const { return nodes_[id].value; }

    std::vector<Node> nodes_;
};

// ----------------------------------------------------------------------------
// Finite-difference gradient check.
//
// For each parameter entry, perturbs by +/-eps, evaluates `eval`, and compares
// the central difference against the matching entry of `analytic`. Returns the
// maximum relative error, with |a - n| / max(|a|, |n|, 1e-8) as the metric.
// Throws NumericError if eval() ever returns a non-finite value.
// ----------------------------------------------------------------------------
double grad_check(const std::function<double()>& eval,
                  std::span<Matrix* const> params,
                  const std::vector<Matrix>& analytic,
                  double eps);

}  // namespace cadiff
