#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cadiff/error.hpp"
#include "cadiff/rng.hpp"

namespace cadiff {

// ============================================================================
// Dense row-major matrix of doubles, plus the small set of eager operations
// the rest of the system is built on. Shapes are checked on every operation;
// mismatches throw ShapeError with the offending dimensions in the message.
// ============================================================================

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw ShapeError("Matrix: negative dimension");
    }

    static Matrix filled(int r, int c, double v) {
        Matrix m(r, c);
        for (double& x : m.data) x = v;
        return m;
    }

    static Matrix gaussian(int r, int c, Rng& rng, double stddev = 1.0) {
        Matrix m(r, c);
        for (double& x : m.data) x = stddev * rng.normal();
        return m;
    }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const;

    // Throws NumericError naming `what` if any entry is non-finite.
    void require_finite(const std::string& what) const;
};

std::string shape_str(const Matrix& m);

// ----------------------------------------------------------------------------
// Attention mask view. grid is row-major over [rows x cols]; 0 means the row
// may attend to the column, 1 means blocked.
// ----------------------------------------------------------------------------
struct MaskRef {
    int rows = 0;
    int cols = 0;
    const uint8_t* grid = nullptr;

    bool blocked(int r, int c) const {
        return grid[static_cast<size_t>(r) * cols + c] != 0;
    }
};

// ----------------------------------------------------------------------------
// Eager operations
// ----------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// Adds a 1 x cols row vector to every row of a.
Matrix add_rowvec(const Matrix& a, const Matrix& v);

// Concatenates along rows (stacking) or columns. Empty inputs are allowed.
Matrix concat_rows(const std::vector<const Matrix*>& parts);
Matrix concat_cols(const std::vector<const Matrix*>& parts);

// Copies rows [r0, r1) or columns [c0, c1).
Matrix slice_rows(const Matrix& a, int r0, int r1);
Matrix slice_cols(const Matrix& a, int c0, int c1);

// Row-wise softmax that never reads blocked entries: the max and the sum run
// over unblocked entries only, and blocked outputs are exactly 0.0. A row
// with every entry blocked throws ContractError.
Matrix softmax_masked(const Matrix& scores, const MaskRef& mask);

double frobenius_dot(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

// Mean squared difference over all entries, with an explicit denominator so
// callers can normalize by something other than the element count.
double mse(const Matrix& a, const Matrix& b, double denom);

}  // namespace cadiff
