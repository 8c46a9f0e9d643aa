#include "cadiff/matrix.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace cadiff {

namespace {

using EigenMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

[[noreturn]] void shape_fail(const std::string& op, const Matrix& a, const Matrix& b) {
    throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

}  // namespace

std::string shape_str(const Matrix& m) {
    return "[" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + "]";
}

bool Matrix::all_finite() const {
    for (double x : data) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Matrix::require_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError(what + ": non-finite entries in " + shape_str(*this));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) shape_fail("matmul", a, b);
    Matrix out(a.rows, b.cols);
    if (out.empty() || a.cols == 0) return out;
    EigenMap ma(a.data.data(), a.rows, a.cols);
    EigenMap mb(b.data.data(), b.rows, b.cols);
    EigenMutMap mo(out.data.data(), out.rows, out.cols);
    mo.noalias() = ma * mb;
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < a.cols; ++c) out.at(c, r) = a.at(r, c);
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_fail("add", a, b);
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_fail("sub", a, b);
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_fail("hadamard", a, b);
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * s;
    return out;
}

Matrix add_rowvec(const Matrix& a, const Matrix& v) {
    if (v.rows != 1 || v.cols != a.cols) shape_fail("add_rowvec", a, v);
    Matrix out(a.rows, a.cols);
    for (int r = 0; r < a.rows; ++r) {
        const double* ar = a.row(r);
        double* or_ = out.row(r);
        for (int c = 0; c < a.cols; ++c) or_[c] = ar[c] + v.data[c];
    }
    return out;
}

Matrix concat_rows(const std::vector<const Matrix*>& parts) {
    int cols = -1;
    int rows = 0;
    for (const Matrix* p : parts) {
        if (p->rows == 0) continue;
        if (cols < 0) cols = p->cols;
        if (p->cols != cols) throw ShapeError("concat_rows: column mismatch " + shape_str(*p));
        rows += p->rows;
    }
    if (cols < 0) cols = 0;
    Matrix out(rows, cols);
    int r = 0;
    for (const Matrix* p : parts) {
        for (int i = 0; i < p->rows; ++i, ++r) {
            for (int c = 0; c < cols; ++c) out.at(r, c) = p->at(i, c);
        }
    }
    return out;
}

Matrix concat_cols(const std::vector<const Matrix*>& parts) {
    int rows = -1;
    int cols = 0;
    for (const Matrix* p : parts) {
        if (p->cols == 0) continue;
        if (rows < 0) rows = p->rows;
        if (p->rows != rows) throw ShapeError("concat_cols: row mismatch " + shape_str(*p));
        cols += p->cols;
    }
    if (rows < 0) rows = 0;
    Matrix out(rows, cols);
    int c0 = 0;
    for (const Matrix* p : parts) {
        if (p->cols == 0) continue;
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < p->cols; ++c) out.at(r, c0 + c) = p->at(r, c);
        }
        c0 += p->cols;
    }
    return out;
}

Matrix slice_rows(const Matrix& a, int r0, int r1) {
    if (r0 < 0 || r1 < r0 || r1 > a.rows) {
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of bounds for " + shape_str(a));
    }
    Matrix out(r1 - r0, a.cols);
    for (int r = r0; r < r1; ++r) {
        for (int c = 0; c < a.cols; ++c) out.at(r - r0, c) = a.at(r, c);
    }
    return out;
}

Matrix slice_cols(const Matrix& a, int c0, int c1) {
    if (c0 < 0 || c1 < c0 || c1 > a.cols) {
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of bounds for " + shape_str(a));
    }
    Matrix out(a.rows, c1 - c0);
    for (int r = 0; r < a.rows; ++r) {
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = a.at(r, c);
    }
    return out;
}

Matrix softmax_masked(const Matrix& scores, const MaskRef& mask) {
    if (mask.rows != scores.rows || mask.cols != scores.cols) {
        throw ShapeError("softmax_masked: mask [" + std::to_string(mask.rows) + "x" +
                         std::to_string(mask.cols) + "] does not match scores " + shape_str(scores));
    }
    Matrix out(scores.rows, scores.cols);
    for (int r = 0; r < scores.rows; ++r) {
        // Max over unblocked entries only, so a blocked score of any
        // magnitude has no influence at all, not even on the shift.
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < scores.cols; ++c) {
            if (!mask.blocked(r, c)) mx = std::max(mx, scores.at(r, c));
        }
        if (!std::isfinite(mx)) {
            throw ContractError("softmax_masked: row " + std::to_string(r) +
                                " is fully blocked (malformed mask)");
        }
        double sum = 0.0;
        for (int c = 0; c < scores.cols; ++c) {
            if (mask.blocked(r, c)) continue;
            const double e = std::exp(scores.at(r, c) - mx);
            out.at(r, c) = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int c = 0; c < scores.cols; ++c) {
            if (!mask.blocked(r, c)) out.at(r, c) *= inv;
        }
    }
    return out;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_fail("frobenius_dot", a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double frobenius_norm(const Matrix& a) {
    return std::sqrt(frobenius_dot(a, a));
}

double mse(const Matrix& a, const Matrix& b, double denom) {
    if (!a.same_shape(b)) shape_fail("mse", a, b);
    if (denom <= 0.0) throw ContractError("mse: denominator must be positive");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / denom;
}

}  // namespace cadiff
