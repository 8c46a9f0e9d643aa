// Dense-matrix arithmetic against hand values and an independent
// triple-loop product oracle.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "cadiff/error.hpp"
#include "cadiff/matrix.hpp"
#include "cadiff/rng.hpp"

using namespace cadiff;

namespace {

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows[0].size()));
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) m.at(r, c) = rows[r][c];
    return m;
}

// Independent product oracle: nothing shared with the library routine.
Matrix triple_loop(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

MaskRef mask_of(const std::vector<uint8_t>& grid, int rows, int cols) {
    return MaskRef{rows, cols, grid.data()};
}

}  // namespace

TEST_SUITE("matrix") {

TEST_CASE("matmul identity") {
    Matrix I(3, 3);
    for (int i = 0; i < 3; ++i) I.at(i, i) = 1.0;
    Rng r(3);
    const Matrix m = Matrix::gaussian(3, 5, r);
    const Matrix p = matmul(I, m);
    REQUIRE(p.same_shape(m));
    for (size_t i = 0; i < m.size(); ++i) CHECK(p.data[i] == m.data[i]);
}

TEST_CASE("matmul hand case") {
    const Matrix a = from_rows({{1, 2}, {3, 4}});
    const Matrix b = from_rows({{1}, {1}});
    const Matrix p = matmul(a, b);
    REQUIRE(p.rows == 2);
    REQUIRE(p.cols == 1);
    CHECK(p.at(0, 0) == 3.0);
    CHECK(p.at(1, 0) == 7.0);
}

TEST_CASE("matmul agrees with the triple-loop oracle on 100 random pairs") {
    Rng r(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + static_cast<int>(r.below(12));
        const int k = 1 + static_cast<int>(r.below(12));
        const int n = 1 + static_cast<int>(r.below(12));
        const Matrix a = Matrix::gaussian(m, k, r);
        const Matrix b = Matrix::gaussian(k, n, r);
        const Matrix got = matmul(a, b);
        const Matrix want = triple_loop(a, b);
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(std::abs(got.data[i] - want.data[i]) <=
                  1e-12 * std::max(1.0, std::abs(want.data[i])));
        }
    }
}

TEST_CASE("matmul rejects mismatched shapes") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(4, 2)), ShapeError);
}

TEST_CASE("elementwise operations") {
    const Matrix a = from_rows({{1, -2}, {3, 0.5}});
    const Matrix b = from_rows({{2, 2}, {-1, 4}});
    CHECK(add(a, b).at(0, 0) == 3.0);
    CHECK(sub(a, b).at(1, 0) == 4.0);
    CHECK(hadamard(a, b).at(0, 1) == -4.0);
    CHECK(hadamard(a, b).at(1, 1) == 2.0);
    CHECK(scale(a, -2.0).at(1, 0) == -6.0);
    CHECK_THROWS_AS(add(a, Matrix(1, 2)), ShapeError);
    CHECK_THROWS_AS(hadamard(a, Matrix(2, 3)), ShapeError);
}

TEST_CASE("add_rowvec broadcasts a bias row") {
    const Matrix a = from_rows({{1, 2, 3}, {4, 5, 6}});
    const Matrix v = from_rows({{10, 20, 30}});
    const Matrix out = add_rowvec(a, v);
    CHECK(out.at(0, 0) == 11.0);
    CHECK(out.at(1, 2) == 36.0);
    CHECK_THROWS_AS(add_rowvec(a, from_rows({{1, 2}})), ShapeError);
}

TEST_CASE("transpose round trip") {
    Rng r(4);
    const Matrix a = Matrix::gaussian(4, 7, r);
    const Matrix t = transpose(a);
    REQUIRE(t.rows == 7);
    REQUIRE(t.cols == 4);
    CHECK(t.at(2, 3) == a.at(3, 2));
    const Matrix tt = transpose(t);
    for (size_t i = 0; i < a.size(); ++i) CHECK(tt.data[i] == a.data[i]);
}

TEST_CASE("concat and slice invert each other") {
    Rng r(5);
    const Matrix a = Matrix::gaussian(2, 3, r);
    const Matrix b = Matrix::gaussian(4, 3, r);
    const Matrix cat = concat_rows({&a, &b});
    REQUIRE(cat.rows == 6);
    const Matrix a2 = slice_rows(cat, 0, 2);
    const Matrix b2 = slice_rows(cat, 2, 6);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a2.data[i] == a.data[i]);
    for (size_t i = 0; i < b.size(); ++i) CHECK(b2.data[i] == b.data[i]);

    const Matrix c = Matrix::gaussian(2, 5, r);
    const Matrix catc = concat_cols({&a, &c});
    REQUIRE(catc.cols == 8);
    const Matrix c2 = slice_cols(catc, 3, 8);
    for (size_t i = 0; i < c.size(); ++i) CHECK(c2.data[i] == c.data[i]);

    CHECK_THROWS_AS(slice_rows(a, 1, 3), ShapeError);
    CHECK_THROWS_AS(concat_rows({&a, &c}), ShapeError);
}

TEST_CASE("empty parts are allowed in concat") {
    const Matrix a = from_rows({{1, 2}});
    const Matrix e;
    const Matrix cat = concat_rows({&e, &a});
    CHECK(cat.rows == 1);
    CHECK(cat.at(0, 1) == 2.0);
}

TEST_CASE("softmax_masked symmetric row") {
    const Matrix s = from_rows({{0, 0}});
    const std::vector<uint8_t> g = {0, 0};
    const Matrix out = softmax_masked(s, mask_of(g, 1, 2));
    CHECK(out.at(0, 0) == 0.5);
    CHECK(out.at(0, 1) == 0.5);
}

TEST_CASE("softmax_masked single unblocked column is exactly one") {
    const Matrix s = from_rows({{5, 100}});
    const std::vector<uint8_t> g = {0, 1};
    const Matrix out = softmax_masked(s, mask_of(g, 1, 2));
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == 0.0);
}

TEST_CASE("softmax_masked two-way hand value") {
    const Matrix s = from_rows({{1, 2, 3}});
    const std::vector<uint8_t> g = {0, 0, 1};
    const Matrix out = softmax_masked(s, mask_of(g, 1, 3));
    const double e = std::exp(1.0);
    CHECK(out.at(0, 0) == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-14));
    CHECK(out.at(0, 1) == doctest::Approx(e / (1.0 + e)).epsilon(1e-14));
    CHECK(out.at(0, 2) == 0.0);
}

TEST_CASE("softmax_masked row properties on random inputs") {
    Rng r(77);
    for (int trial = 0; trial < 20; ++trial) {
        const int rows = 1 + static_cast<int>(r.below(6));
        const int cols = 2 + static_cast<int>(r.below(8));
        Matrix s = Matrix::gaussian(rows, cols, r, 5.0);
        std::vector<uint8_t> g(static_cast<size_t>(rows) * cols, 0);
        for (int i = 0; i < rows; ++i) {
            // Block a random subset, keeping at least one column open.
            const int keep = static_cast<int>(r.below(cols));
            for (int j = 0; j < cols; ++j)
                if (j != keep && r.uniform01() < 0.5) g[static_cast<size_t>(i) * cols + j] = 1;
        }
        const MaskRef m = mask_of(g, rows, cols);
        const Matrix out = softmax_masked(s, m);
        for (int i = 0; i < rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                if (m.blocked(i, j)) {
                    CHECK(out.at(i, j) == 0.0);
                } else {
                    CHECK(out.at(i, j) > 0.0);
                    sum += out.at(i, j);
                }
            }
            CHECK(sum > 1.0 - 1e-6);
            CHECK(sum < 1.0 + 1e-6);
        }
    }
}

TEST_CASE("softmax_masked ignores huge blocked scores") {
    const Matrix s = from_rows({{1, 2, 1e300}});
    const std::vector<uint8_t> g = {0, 0, 1};
    const Matrix out = softmax_masked(s, mask_of(g, 1, 3));
    CHECK(std::isfinite(out.at(0, 0)));
    CHECK(out.at(0, 2) == 0.0);
}

TEST_CASE("softmax_masked rejects a fully blocked row") {
    const Matrix s = from_rows({{1, 2}});
    const std::vector<uint8_t> g = {1, 1};
    CHECK_THROWS_AS(softmax_masked(s, mask_of(g, 1, 2)), ContractError);
}

TEST_CASE("softmax_masked rejects shape mismatch") {
    const Matrix s = from_rows({{1, 2}});
    const std::vector<uint8_t> g = {0, 0, 0};
    CHECK_THROWS_AS(softmax_masked(s, mask_of(g, 1, 3)), ShapeError);
}

TEST_CASE("frobenius helpers and mse") {
    const Matrix a = from_rows({{1, 2}, {3, 4}});
    const Matrix b = from_rows({{2, 2}, {2, 2}});
    CHECK(frobenius_dot(a, b) == 20.0);
    CHECK(frobenius_norm(b) == 4.0);
    // Squared diffs: 1 + 0 + 1 + 4 = 6.
    CHECK(mse(a, b, 4.0) == 1.5);
    CHECK(mse(a, b, 12.0) == 0.5);
    CHECK(mse(a, a, 4.0) == 0.0);
}

TEST_CASE("require_finite flags bad entries") {
    Matrix a(2, 2);
    a.require_finite("probe");
    a.at(1, 1) = std::nan("");
    CHECK(!a.all_finite());
    CHECK_THROWS_AS(a.require_finite("probe"), NumericError);
}

}  // TEST_SUITE
