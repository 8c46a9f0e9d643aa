#include "cadiff/tape.hpp"

#include <cmath>

namespace cadiff {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_val(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

}  // namespace

Tape::Id Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::input(Matrix v) {
    Node n;
    n.op = Op::input;
    n.value = std::move(v);
    return push(std::move(n));
}

Tape::Id Tape::param(const Matrix& v, int param_id) {
    if (param_id < 0) throw ContractError("Tape::param: negative param_id");
    Node n;
    n.op = Op::param;
    n.value = v;
    n.param_id = param_id;
    return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
    Node n;
    n.op = Op::matmul;
    n.in = {a, b, -1};
    n.value = cadiff::matmul(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::transpose(Id a) {
    Node n;
    n.op = Op::transpose;
    n.in = {a, -1, -1};
    n.value = cadiff::transpose(val(a));
    return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
    Node n;
    n.op = Op::add;
    n.in = {a, b, -1};
    n.value = cadiff::add(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
    Node n;
    n.op = Op::sub;
    n.in = {a, b, -1};
    n.value = cadiff::sub(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::hadamard(Id a, Id b) {
    Node n;
    n.op = Op::hadamard;
    n.in = {a, b, -1};
    n.value = cadiff::hadamard(val(a), val(b));
    return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double s) {
    Node n;
    n.op = Op::scale;
    n.in = {a, -1, -1};
    n.scalar = s;
    n.value = cadiff::scale(val(a), s);
    return push(std::move(n));
}

Tape::Id Tape::add_rowvec(Id a, Id v) {
    Node n;
    n.op = Op::add_rowvec;
    n.in = {a, v, -1};
    n.value = cadiff::add_rowvec(val(a), val(v));
    return push(std::move(n));
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
    std::vector<const Matrix*> ptrs;
    ptrs.reserve(parts.size());
    for (Id p : parts) ptrs.push_back(&val(p));
    Node n;
    n.op = Op::concat_rows;
    n.ins = parts;
    n.value = cadiff::concat_rows(ptrs);
    return push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
    std::vector<const Matrix*> ptrs;
    ptrs.reserve(parts.size());
    for (Id p : parts) ptrs.push_back(&val(p));
    Node n;
    n.op = Op::concat_cols;
    n.ins = parts;
    n.value = cadiff::concat_cols(ptrs);
    return push(std::move(n));
}

Tape::Id Tape::slice_rows(Id a, int r0, int r1) {
    Node n;
    n.op = Op::slice_rows;
    n.in = {a, -1, -1};
    n.i0 = r0;
    n.i1 = r1;
    n.value = cadiff::slice_rows(val(a), r0, r1);
    return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, int c0, int c1) {
    Node n;
    n.op = Op::slice_cols;
    n.in = {a, -1, -1};
    n.i0 = c0;
    n.i1 = c1;
    n.value = cadiff::slice_cols(val(a), c0, c1);
    return push(std::move(n));
}

Tape::Id Tape::gather_rows(Id a, std::vector<int> indices) {
    const Matrix& src = val(a);
    Matrix out(static_cast<int>(indices.size()), src.cols);
    for (size_t i = 0; i < indices.size(); ++i) {
        const int r = indices[i];
        if (r < 0 || r >= src.rows) {
            throw ShapeError("gather_rows: index " + std::to_string(r) + " out of bounds for " +
                             shape_str(src));
        }
        for (int c = 0; c < src.cols; ++c) out.at(static_cast<int>(i), c) = src.at(r, c);
    }
    Node n;
    n.op = Op::gather_rows;
    n.in = {a, -1, -1};
    n.indices = std::move(indices);
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::softmax_masked(Id scores, const MaskRef& mask) {
    Node n;
    n.op = Op::softmax_masked;
    n.in = {scores, -1, -1};
    n.value = cadiff::softmax_masked(val(scores), mask);
    n.mask.assign(mask.grid, mask.grid + static_cast<size_t>(mask.rows) * mask.cols);
    return push(std::move(n));
}

Tape::Id Tape::layernorm(Id a, Id gain, Id bias) {
    const Matrix& x = val(a);
    const Matrix& g = val(gain);
    const Matrix& b = val(bias);
    if (g.rows != 1 || g.cols != x.cols || b.rows != 1 || b.cols != x.cols) {
        throw ShapeError("layernorm: gain/bias must be 1x" + std::to_string(x.cols));
    }
    Matrix out(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r) {
        double mean = 0.0;
        for (int c = 0; c < x.cols; ++c) mean += x.at(r, c);
        mean /= x.cols;
        double var = 0.0;
        for (int c = 0; c < x.cols; ++c) {
            const double d = x.at(r, c) - mean;
            var += d * d;
        }
        var /= x.cols;
        const double inv_std = 1.0 / std::sqrt(var + kLnEps);
        for (int c = 0; c < x.cols; ++c) {
            out.at(r, c) = g.data[c] * (x.at(r, c) - mean) * inv_std + b.data[c];
        }
    }
    Node n;
    n.op = Op::layernorm;
    n.in = {a, gain, bias};
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::gelu(Id a) {
    const Matrix& x = val(a);
    Matrix out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = gelu_val(x.data[i]);
    Node n;
    n.op = Op::gelu;
    n.in = {a, -1, -1};
    n.value = std::move(out);
    return push(std::move(n));
}

Tape::Id Tape::mse(Id pred, const Matrix& target, double denom) {
    Node n;
    n.op = Op::mse;
    n.in = {pred, -1, -1};
    n.scalar = denom;
    Matrix v(1, 1);
    v.data[0] = cadiff::mse(val(pred), target, denom);
    n.value = std::move(v);
    n.aux = target;
    return push(std::move(n));
}

Tape::Id Tape::sum(Id a) {
    Node n;
    n.op = Op::sum;
    n.in = {a, -1, -1};
    Matrix v(1, 1);
    for (double x : val(a).data) v.data[0] += x;
    n.value = std::move(v);
    return push(std::move(n));
}

void Tape::clear() { nodes_.clear(); }

std::vector<Matrix> Tape::backward(Id loss, int n_params) const {
    if (loss < 0 || loss >= size()) throw ContractError("Tape::backward: bad loss id");
    const Matrix& lv = nodes_[loss].value;
    if (lv.rows != 1 || lv.cols != 1) {
        throw ContractError("Tape::backward: loss must be 1x1, got " + shape_str(lv));
    }

    std::vector<Matrix> grad(nodes_.size());
    std::vector<char> touched(nodes_.size(), 0);
    auto ensure = [&](Id id) -> Matrix& {
        if (!touched[id]) {
            grad[id] = Matrix(nodes_[id].value.rows, nodes_[id].value.cols);
            touched[id] = 1;
        }
        return grad[id];
    };

    ensure(loss).data[0] = 1.0;

    // One reverse sweep; ids are creation-ordered, so inputs always come
    // later in the walk than their consumers.
    for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (!touched[id]) continue;
        const Matrix& g = grad[id];
        switch (n.op) {
            case Op::input:
            case Op::param:
                break;
            case Op::matmul: {
                const Matrix& a = val(n.in[0]);
                const Matrix& b = val(n.in[1]);
                Matrix da = cadiff::matmul(g, cadiff::transpose(b));
                Matrix db = cadiff::matmul(cadiff::transpose(a), g);
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < da.size(); ++i) ga.data[i] += da.data[i];
                Matrix& gb = ensure(n.in[1]);
                for (size_t i = 0; i < db.size(); ++i) gb.data[i] += db.data[i];
                break;
            }
            case Op::transpose: {
                Matrix& ga = ensure(n.in[0]);
                for (int r = 0; r < g.rows; ++r) {
                    for (int c = 0; c < g.cols; ++c) ga.at(c, r) += g.at(r, c);
                }
                break;
            }
            case Op::add: {
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                Matrix& gb = ensure(n.in[1]);
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
                break;
            }
            case Op::sub: {
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                Matrix& gb = ensure(n.in[1]);
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
                break;
            }
            case Op::hadamard: {
                const Matrix& a = val(n.in[0]);
                const Matrix& b = val(n.in[1]);
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * b.data[i];
                Matrix& gb = ensure(n.in[1]);
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * a.data[i];
                break;
            }
            case Op::scale: {
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += n.scalar * g.data[i];
                break;
            }
            case Op::add_rowvec: {
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                Matrix& gv = ensure(n.in[1]);
                for (int r = 0; r < g.rows; ++r) {
                    for (int c = 0; c < g.cols; ++c) gv.data[c] += g.at(r, c);
                }
                break;
            }
            case Op::concat_rows: {
                int r0 = 0;
                for (Id p : n.ins) {
                    const Matrix& pv = val(p);
                    Matrix& gp = ensure(p);
                    for (int r = 0; r < pv.rows; ++r) {
                        for (int c = 0; c < pv.cols; ++c) gp.at(r, c) += g.at(r0 + r, c);
                    }
                    r0 += pv.rows;
                }
                break;
            }
            case Op::concat_cols: {
                int c0 = 0;
                for (Id p : n.ins) {
                    const Matrix& pv = val(p);
                    Matrix& gp = ensure(p);
                    for (int r = 0; r < pv.rows; ++r) {
                        for (int c = 0; c < pv.cols; ++c) gp.at(r, c) += g.at(r, c0 + c);
                    }
                    c0 += pv.cols;
                }
                break;
            }
            case Op::slice_rows: {
                Matrix& ga = ensure(n.in[0]);
                for (int r = 0; r < g.rows; ++r) {
                    for (int c = 0; c < g.cols; ++c) ga.at(n.i0 + r, c) += g.at(r, c);
                }
                break;
            }
            case Op::slice_cols: {
                Matrix& ga = ensure(n.in[0]);
                for (int r = 0; r < g.rows; ++r) {
                    for (int c = 0; c < g.cols; ++c) ga.at(r, n.i0 + c) += g.at(r, c);
                }
                break;
            }
            case Op::gather_rows: {
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < n.indices.size(); ++i) {
                    for (int c = 0; c < g.cols; ++c) {
                        ga.at(n.indices[i], c) += g.at(static_cast<int>(i), c);
                    }
                }
                break;
            }
            case Op::softmax_masked: {
                const Matrix& p = n.value;
                MaskRef m{p.rows, p.cols, n.mask.data()};
                Matrix& gs = ensure(n.in[0]);
                for (int r = 0; r < p.rows; ++r) {
                    double dot = 0.0;
                    for (int c = 0; c < p.cols; ++c) dot += g.at(r, c) * p.at(r, c);
                    for (int c = 0; c < p.cols; ++c) {
                        if (m.blocked(r, c)) continue;
                        gs.at(r, c) += p.at(r, c) * (g.at(r, c) - dot);
                    }
                }
                break;
            }
            case Op::layernorm: {
                const Matrix& x = val(n.in[0]);
                const Matrix& gn = val(n.in[1]);
                const int d = x.cols;
                Matrix& gx = ensure(n.in[0]);
                Matrix& gg = ensure(n.in[1]);
                Matrix& gb = ensure(n.in[2]);
                for (int r = 0; r < x.rows; ++r) {
                    double mean = 0.0;
                    for (int c = 0; c < d; ++c) mean += x.at(r, c);
                    mean /= d;
                    double var = 0.0;
                    for (int c = 0; c < d; ++c) {
                        const double dd = x.at(r, c) - mean;
                        var += dd * dd;
                    }
                    var /= d;
                    const double inv_std = 1.0 / std::sqrt(var + kLnEps);
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (int c = 0; c < d; ++c) {
                        const double xh = (x.at(r, c) - mean) * inv_std;
                        const double dxh = g.at(r, c) * gn.data[c];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh;
                        gg.data[c] += g.at(r, c) * xh;
                        gb.data[c] += g.at(r, c);
                    }
                    mean_dxh /= d;
                    mean_dxh_xh /= d;
                    for (int c = 0; c < d; ++c) {
                        const double xh = (x.at(r, c) - mean) * inv_std;
                        const double dxh = g.at(r, c) * gn.data[c];
                        gx.at(r, c) += inv_std * (dxh - mean_dxh - xh * mean_dxh_xh);
                    }
                }
                break;
            }
            case Op::gelu: {
                const Matrix& x = val(n.in[0]);
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < x.size(); ++i) {
                    ga.data[i] += g.data[i] * gelu_grad(x.data[i]);
                }
                break;
            }
            case Op::mse: {
                const Matrix& p = val(n.in[0]);
                const double gl = g.data[0];
                Matrix& gp = ensure(n.in[0]);
                for (size_t i = 0; i < p.size(); ++i) {
                    gp.data[i] += gl * 2.0 * (p.data[i] - n.aux.data[i]) / n.scalar;
                }
                break;
            }
            case Op::sum: {
                const double gl = g.data[0];
                Matrix& ga = ensure(n.in[0]);
                for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += gl;
                break;
            }
        }
    }

    std::vector<Matrix> out(static_cast<size_t>(n_params));
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op != Op::param) continue;
        if (n.param_id >= n_params) {
            throw ContractError("Tape::backward: param_id " + std::to_string(n.param_id) +
                                " >= n_params " + std::to_string(n_params));
        }
        Matrix& slot = out[n.param_id];
        if (slot.rows == 0 && slot.cols == 0) slot = Matrix(n.value.rows, n.value.cols);
        if (touched[i]) {
            const Matrix& g = grad[i];
            for (size_t k = 0; k < g.size(); ++k) slot.data[k] += g.data[k];
        }
    }
    for (int p = 0; p < n_params; ++p) {
        if (out[p].rows == 0 && out[p].cols == 0) {
            throw ContractError("Tape::backward: param_id " + std::to_string(p) +
                                " was never registered");
        }
    }
    return out;
}

double grad_check(const std::function<double()>& eval,
                  std::span<Matrix* const> params,
                  const std::vector<Matrix>& analytic,
                  double eps) {
    if (params.size() != analytic.size()) {
        throw ContractError("grad_check: params and analytic gradients differ in count");
    }
    if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");
    double worst = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        Matrix& m = *params[p];
        const Matrix& ga = analytic[p];
        if (!m.same_shape(ga)) {
            throw ContractError("grad_check: gradient shape mismatch at param " + std::to_string(p));
        }
        for (size_t i = 0; i < m.size(); ++i) {
            const double orig = m.data[i];
            m.data[i] = orig + eps;
            const double fp = eval();
            m.data[i] = orig - eps;
            const double fm = eval();
            m.data[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("grad_check: non-finite objective during perturbation");
            }
            const double num = (fp - fm) / (2.0 * eps);
            const double ana = ga.data[i];
            const double denom = std::max({std::abs(num), std::abs(ana), 1e-8});
            worst = std::max(worst, std::abs(num - ana) / denom);
        }
    }
    return worst;
}

}  // namespace cadiff
