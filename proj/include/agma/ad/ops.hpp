#pragma once

// Differentiable matrix operations recorded on a Tape.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "agma/ad/tape.hpp"

namespace agma::ad {

namespace detail {

inline void require_same_tape(const Var& a, const Var& b) {
    if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    require_same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

// ---------------------------------------------------------------- arithmetic

inline Var add(Var a, Var b) {
    detail::require_same_shape(a, b, "add");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() + b.value(), a.needs_grad() || b.needs_grad(),
                          [ia, ib](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia)) t.grad(ia) += g;
                              if (t.needs_grad(ib)) t.grad(ib) += g;
                          });
}

inline Var sub(Var a, Var b) {
    detail::require_same_shape(a, b, "sub");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() - b.value(), a.needs_grad() || b.needs_grad(),
                          [ia, ib](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia)) t.grad(ia) += g;
                              if (t.needs_grad(ib)) t.grad(ib) -= g;
                          });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
    detail::require_same_shape(a, b, "mul");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value().cwiseProduct(b.value()), a.needs_grad() || b.needs_grad(),
                          [ia, ib](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
                              if (t.needs_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
                          });
}

inline Var scale(Var a, double c) {
    const int ia = a.id();
    return a.tape()->push(a.value() * c, a.needs_grad(), [ia, c](Tape& t, int self) {
        t.grad(ia) += c * t.grad(self);
    });
}

inline Var add_scalar(Var a, double c) {
    const int ia = a.id();
    return a.tape()->push((a.value().array() + c).matrix(), a.needs_grad(),
                          [ia](Tape& t, int self) { t.grad(ia) += t.grad(self); });
}

/// a (m x n) + r (1 x n) broadcast down the rows.
inline Var add_row(Var a, Var r) {
    detail::require_same_tape(a, r);
    if (r.rows() != 1 || r.cols() != a.cols()) throw ShapeError("add_row: expected 1 x cols row");
    const int ia = a.id(), ir = r.id();
    Matrix out = a.value();
    out.rowwise() += r.value().row(0);
    return a.tape()->push(std::move(out), a.needs_grad() || r.needs_grad(),
                          [ia, ir](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia)) t.grad(ia) += g;
                              if (t.needs_grad(ir)) t.grad(ir) += g.colwise().sum();
                          });
}

/// a (m x n) + c (m x 1) broadcast across the columns.
inline Var add_col(Var a, Var c) {
    detail::require_same_tape(a, c);
    if (c.cols() != 1 || c.rows() != a.rows()) throw ShapeError("add_col: expected rows x 1 column");
    const int ia = a.id(), ic = c.id();
    Matrix out = a.value();
    out.colwise() += c.value().col(0);
    return a.tape()->push(std::move(out), a.needs_grad() || c.needs_grad(),
                          [ia, ic](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia)) t.grad(ia) += g;
                              if (t.needs_grad(ic)) t.grad(ic) += g.rowwise().sum();
                          });
}

/// a (m x n) scaled per row by c (m x 1).
inline Var mul_col(Var a, Var c) {
    detail::require_same_tape(a, c);
    if (c.cols() != 1 || c.rows() != a.rows()) throw ShapeError("mul_col: expected rows x 1 column");
    const int ia = a.id(), ic = c.id();
    Matrix out = a.value().array().colwise() * c.value().col(0).array();
    return a.tape()->push(std::move(out), a.needs_grad() || c.needs_grad(),
                          [ia, ic](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia))
                                  t.grad(ia).array() += g.array().colwise() * t.value(ic).col(0).array();
                              if (t.needs_grad(ic))
                                  t.grad(ic) += g.cwiseProduct(t.value(ia)).rowwise().sum();
                          });
}

/// a (m x n) scaled per column by r (1 x n).
inline Var mul_row(Var a, Var r) {
    detail::require_same_tape(a, r);
    if (r.rows() != 1 || r.cols() != a.cols()) throw ShapeError("mul_row: expected 1 x cols row");
    const int ia = a.id(), ir = r.id();
    Matrix out = a.value().array().rowwise() * r.value().row(0).array();
    return a.tape()->push(std::move(out), a.needs_grad() || r.needs_grad(),
                          [ia, ir](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia))
                                  t.grad(ia).array() += g.array().rowwise() * t.value(ir).row(0).array();
                              if (t.needs_grad(ir))
                                  t.grad(ir) += g.cwiseProduct(t.value(ia)).colwise().sum();
                          });
}

inline Var matmul(Var a, Var b) {
    detail::require_same_tape(a, b);
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    const int ia = a.id(), ib = b.id();
    Matrix out = a.value() * b.value();
    return a.tape()->push(std::move(out), a.needs_grad() || b.needs_grad(),
                          [ia, ib](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
                              if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
                          });
}

/// a * b^T.
inline Var matmul_nt(Var a, Var b) {
    detail::require_same_tape(a, b);
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
    const int ia = a.id(), ib = b.id();
    Matrix out = a.value() * b.value().transpose();
    return a.tape()->push(std::move(out), a.needs_grad() || b.needs_grad(),
                          [ia, ib](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
                              if (t.needs_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
                          });
}

inline Var transpose(Var a) {
    const int ia = a.id();
    return a.tape()->push(a.value().transpose(), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia) += t.grad(self).transpose();
    });
}

// ---------------------------------------------------------------- elementwise

inline Var sigmoid(Var a) {
    const int ia = a.id();
    Matrix y = a.value().unaryExpr([](double x) { return detail::sigmoid(x); });
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        t.grad(ia).array() += t.grad(self).array() * y.array() * (1.0 - y.array());
    });
}

inline Var tanh(Var a) {
    const int ia = a.id();
    Matrix y = a.value().array().tanh().matrix();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        t.grad(ia).array() += t.grad(self).array() * (1.0 - y.array().square());
    });
}

inline Var relu(Var a) {
    const int ia = a.id();
    Matrix y = a.value().cwiseMax(0.0);
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).array() += (t.value(ia).array() > 0.0).select(t.grad(self).array(), 0.0);
    });
}

inline Var exp(Var a) {
    const int ia = a.id();
    Matrix y = a.value().array().exp().matrix();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).array() += t.grad(self).array() * t.value(self).array();
    });
}

inline Var log(Var a) {
    const int ia = a.id();
    Matrix y = a.value().array().log().matrix();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).array() += t.grad(self).array() / t.value(ia).array();
    });
}

/// Square root; the derivative at exactly zero is taken as zero.
inline Var sqrt(Var a) {
    const int ia = a.id();
    Matrix y = a.value().array().sqrt().matrix();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        t.grad(ia).array() += (y.array() > 0.0).select(t.grad(self).array() / (2.0 * y.array()), 0.0);
    });
}

inline Var square(Var a) {
    const int ia = a.id();
    Matrix y = a.value().array().square().matrix();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).array() += 2.0 * t.grad(self).array() * t.value(ia).array();
    });
}

inline Var softplus(Var a) {
    const int ia = a.id();
    Matrix y = a.value().unaryExpr([](double x) { return detail::softplus(x); });
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).array() += t.grad(self).array() *
                              t.value(ia).unaryExpr([](double x) { return detail::sigmoid(x); }).array();
    });
}

inline Var reciprocal(Var a) {
    const int ia = a.id();
    Matrix y = a.value().cwiseInverse();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).array() -= t.grad(self).array() * t.value(self).array().square();
    });
}

/// max(a, lo) elementwise; gradient passes only where a > lo.
inline Var clamp_min(Var a, double lo) {
    const int ia = a.id();
    Matrix y = a.value().cwiseMax(lo);
    return a.tape()->push(std::move(y), a.needs_grad(), [ia, lo](Tape& t, int self) {
        t.grad(ia).array() += (t.value(ia).array() > lo).select(t.grad(self).array(), 0.0);
    });
}

/// Forward value is `a`; no gradient flows back.
inline Var stop_gradient(Var a) { return a.tape()->constant(a.value()); }

/// Forward value is `hard` exactly; the backward pass treats the node as
/// the identity on `soft`.
inline Var straight_through(const Matrix& hard, Var soft) {
    if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) throw ShapeError("straight_through: shape mismatch");
    const int is = soft.id();
    return soft.tape()->push(hard, soft.needs_grad(), [is](Tape& t, int self) { t.grad(is) += t.grad(self); });
}

// ---------------------------------------------------------------- reductions

inline Var sum(Var a) {
    const int ia = a.id();
    Matrix y(1, 1);
    y(0, 0) = a.value().sum();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).array() += t.grad(self)(0, 0);
    });
}

inline Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

/// Sum across columns: (m x n) -> (m x 1).
inline Var sum_rows(Var a) {
    const int ia = a.id();
    Matrix y = a.value().rowwise().sum();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).colwise() += t.grad(self).col(0);
    });
}

/// Sum down rows: (m x n) -> (1 x n).
inline Var sum_cols(Var a) {
    const int ia = a.id();
    Matrix y = a.value().colwise().sum();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        t.grad(ia).rowwise() += t.grad(self).row(0);
    });
}

/// Row-wise log-sum-exp: (m x n) -> (m x 1).
inline Var logsumexp_rows(Var a) {
    const int ia = a.id();
    const Matrix& x = a.value();
    Matrix y(x.rows(), 1);
    for (Index i = 0; i < x.rows(); ++i) {
        const double mx = x.row(i).maxCoeff();
        y(i, 0) = std::isinf(mx) ? mx : mx + std::log((x.row(i).array() - mx).exp().sum());
    }
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(ia);
        for (Index i = 0; i < x.rows(); ++i) {
            if (std::isinf(y(i, 0))) continue;
            ga.row(i).array() += g(i, 0) * (x.row(i).array() - y(i, 0)).exp();
        }
    });
}

/// Column-wise log-sum-exp: (m x n) -> (1 x n).
inline Var logsumexp_cols(Var a) {
    const int ia = a.id();
    const Matrix& x = a.value();
    Matrix y(1, x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        const double mx = x.col(j).maxCoeff();
        y(0, j) = std::isinf(mx) ? mx : mx + std::log((x.col(j).array() - mx).exp().sum());
    }
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(ia);
        for (Index j = 0; j < x.cols(); ++j) {
            if (std::isinf(y(0, j))) continue;
            ga.col(j).array() += g(0, j) * (x.col(j).array() - y(0, j)).exp();
        }
    });
}

/// Row-wise softmax. Entries where `mask` is false receive probability 0.
inline Var softmax_rows(Var a, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* mask = nullptr) {
    const int ia = a.id();
    const Matrix& x = a.value();
    if (mask != nullptr && (mask->rows() != x.rows() || mask->cols() != x.cols()))
        throw ShapeError("softmax_rows: mask shape mismatch");
    Matrix y = Matrix::Zero(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < x.cols(); ++j)
            if (mask == nullptr || (*mask)(i, j)) mx = std::max(mx, x(i, j));
        if (std::isinf(mx)) throw DomainError("softmax_rows: row has no admissible entry");
        double z = 0.0;
        for (Index j = 0; j < x.cols(); ++j) {
            if (mask != nullptr && !(*mask)(i, j)) continue;
            y(i, j) = std::exp(x(i, j) - mx);
            z += y(i, j);
        }
        y.row(i) /= z;
    }
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
        t.grad(ia).array() += y.array() * (g.colwise() - dot).array();
    });
}

// ---------------------------------------------------------------- structure

inline Var hcat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("hcat: no operands");
    const Index rows = parts[0].rows();
    Index cols = 0;
    bool ng = false;
    for (const Var& p : parts) {
        detail::require_same_tape(parts[0], p);
        if (p.rows() != rows) throw ShapeError("hcat: row counts differ");
        cols += p.cols();
        ng = ng || p.needs_grad();
    }
    Matrix out(rows, cols);
    std::vector<std::pair<int, Index>> spans;
    Index c = 0;
    for (const Var& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        spans.emplace_back(p.id(), c);
        c += p.cols();
    }
    return parts[0].tape()->push(std::move(out), ng, [spans](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (const auto& [id, start] : spans)
            if (t.needs_grad(id)) t.grad(id) += g.middleCols(start, t.value(id).cols());
    });
}

inline Var hcat(std::initializer_list<Var> parts) {
    return hcat(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var vcat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("vcat: no operands");
    const Index cols = parts[0].cols();
    Index rows = 0;
    bool ng = false;
    for (const Var& p : parts) {
        detail::require_same_tape(parts[0], p);
        if (p.cols() != cols) throw ShapeError("vcat: column counts differ");
        rows += p.rows();
        ng = ng || p.needs_grad();
    }
    Matrix out(rows, cols);
    std::vector<std::pair<int, Index>> spans;
    Index r = 0;
    for (const Var& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        spans.emplace_back(p.id(), r);
        r += p.rows();
    }
    return parts[0].tape()->push(std::move(out), ng, [spans](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (const auto& [id, start] : spans)
            if (t.needs_grad(id)) t.grad(id) += g.middleRows(start, t.value(id).rows());
    });
}

inline Var slice_cols(Var a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    const int ia = a.id();
    return a.tape()->push(a.value().middleCols(start, count), a.needs_grad(),
                          [ia, start, count](Tape& t, int self) {
                              t.grad(ia).middleCols(start, count) += t.grad(self);
                          });
}

inline Var slice_rows(Var a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
    const int ia = a.id();
    return a.tape()->push(a.value().middleRows(start, count), a.needs_grad(),
                          [ia, start, count](Tape& t, int self) {
                              t.grad(ia).middleRows(start, count) += t.grad(self);
                          });
}

/// out.row(k) = a.row(index[k]); gradients scatter-add back.
inline Var gather_rows(Var a, std::vector<Index> index) {
    const Matrix& x = a.value();
    Matrix out(static_cast<Index>(index.size()), x.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] < 0 || index[k] >= x.rows()) throw ShapeError("gather_rows: index out of range");
        out.row(static_cast<Index>(k)) = x.row(index[k]);
    }
    const int ia = a.id();
    return a.tape()->push(std::move(out), a.needs_grad(), [ia, index = std::move(index)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t k = 0; k < index.size(); ++k) ga.row(index[k]) += g.row(static_cast<Index>(k));
    });
}

/// Each row of `a` repeated `times` consecutively: row i*times+k = a.row(i).
inline Var repeat_rows(Var a, Index times) {
    if (times < 1) throw ShapeError("repeat_rows: times must be positive");
    const Matrix& x = a.value();
    Matrix out(x.rows() * times, x.cols());
    for (Index i = 0; i < x.rows(); ++i)
        for (Index k = 0; k < times; ++k) out.row(i * times + k) = x.row(i);
    const int ia = a.id();
    return a.tape()->push(std::move(out), a.needs_grad(), [ia, times](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(ia);
        for (Index i = 0; i < ga.rows(); ++i)
            for (Index k = 0; k < times; ++k) ga.row(i) += g.row(i * times + k);
    });
}

// ---------------------------------------------------------------- domain kernels

/// Squared Euclidean distance between every row of x (K x d) and y (M x d).
inline Var pairwise_sqdist(Var x, Var y) {
    detail::require_same_tape(x, y);
    if (x.cols() != y.cols()) throw ShapeError("pairwise_sqdist: dimension mismatch");
    const Matrix& X = x.value();
    const Matrix& Y = y.value();
    Matrix out(X.rows(), Y.rows());
    for (Index i = 0; i < X.rows(); ++i)
        for (Index j = 0; j < Y.rows(); ++j) out(i, j) = (X.row(i) - Y.row(j)).squaredNorm();
    const int ix = x.id(), iy = y.id();
    return x.tape()->push(std::move(out), x.needs_grad() || y.needs_grad(), [ix, iy](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& X = t.value(ix);
        const Matrix& Y = t.value(iy);
        if (t.needs_grad(ix)) {
            Matrix& gx = t.grad(ix);
            gx.array() += 2.0 * (X.array().colwise() * g.rowwise().sum().array());
            gx.noalias() -= 2.0 * g * Y;
        }
        if (t.needs_grad(iy)) {
            Matrix& gy = t.grad(iy);
            gy.array() += 2.0 * (Y.array().colwise() * g.colwise().sum().transpose().array());
            gy.noalias() -= 2.0 * g.transpose() * X;
        }
    });
}

/// Per-row average displacement error. Rows of `pred` and `target` hold
/// interleaved coordinates (x0, y0, x1, y1, ...). Returns (rows x 1).
inline Var ade_rows(Var pred, const Matrix& target) {
    const Matrix& P = pred.value();
    if (P.rows() != target.rows() || P.cols() != target.cols() || P.cols() % 2 != 0)
        throw ShapeError("ade_rows: prediction/target shape mismatch");
    const Index steps = P.cols() / 2;
    Matrix out(P.rows(), 1);
    Matrix dir(P.rows(), P.cols());
    for (Index r = 0; r < P.rows(); ++r) {
        double acc = 0.0;
        for (Index s = 0; s < steps; ++s) {
            const double dx = P(r, 2 * s) - target(r, 2 * s);
            const double dy = P(r, 2 * s + 1) - target(r, 2 * s + 1);
            const double n = std::hypot(dx, dy);
            acc += n;
            dir(r, 2 * s) = n > 0.0 ? dx / n : 0.0;
            dir(r, 2 * s + 1) = n > 0.0 ? dy / n : 0.0;
        }
        out(r, 0) = acc / static_cast<double>(steps);
    }
    dir /= static_cast<double>(steps);
    const int ip = pred.id();
    return pred.tape()->push(std::move(out), pred.needs_grad(), [ip, dir = std::move(dir)](Tape& t, int self) {
        t.grad(ip).array() += dir.array().colwise() * t.grad(self).col(0).array();
    });
}

/// Minimum over consecutive groups of `group` rows of a column vector.
/// Gradient flows to the (first) minimiser of each group.
inline Var group_min(Var v, Index group) {
    const Matrix& x = v.value();
    if (x.cols() != 1 || group < 1 || x.rows() % group != 0) throw ShapeError("group_min: bad shape");
    const Index n = x.rows() / group;
    Matrix out(n, 1);
    std::vector<Index> arg(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Index best = i * group;
        for (Index k = 1; k < group; ++k)
            if (x(i * group + k, 0) < x(best, 0)) best = i * group + k;
        arg[static_cast<std::size_t>(i)] = best;
        out(i, 0) = x(best, 0);
    }
    const int iv = v.id();
    return v.tape()->push(std::move(out), v.needs_grad(), [iv, arg = std::move(arg)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& gv = t.grad(iv);
        for (std::size_t i = 0; i < arg.size(); ++i) gv(arg[i], 0) += g(static_cast<Index>(i), 0);
    });
}

}  // namespace agma::ad
