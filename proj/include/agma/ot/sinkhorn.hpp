#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agma/ad/ops.hpp"
#include "agma/prior/mixture.hpp"
#include "agma/util/csv.hpp"
#include "agma/util/errors.hpp"

namespace agma::ot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// C_gk = |mu_g - mu_k|^2 + sum_i (sigma_g,i - sigma_k,i)^2.
inline Matrix w2_cost(const prior::MixturePrior& global, const prior::MixturePrior& batch) {
    if (global.dim() != batch.dim()) throw ShapeError("w2_cost: mixtures differ in dimension");
    Matrix C(static_cast<Eigen::Index>(global.size()), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t g = 0; g < global.size(); ++g) {
        const auto& a = global.components[g];
        const Vector sa = a.var.cwiseSqrt();
        for (std::size_t k = 0; k < batch.size(); ++k) {
            const auto& b = batch.components[k];
            C(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(k)) =
                (a.mean - b.mean).squaredNorm() + (sa - b.var.cwiseSqrt()).squaredNorm();
        }
    }
    return C;
}

/// Cost matrix on the tape from means and standard deviations.
inline ad::Var w2_cost(ad::Var mu_g, ad::Var sigma_g, ad::Var mu_b, ad::Var sigma_b) {
    return ad::add(ad::pairwise_sqdist(mu_g, mu_b), ad::pairwise_sqdist(sigma_g, sigma_b));
}

struct TransportPlan {
    Matrix P;
    Vector a;
    Vector b;
    double eps = 0.0;
    int iters = 0;
    double row_residual = 0.0;  ///< |P 1 - a|_1
    double col_residual = 0.0;  ///< |P^T 1 - b|_1
};

namespace detail {

inline void check_marginal(const Vector& m, const char* what) {
    if (m.size() == 0) throw ShapeError(std::string("sinkhorn: empty ") + what);
    if ((m.array() < 0.0).any() || !m.allFinite()) throw DomainError(std::string("sinkhorn: invalid ") + what);
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

inline double lse(const double* v, Eigen::Index n, Eigen::Index stride) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) top = std::max(top, v[i * stride]);
    if (std::isinf(top)) return top;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i * stride] - top);
    return top + std::log(s);
}

}  // namespace detail

/// Log-domain Sinkhorn for min <P, C> + eps sum P (log P - 1) subject to
/// P 1 = a and P^T 1 = b. Starts from g = 0 and alternates f then g
/// updates, so column marginals are exact after each sweep.
inline TransportPlan sinkhorn(const Matrix& C, const Vector& a, const Vector& b, double eps = 0.1, int iters = 20) {
    if (C.rows() != a.size() || C.cols() != b.size()) throw ShapeError("sinkhorn: cost shape does not match marginals");
    detail::check_marginal(a, "row marginal");
    detail::check_marginal(b, "column marginal");
    if (!(eps > 0.0)) throw DomainError("sinkhorn: eps must be positive");
    if (iters < 0) throw DomainError("sinkhorn: iteration count must be nonnegative");
    const Eigen::Index m = C.rows();
    const Eigen::Index n = C.cols();
    Vector loga(m), logb(n);
    for (Eigen::Index i = 0; i < m; ++i) loga(i) = detail::safe_log(a(i));
    for (Eigen::Index j = 0; j < n; ++j) logb(j) = detail::safe_log(b(j));

    Vector f = Vector::Zero(m);
    Vector g = Vector::Zero(n);
    Matrix work(m, n);  // column-major: work.col(j) contiguous
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int it = 0; it < iters; ++it) {
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = (g(j) - C(i, j)) / eps;
            f(i) = std::isinf(loga(i)) ? loga(i) : eps * (loga(i) - detail::lse(row.data(), n, 1));
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < m; ++i) work(i, j) = (f(i) - C(i, j)) / eps;
            g(j) = std::isinf(logb(j)) ? logb(j) : eps * (logb(j) - detail::lse(&work(0, j), m, 1));
        }
    }
    TransportPlan out;
    out.P.resize(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double e = f(i) + g(j) - C(i, j);
            out.P(i, j) = std::isinf(f(i)) || std::isinf(g(j)) ? 0.0 : std::exp(e / eps);
        }
    out.a = a;
    out.b = b;
    out.eps = eps;
    out.iters = iters;
    out.row_residual = (out.P.rowwise().sum() - a).lpNorm<1>();
    out.col_residual = (out.P.colwise().sum().transpose() - b).lpNorm<1>();
    return out;
}

/// sum P (log P - 1) with 0 log 0 = 0.
inline double neg_entropy(const Matrix& P) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < P.size(); ++i) {
        const double p = P.data()[i];
        if (p > 0.0) h += p * (std::log(p) - 1.0);
    }
    return h;
}

/// <P, C> + eps H(P).
inline double distill_loss(const TransportPlan& plan, const Matrix& C) {
    if (plan.P.rows() != C.rows() || plan.P.cols() != C.cols()) throw ShapeError("distill_loss: plan and cost differ in shape");
    return plan.P.cwiseProduct(C).sum() + plan.eps * neg_entropy(plan.P);
}

inline double distill_loss(const Matrix& P, const Matrix& C, double eps) {
    if (P.rows() != C.rows() || P.cols() != C.cols()) throw ShapeError("distill_loss: plan and cost differ in shape");
    return P.cwiseProduct(C).sum() + eps * neg_entropy(P);
}

// ---------------------------------------------------------------- unrolled

struct UnrolledResult {
    ad::Var loss;  ///< <P, C> + eps H(P), 1 x 1
    ad::Var plan;  ///< P restricted to rows with positive mass
    std::vector<Eigen::Index> rows;  ///< original row index of each plan row
};

/// The transport objective with P produced by `iters` log-domain Sinkhorn
/// sweeps recorded on the tape. `a` is 1 x K; rows where a is zero carry
/// no mass and are dropped. `b` must be strictly positive.
inline UnrolledResult sinkhorn_loss(ad::Var C, ad::Var a, const Vector& b, double eps = 0.1, int iters = 20) {
    if (a.rows() != 1 || a.cols() != C.rows() || C.cols() != b.size()) throw ShapeError("sinkhorn_loss: shapes disagree");
    if (!(eps > 0.0)) throw DomainError("sinkhorn: eps must be positive");
    if (!(b.array() > 0.0).all()) throw DomainError("sinkhorn_loss: column marginal must be positive");
    ad::Tape& tape = *C.tape();
    UnrolledResult out;
    for (Eigen::Index g = 0; g < a.cols(); ++g)
        if (a.value()(0, g) > 0.0) out.rows.push_back(g);
    if (out.rows.empty()) throw DomainError("sinkhorn_loss: row marginal has no mass");
    const ad::Var Cs = ad::gather_rows(C, out.rows);
    const ad::Var loga = ad::log(ad::gather_rows(ad::transpose(a), out.rows));  // m x 1
    const ad::Var logb = tape.constant(b.array().log().matrix().transpose());   // 1 x n
    const ad::Var negC = ad::scale(Cs, -1.0 / eps);

    ad::Var f = tape.constant(Matrix::Zero(Cs.rows(), 1));
    ad::Var g = tape.constant(Matrix::Zero(1, Cs.cols()));
    for (int it = 0; it < iters; ++it) {
        f = ad::scale(ad::sub(loga, ad::logsumexp_rows(ad::add_row(negC, ad::scale(g, 1.0 / eps)))), eps);
        g = ad::scale(ad::sub(logb, ad::logsumexp_cols(ad::add_col(negC, ad::scale(f, 1.0 / eps)))), eps);
    }
    const ad::Var logP = ad::add_row(ad::add_col(negC, ad::scale(f, 1.0 / eps)), ad::scale(g, 1.0 / eps));
    const ad::Var P = ad::exp(logP);
    out.plan = P;
    out.loss = ad::add(ad::sum(ad::mul(P, Cs)), ad::scale(ad::sum(ad::mul(P, ad::add_scalar(logP, -1.0))), eps));
    return out;
}

// ---------------------------------------------------------------- export

/// Comment header with eps, iteration count and residuals, then P.
inline void write_plan_csv(std::ostream& out, const TransportPlan& plan) {
    out << "# eps=" << util::fmt_double(plan.eps) << " iters=" << plan.iters << " row_residual=" << util::fmt_double(plan.row_residual)
        << " col_residual=" << util::fmt_double(plan.col_residual) << '\n';
    util::write_matrix_csv(out, plan.P);
}

}  // namespace agma::ot
