#pragma once

// 1.5-entmax: p_i = max(z_i / 2 - tau, 0)^2 with tau chosen so that sum p = 1.
// Sparse like sparsemax, smooth like softmax in the interior of its support.

#include <cmath>

#include "agma/ad/ops.hpp"

namespace agma::nets {

struct EntmaxOptions {
    double tolerance = 1e-9;
    int max_iter = 100;
};

/// Solves for the threshold by bisection on f(tau) = sum_i p_i(tau) - 1,
/// which is continuous and nonincreasing. The result is renormalised.
inline Eigen::VectorXd entmax15(const Eigen::VectorXd& z, const EntmaxOptions& opt = {}) {
    if (z.size() == 0) throw DomainError("entmax15: empty input");
    if (!z.allFinite()) throw DomainError("entmax15: non-finite score");
    const Eigen::ArrayXd half = z.array() / 2.0;
    const double top = half.maxCoeff();
    double lo = top - 1.0;  // p_max = 1 here, so f(lo) >= 0
    double hi = top;        // all p = 0 here, so f(hi) = -1
    auto mass = [&](double tau) { return (half - tau).max(0.0).square().sum(); };
    double tau = 0.5 * (lo + hi);
    for (int it = 0; it < opt.max_iter; ++it) {
        tau = 0.5 * (lo + hi);
        const double f = mass(tau) - 1.0;
        if (std::fabs(f) <= opt.tolerance) break;
        if (f > 0.0) lo = tau;
        else hi = tau;
    }
    // Once the support is identified, tau solves sum_S (h_i - tau)^2 = 1
    // exactly; take the smaller root and keep it if the support is unchanged.
    double k = 0.0, s1 = 0.0, s2 = 0.0;
    for (Eigen::Index i = 0; i < half.size(); ++i) {
        if (half(i) > tau) {
            k += 1.0;
            s1 += half(i);
            s2 += half(i) * half(i);
        }
    }
    const double disc = s1 * s1 - k * (s2 - 1.0);
    if (k > 0.0 && disc >= 0.0) {
        const double exact = (s1 - std::sqrt(disc)) / k;
        bool same_support = true;
        for (Eigen::Index i = 0; i < half.size() && same_support; ++i)
            same_support = (half(i) > tau) == (half(i) > exact);
        if (same_support) tau = exact;
    }
    Eigen::VectorXd p = (half - tau).max(0.0).square().matrix();
    p /= p.sum();
    return p;
}

/// Row-wise 1.5-entmax on the tape. On the support the Jacobian is
/// diag(s) - s s^T / sum(s) with s = sqrt(p).
inline ad::Var entmax15_rows(ad::Var a, const EntmaxOptions& opt = {}) {
    const ad::Matrix& x = a.value();
    ad::Matrix y(x.rows(), x.cols());
    for (ad::Index i = 0; i < x.rows(); ++i) y.row(i) = entmax15(x.row(i).transpose(), opt).transpose();
    const int ia = a.id();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia](ad::Tape& t, int self) {
        const ad::Matrix& y = t.value(self);
        const ad::Matrix& g = t.grad(self);
        ad::Matrix& ga = t.grad(ia);
        for (ad::Index i = 0; i < y.rows(); ++i) {
            const Eigen::RowVectorXd s = y.row(i).array().sqrt().matrix();
            const double ssum = s.sum();
            const double q = s.dot(g.row(i)) / ssum;
            ga.row(i).array() += s.array() * (g.row(i).array() - q);
        }
    });
}

}  // namespace agma::nets
