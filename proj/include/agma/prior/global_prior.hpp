#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "agma/ad/ops.hpp"
#include "agma/nets/model.hpp"
#include "agma/prior/mixture.hpp"
#include "agma/util/errors.hpp"

namespace agma::prior {

/// Attention weights over the components of a global mixture.
struct ConditionedPrior {
    Eigen::VectorXd weights;
    MixturePrior gmm;

    void validate(double tol = 1e-6) const {
        if (static_cast<std::size_t>(weights.size()) != gmm.size()) throw ShapeError("conditioned prior: weight count differs from components");
        if (weights.size() == 0) throw DomainError("conditioned prior: no components");
        if ((weights.array() < 0.0).any() || !weights.allFinite()) throw DomainError("conditioned prior: invalid weights");
        if (std::fabs(weights.sum() - 1.0) > tol) throw DomainError("conditioned prior: weights do not sum to 1");
    }
};

/// Value snapshot of the model's global mixture.
inline MixturePrior global_mixture(nets::Model& model) {
    ad::Tape tape;
    nets::Binder p(tape, model.params());
    const nets::GmmVars g = model.global_gmm(p);
    MixturePrior m;
    for (Eigen::Index k = 0; k < g.mu.rows(); ++k)
        m.components.push_back({g.weights.value()(0, k), g.mu.value().row(k).transpose(), g.var.value().row(k).transpose()});
    return m;
}

/// Cross-attention weights of one past embedding over `gmm`.
inline ConditionedPrior condition(nets::Model& model, const Eigen::RowVectorXd& f_past, const MixturePrior& gmm) {
    if (gmm.size() == 0) throw DomainError("condition: empty mixture");
    ad::Tape tape;
    nets::Binder p(tape, model.params());
    const ad::Var a = model.cross_attention(p, tape.constant(f_past), tape.constant(gmm.means()), tape.constant(gmm.variances()),
                                            tape.constant(gmm.weights().transpose()));
    return {a.value().row(0).transpose(), gmm};
}

// ---------------------------------------------------------------- Gumbel selection

inline double draw_gumbel(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    while (x <= 0.0) x = u(rng);
    return -std::log(-std::log(x));
}

inline Eigen::VectorXd draw_gumbel(Eigen::Index n, std::mt19937_64& rng) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) g(i) = draw_gumbel(rng);
    return g;
}

inline void require_selectable(const Eigen::VectorXd& a) {
    if (a.size() == 0 || !(a.array() > 0.0).any()) throw DomainError("gumbel selection: all weights are zero");
    if ((a.array() < 0.0).any() || !a.allFinite()) throw DomainError("gumbel selection: invalid weights");
}

/// softmax((log a + G) / tau); zero-weight components stay at zero.
inline Eigen::VectorXd gumbel_softmax(const Eigen::VectorXd& a, const Eigen::VectorXd& gumbel, double tau) {
    require_selectable(a);
    if (!(tau > 0.0)) throw DomainError("gumbel selection: temperature must be positive");
    if (gumbel.size() != a.size()) throw ShapeError("gumbel selection: noise size differs");
    Eigen::VectorXd logits = Eigen::VectorXd::Constant(a.size(), -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < a.size(); ++g) {
        if (a(g) <= 0.0) continue;
        logits(g) = (std::log(a(g)) + gumbel(g)) / tau;
        top = std::max(top, logits(g));
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(a.size());
    for (Eigen::Index g = 0; g < a.size(); ++g)
        if (a(g) > 0.0) out(g) = std::exp(logits(g) - top);
    return out / out.sum();
}

/// argmax(log a + G), the zero-temperature limit of gumbel_softmax.
inline Eigen::Index gumbel_argmax(const Eigen::VectorXd& a, const Eigen::VectorXd& gumbel) {
    require_selectable(a);
    Eigen::Index best = -1;
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < a.size(); ++g) {
        if (a(g) <= 0.0) continue;
        const double v = std::log(a(g)) + gumbel(g);
        if (best < 0 || v > top) {
            top = v;
            best = g;
        }
    }
    return best;
}

inline Eigen::VectorXd gumbel_select(const Eigen::VectorXd& a, double tau, std::mt19937_64& rng) {
    require_selectable(a);
    if (!(tau > 0.0)) throw DomainError("gumbel selection: temperature must be positive");
    return gumbel_softmax(a, draw_gumbel(a.size(), rng), tau);
}

// ---------------------------------------------------------------- sampling

struct SampleOptions {
    double tau = 1.0;
    bool hard = false;  ///< zero-temperature selection of a single component
};

/// One latent code. Soft mode mixes reparameterised component draws with
/// the Gumbel-softmax vector; hard mode draws from the selected component.
inline Eigen::VectorXd sample_global(const ConditionedPrior& prior, const SampleOptions& opt, std::mt19937_64& rng) {
    prior.validate();
    const Eigen::VectorXd G = draw_gumbel(prior.weights.size(), rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto d = prior.gmm.dim();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
    if (opt.hard) {
        const auto& c = prior.gmm.components[static_cast<std::size_t>(gumbel_argmax(prior.weights, G))];
        for (Eigen::Index i = 0; i < d; ++i) z(i) = c.mean(i) + std::sqrt(c.var(i)) * normal(rng);
        return z;
    }
    const Eigen::VectorXd sel = gumbel_softmax(prior.weights, G, opt.tau);
    for (std::size_t g = 0; g < prior.gmm.size(); ++g) {
        const double w = sel(static_cast<Eigen::Index>(g));
        if (w == 0.0) continue;
        const auto& c = prior.gmm.components[g];
        for (Eigen::Index i = 0; i < d; ++i) z(i) += w * (c.mean(i) + std::sqrt(c.var(i)) * normal(rng));
    }
    return z;
}

/// log sum_g a_g N(z; mu_g, diag var_g).
inline double log_density(const ConditionedPrior& prior, const Eigen::VectorXd& z) {
    prior.validate();
    if (!z.allFinite()) throw DomainError("log_density: non-finite code");
    return log_density(prior.gmm, z, &prior.weights);
}

// ---------------------------------------------------------------- tape ops

/// Row-wise Gumbel-softmax of attention rows `a` (R x K) with fixed noise.
/// Entries with a = 0 stay exactly 0 and receive no gradient.
inline ad::Var gumbel_softmax_rows(ad::Var a, const Eigen::MatrixXd& gumbel, double tau) {
    const Eigen::MatrixXd& A = a.value();
    if (gumbel.rows() != A.rows() || gumbel.cols() != A.cols()) throw ShapeError("gumbel_softmax_rows: noise shape differs");
    if (!(tau > 0.0)) throw DomainError("gumbel selection: temperature must be positive");
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r)
        y.row(r) = gumbel_softmax(A.row(r).transpose(), gumbel.row(r).transpose(), tau).transpose();
    const int ia = a.id();
    return a.tape()->push(std::move(y), a.needs_grad(), [ia, tau](ad::Tape& t, int self) {
        const Eigen::MatrixXd& y = t.value(self);
        const Eigen::MatrixXd& g = t.grad(self);
        const Eigen::MatrixXd& A = t.value(ia);
        Eigen::MatrixXd& ga = t.grad(ia);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const double dot = y.row(r).dot(g.row(r));
            for (Eigen::Index k = 0; k < y.cols(); ++k)
                if (A(r, k) > 0.0) ga(r, k) += y(r, k) * (g(r, k) - dot) / (tau * A(r, k));
        }
    });
}

/// z = sum_g s_g (mu_g + sigma_g * eps_g) for selection rows `sel` (R x K).
/// Given the selection the component noise sums to a single Gaussian with
/// variance sum_g s_g^2 var_g, so one standard-normal row `eps` (R x d)
/// carries it.
inline ad::Var mix_components(ad::Var sel, ad::Var mu, ad::Var var, const Eigen::MatrixXd& eps) {
    const ad::Var mean = ad::matmul(sel, mu);
    const ad::Var spread = ad::sqrt(ad::matmul(ad::square(sel), var));
    return ad::add(mean, ad::mul(spread, sel.tape()->constant(eps)));
}

/// One-hot rows at argmax(log a + G).
inline Eigen::MatrixXd hard_selection(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gumbel) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) out(r, gumbel_argmax(a.row(r).transpose(), gumbel.row(r).transpose())) = 1.0;
    return out;
}

}  // namespace agma::prior
