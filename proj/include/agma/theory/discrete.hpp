#pragma once

// Exact computations on finite latent (C states) and outcome (V values)
// supports.

#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "agma/util/csv.hpp"
#include "agma/util/errors.hpp"

namespace agma::theory {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

constexpr double kDistTol = 1e-12;
constexpr double kInequalityTol = 1e-12;

inline void require_distribution(const Vector& p, double tol = kDistTol) {
    if (p.size() == 0) throw ShapeError("empty distribution");
    if ((p.array() < 0.0).any() || !p.allFinite()) throw DomainError("distribution has negative or non-finite entries");
    if (std::fabs(p.sum() - 1.0) > tol) throw DomainError("distribution does not sum to 1");
}

/// Prior over z and sampler rows p(Y | z) for both the true and the
/// learned model, with X held fixed.
struct DiscreteModel {
    Vector p_z;
    Vector q_z;
    Matrix p_y;  ///< C x V
    Matrix q_y;  ///< C x V

    Eigen::Index states() const { return p_z.size(); }
    Eigen::Index outcomes() const { return p_y.cols(); }

    void validate(double tol = kDistTol) const {
        const auto C = p_z.size();
        if (q_z.size() != C || p_y.rows() != C || q_y.rows() != C || q_y.cols() != p_y.cols())
            throw ShapeError("discrete model: inconsistent shapes");
        require_distribution(p_z, tol);
        require_distribution(q_z, tol);
        for (Eigen::Index c = 0; c < C; ++c) {
            require_distribution(p_y.row(c).transpose(), tol);
            require_distribution(q_y.row(c).transpose(), tol);
        }
    }
};

/// sum_c prior_c sampler(c, .)
inline Vector marginal(const Vector& prior, const Matrix& sampler) {
    if (sampler.rows() != prior.size()) throw ShapeError("marginal: prior and sampler disagree in state count");
    return sampler.transpose() * prior;
}

struct Divergence {
    double value = 0.0;
    bool infinite = false;
};

/// KL(p || q) with 0 log 0 = 0; flagged infinity when q misses p's support.
inline Divergence kl(const Vector& p, const Vector& q) {
    if (p.size() != q.size()) throw ShapeError("kl: size mismatch");
    Divergence d;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) <= 0.0) continue;
        if (q(i) <= 0.0) return {std::numeric_limits<double>::infinity(), true};
        d.value += p(i) * std::log(p(i) / q(i));
    }
    return d;
}

inline double entropy(const Vector& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
}

// ---------------------------------------------------------------- decomposition

struct ErrorTerms {
    double eps_prior = 0.0;   ///< |sum_c (p(z_c) - q(z_c)) q(Y|z_c)|_1
    double eps_sample = 0.0;  ///< |sum_c p(z_c) (p(Y|z_c) - q(Y|z_c))|_1
    double l_dist = 0.0;      ///< KL(p(Y) || q(Y))
    bool infinite_kl = false;
};

inline ErrorTerms errors_decompose(const DiscreteModel& m) {
    m.validate();
    ErrorTerms e;
    e.eps_prior = (m.q_y.transpose() * (m.p_z - m.q_z)).lpNorm<1>();
    e.eps_sample = ((m.p_y - m.q_y).transpose() * m.p_z).lpNorm<1>();
    const Divergence d = kl(marginal(m.p_z, m.p_y), marginal(m.q_z, m.q_y));
    e.l_dist = d.value;
    e.infinite_kl = d.infinite;
    return e;
}

struct BoundCheck {
    double bound = 0.0;
    bool holds = true;
    double slack = 0.0;
    ErrorTerms terms;
};

/// L_dist >= (eps_prior - eps_sample)^2 / 2.
inline BoundCheck check_lower_bound(const DiscreteModel& m) {
    BoundCheck r;
    r.terms = errors_decompose(m);
    const double gap = r.terms.eps_prior - r.terms.eps_sample;
    r.bound = 0.5 * gap * gap;
    r.slack = r.terms.l_dist - r.bound;
    r.holds = r.terms.l_dist >= r.bound - kInequalityTol;
    return r;
}

struct PinskerCheck {
    double kl = 0.0;
    double half_l1_sq = 0.0;
    bool holds = true;
    bool infinite = false;
};

inline PinskerCheck check_pinsker(const Vector& p, const Vector& q) {
    require_distribution(p);
    require_distribution(q);
    const Divergence d = kl(p, q);
    const double l1 = (p - q).lpNorm<1>();
    PinskerCheck r{d.value, 0.5 * l1 * l1, true, d.infinite};
    r.holds = r.kl >= r.half_l1_sq - kInequalityTol;
    return r;
}

struct NecessityCheck {
    bool in_regime = false;  ///< eps_prior > eps_sample
    bool premise = false;    ///< L_dist < delta
    bool holds = true;
};

/// Whenever L_dist < delta, eps_prior < sqrt(2 delta) + eps_sample.
/// Vacuously true outside the eps_prior > eps_sample regime.
inline NecessityCheck check_necessity(const DiscreteModel& m, double delta) {
    if (!(delta > 0.0)) throw DomainError("check_necessity: delta must be positive");
    const ErrorTerms e = errors_decompose(m);
    NecessityCheck r;
    r.in_regime = e.eps_prior > e.eps_sample;
    r.premise = !e.infinite_kl && e.l_dist < delta;
    if (r.in_regime && r.premise) r.holds = e.eps_prior < std::sqrt(2.0 * delta) + e.eps_sample;
    return r;
}

// ---------------------------------------------------------------- information gap

/// I(Y; z) = sum_c p(c) KL(p(Y|c) || p(Y)).
inline double mutual_information(const Vector& prior, const Matrix& sampler) {
    const Vector py = marginal(prior, sampler);
    double i = 0.0;
    for (Eigen::Index c = 0; c < prior.size(); ++c)
        if (prior(c) > 0.0) i += prior(c) * kl(sampler.row(c).transpose(), py).value;
    return i;
}

/// H(Y | z) = sum_c p(c) H(p(Y|c)).
inline double conditional_entropy(const Vector& prior, const Matrix& sampler) {
    double h = 0.0;
    for (Eigen::Index c = 0; c < prior.size(); ++c) h += prior(c) * entropy(sampler.row(c).transpose());
    return h;
}

/// A latent space coarsened by mapping each original state to a group.
struct Coarsening {
    std::vector<int> group;  ///< original state -> coarse state
    Vector prior;            ///< p(z')
    Matrix sampler;          ///< p(Y | z')
};

inline Coarsening coarsen(const Vector& prior, const Matrix& sampler, const std::vector<int>& group) {
    if (static_cast<Eigen::Index>(group.size()) != prior.size()) throw ShapeError("coarsen: group map size differs");
    int groups = 0;
    for (int g : group) {
        if (g < 0) throw DomainError("coarsen: negative group");
        groups = std::max(groups, g + 1);
    }
    Coarsening out{group, Vector::Zero(groups), Matrix::Zero(groups, sampler.cols())};
    for (Eigen::Index c = 0; c < prior.size(); ++c) {
        out.prior(group[static_cast<std::size_t>(c)]) += prior(c);
        out.sampler.row(group[static_cast<std::size_t>(c)]) += prior(c) * sampler.row(c);
    }
    for (int g = 0; g < groups; ++g) {
        if (out.prior(g) > 0.0) out.sampler.row(g) /= out.prior(g);
        else out.sampler.row(g).setConstant(1.0 / static_cast<double>(sampler.cols()));
    }
    return out;
}

/// Expected KL from every fine state's outcome law to a sampler that only
/// sees the coarse state: sum_c p(c) KL(p(Y|c) || q(Y|z'(c))).
inline double coarse_residual(const Vector& prior, const Matrix& sampler, const std::vector<int>& group, const Matrix& coarse_sampler) {
    double r = 0.0;
    for (Eigen::Index c = 0; c < prior.size(); ++c) {
        if (prior(c) <= 0.0) continue;
        const Divergence d = kl(sampler.row(c).transpose(), coarse_sampler.row(group[static_cast<std::size_t>(c)]).transpose());
        if (d.infinite) return std::numeric_limits<double>::infinity();
        r += prior(c) * d.value;
    }
    return r;
}

struct InfoGapRow {
    int states = 0;              ///< latent states after coarsening
    double mutual_info = 0.0;    ///< I(Y; z') in nats
    double cond_entropy = 0.0;   ///< H(Y | z')
    double residual_kl = 0.0;    ///< best achievable expected KL given only z'
    double eps_sample = 0.0;     ///< sum_c p(c) |p(Y|c) - p(Y|z'(c))|_1 at that optimum
};

/// Merges latent states one at a time (state 1 into 0, then 2, ...) down
/// to a single state. The best coarse sampler is the within-group mixture,
/// so residual_kl equals the information lost by merging.
inline std::vector<InfoGapRow> info_gap_sweep(const Vector& prior, const Matrix& sampler) {
    require_distribution(prior);
    if (sampler.rows() != prior.size()) throw ShapeError("info_gap_sweep: shape mismatch");
    for (Eigen::Index c = 0; c < sampler.rows(); ++c) require_distribution(sampler.row(c).transpose());
    const auto C = static_cast<int>(prior.size());
    std::vector<InfoGapRow> rows;
    for (int merged = 0; merged < C; ++merged) {
        std::vector<int> group(static_cast<std::size_t>(C));
        for (int c = 0; c < C; ++c) group[static_cast<std::size_t>(c)] = c <= merged ? 0 : c - merged;
        const Coarsening k = coarsen(prior, sampler, group);
        InfoGapRow r;
        r.states = static_cast<int>(k.prior.size());
        r.mutual_info = mutual_information(k.prior, k.sampler);
        r.cond_entropy = conditional_entropy(k.prior, k.sampler);
        r.residual_kl = coarse_residual(prior, sampler, group, k.sampler);
        for (int c = 0; c < C; ++c)
            r.eps_sample += prior(c) * (sampler.row(c) - k.sampler.row(group[static_cast<std::size_t>(c)])).lpNorm<1>();
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------- random models

inline Vector dirichlet_ones(Eigen::Index n, std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(1.0, 1.0);
    Vector v(n);
    do {
        for (Eigen::Index i = 0; i < n; ++i) v(i) = gamma(rng);
    } while (!(v.sum() > 0.0));
    return v / v.sum();
}

inline DiscreteModel random_model(Eigen::Index C, Eigen::Index V, std::mt19937_64& rng) {
    DiscreteModel m{dirichlet_ones(C, rng), dirichlet_ones(C, rng), Matrix(C, V), Matrix(C, V)};
    for (Eigen::Index c = 0; c < C; ++c) {
        m.p_y.row(c) = dirichlet_ones(V, rng).transpose();
        m.q_y.row(c) = dirichlet_ones(V, rng).transpose();
    }
    return m;
}

/// A learned model equal to the true one.
inline DiscreteModel identical_model(Eigen::Index C, Eigen::Index V, std::mt19937_64& rng) {
    DiscreteModel m = random_model(C, V, rng);
    m.q_z = m.p_z;
    m.q_y = m.p_y;
    return m;
}

// ---------------------------------------------------------------- sweep

struct SweepOptions {
    std::size_t size = 100000;
    std::uint64_t seed = 0;
    int max_states = 5;
    int max_outcomes = 8;
    double delta = 0.5;
    bool identical = false;  ///< draw q = p (sanity mode)
};

struct SweepRow {
    std::size_t model_id = 0;
    int C = 0;
    int V = 0;
    double eps_prior = 0.0;
    double eps_sample = 0.0;
    double l_dist = 0.0;
    double bound = 0.0;
    double slack = 0.0;
    bool holds = true;
};

struct SweepSummary {
    std::vector<SweepRow> rows;
    std::size_t bound_violations = 0;
    std::size_t pinsker_violations = 0;
    std::size_t necessity_violations = 0;
    std::size_t necessity_checked = 0;  ///< models in regime with the premise met
    std::size_t infinite_kl = 0;

    std::size_t violations() const { return bound_violations + pinsker_violations + necessity_violations; }
};

/// Per model: the lower bound, Pinsker on its outcome marginals and on an
/// independent random pair, and the necessity condition at `delta`.
inline SweepSummary run_sweep(const SweepOptions& opt) {
    if (opt.size < 1) throw DomainError("sweep size must be at least 1");
    if (opt.max_states < 1 || opt.max_outcomes < 2) throw DomainError("sweep supports too small");
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<int> pick_c(1, opt.max_states);
    std::uniform_int_distribution<int> pick_v(2, opt.max_outcomes);
    SweepSummary s;
    s.rows.reserve(opt.size);
    for (std::size_t id = 0; id < opt.size; ++id) {
        const int C = pick_c(rng);
        const int V = pick_v(rng);
        const DiscreteModel m = opt.identical ? identical_model(C, V, rng) : random_model(C, V, rng);
        const BoundCheck b = check_lower_bound(m);
        if (b.terms.infinite_kl) ++s.infinite_kl;
        if (!b.holds) ++s.bound_violations;

        const PinskerCheck pm = check_pinsker(marginal(m.p_z, m.p_y), marginal(m.q_z, m.q_y));
        const Vector p = dirichlet_ones(V, rng);
        const Vector q = opt.identical ? p : dirichlet_ones(V, rng);
        const PinskerCheck pr = check_pinsker(p, q);
        if (!pm.holds || !pr.holds) ++s.pinsker_violations;

        const NecessityCheck n = check_necessity(m, opt.delta);
        if (n.in_regime && n.premise) ++s.necessity_checked;
        if (!n.holds) ++s.necessity_violations;

        s.rows.push_back({id, C, V, b.terms.eps_prior, b.terms.eps_sample, b.terms.l_dist, b.bound, b.slack, b.holds});
    }
    return s;
}

inline void write_sweep_csv(std::ostream& out, const SweepSummary& s) {
    out << "model_id,C,V,eps_prior,eps_sample,L_dist,bound,slack,holds\n";
    for (const SweepRow& r : s.rows) {
        out << r.model_id << ',' << r.C << ',' << r.V << ',' << util::fmt_double(r.eps_prior) << ',' << util::fmt_double(r.eps_sample)
            << ',' << util::fmt_double(r.l_dist) << ',' << util::fmt_double(r.bound) << ',' << util::fmt_double(r.slack) << ','
            << (r.holds ? 1 : 0) << '\n';
    }
}

}  // namespace agma::theory
