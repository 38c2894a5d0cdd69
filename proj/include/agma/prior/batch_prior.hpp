#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agma/ad/ops.hpp"
#include "agma/prior/mixture.hpp"
#include "agma/util/csv.hpp"
#include "agma/util/errors.hpp"

namespace agma::prior {

using Matrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct PairScores {
    Matrix similarity;  ///< S~, unit diagonal
    Matrix repulsion;   ///< R~, zero diagonal
};

struct AdjacencyOptions {
    double theta_sim = 0.7;
    double theta_rep = 0.3;
    double tau_sim = 0.1;
    double tau_rep = 0.1;

    void validate() const {
        if (!(tau_sim > 0.0) || !(tau_rep > 0.0)) throw ConfigError("adjacency temperatures must be positive");
    }
};

struct AdjacencyRelaxed {
    Matrix soft;      ///< A^ in [0, 1]
    BoolMatrix hard;  ///< A^ > 0.5 with a true diagonal
};

/// Clusters listed in order of their smallest member; `assignment[i]` is
/// the cluster index of agent i.
struct Partition {
    std::vector<std::vector<int>> clusters;
    std::vector<int> assignment;

    std::size_t size() const { return clusters.size(); }
};

// ---------------------------------------------------------------- scores

/// Mean elementwise product of every pair of rows.
inline Matrix mean_product(const Matrix& x) {
    if (x.rows() < 1 || x.cols() < 1) throw ShapeError("pair_scores: empty input");
    // blocked GEMM is not bitwise symmetric; mirror the upper triangle
    Matrix g = (x * x.transpose()) / static_cast<double>(x.cols());
    g.triangularView<Eigen::StrictlyLower>() = g.transpose();
    return g;
}

inline PairScores pair_scores(const Matrix& s, const Matrix& r) {
    if (s.rows() != r.rows() || s.cols() != r.cols()) throw ShapeError("pair_scores: s and r differ in shape");
    PairScores out{mean_product(s), mean_product(r)};
    out.similarity.diagonal().setOnes();
    out.repulsion.diagonal().setZero();
    return out;
}

/// Differentiable counterpart of pair_scores on tape variables.
inline std::pair<ad::Var, ad::Var> pair_scores(ad::Var s, ad::Var r) {
    if (s.rows() != r.rows() || s.cols() != r.cols()) throw ShapeError("pair_scores: s and r differ in shape");
    const auto n = s.rows();
    ad::Tape& tape = *s.tape();
    const Matrix off = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    const double inv_d = 1.0 / static_cast<double>(s.cols());
    const ad::Var offv = tape.constant(off);
    const ad::Var S = ad::add(ad::mul(ad::scale(ad::matmul_nt(s, s), inv_d), offv), tape.constant(Matrix::Identity(n, n)));
    const ad::Var R = ad::mul(ad::scale(ad::matmul_nt(r, r), inv_d), offv);
    return {S, R};
}

// ---------------------------------------------------------------- adjacency

inline BoolMatrix threshold_adjacency(const Matrix& soft) {
    BoolMatrix hard = (soft.array() > 0.5).matrix();
    hard.diagonal().setConstant(true);
    return hard;
}

inline AdjacencyRelaxed build_adjacency(const PairScores& scores, const AdjacencyOptions& opt = {}) {
    opt.validate();
    const Matrix& S = scores.similarity;
    const Matrix& R = scores.repulsion;
    if (S.rows() != S.cols() || R.rows() != S.rows() || R.cols() != S.cols())
        throw ShapeError("build_adjacency: score matrices must be square and equal in shape");
    AdjacencyRelaxed out;
    out.soft = S.binaryExpr(R, [&](double s, double r) {
        return ad::detail::sigmoid((s - opt.theta_sim) / opt.tau_sim) * ad::detail::sigmoid((opt.theta_rep - r) / opt.tau_rep);
    });
    out.hard = threshold_adjacency(out.soft);
    return out;
}

/// A^ on the tape, differentiable in S~, R~ and the 1x1 thresholds.
inline ad::Var build_adjacency(ad::Var S, ad::Var R, ad::Var theta_sim, ad::Var theta_rep, double tau_sim, double tau_rep) {
    if (!(tau_sim > 0.0) || !(tau_rep > 0.0)) throw ConfigError("adjacency temperatures must be positive");
    if (theta_sim.rows() != 1 || theta_sim.cols() != 1 || theta_rep.rows() != 1 || theta_rep.cols() != 1)
        throw ShapeError("build_adjacency: thresholds must be scalars");
    ad::Tape& tape = *S.tape();
    const auto n = S.rows();
    const ad::Var col = tape.constant(Matrix::Ones(n, 1));
    const ad::Var row = tape.constant(Matrix::Ones(1, n));
    const auto broadcast = [&](ad::Var th) { return ad::matmul(ad::matmul(col, th), row); };
    const ad::Var gs = ad::sigmoid(ad::scale(ad::sub(S, broadcast(theta_sim)), 1.0 / tau_sim));
    const ad::Var gr = ad::sigmoid(ad::scale(ad::sub(broadcast(theta_rep), R), 1.0 / tau_rep));
    return ad::mul(gs, gr);
}

// ---------------------------------------------------------------- components

inline Partition connected_components(const BoolMatrix& A) {
    const auto n = A.rows();
    if (A.cols() != n) throw ShapeError("connected_components: adjacency must be square");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!A(i, i)) throw ContractError("connected_components: adjacency diagonal must be true");
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (A(i, j) != A(j, i)) throw ContractError("connected_components: adjacency is not symmetric");
    }
    Partition p;
    p.assignment.assign(static_cast<std::size_t>(n), -1);
    for (Eigen::Index start = 0; start < n; ++start) {
        if (p.assignment[static_cast<std::size_t>(start)] >= 0) continue;
        const int label = static_cast<int>(p.clusters.size());
        std::vector<int> members;
        std::queue<Eigen::Index> frontier;
        frontier.push(start);
        p.assignment[static_cast<std::size_t>(start)] = label;
        while (!frontier.empty()) {
            const Eigen::Index u = frontier.front();
            frontier.pop();
            members.push_back(static_cast<int>(u));
            for (Eigen::Index v = 0; v < n; ++v) {
                if (A(u, v) && p.assignment[static_cast<std::size_t>(v)] < 0) {
                    p.assignment[static_cast<std::size_t>(v)] = label;
                    frontier.push(v);
                }
            }
        }
        std::sort(members.begin(), members.end());
        p.clusters.push_back(std::move(members));
    }
    return p;
}

inline void validate(const Partition& p, std::size_t n) {
    if (p.clusters.empty()) throw DomainError("partition is empty");
    if (p.assignment.size() != n) throw ContractError("partition does not cover every agent");
    std::vector<int> seen(n, 0);
    for (std::size_t k = 0; k < p.clusters.size(); ++k) {
        if (p.clusters[k].empty()) throw DomainError("partition contains an empty cluster");
        for (int i : p.clusters[k]) {
            if (i < 0 || static_cast<std::size_t>(i) >= n) throw ContractError("partition member out of range");
            if (seen[static_cast<std::size_t>(i)]++) throw ContractError("agent appears in two clusters");
            if (p.assignment[static_cast<std::size_t>(i)] != static_cast<int>(k))
                throw ContractError("partition assignment disagrees with clusters");
        }
    }
}

/// Hard same-cluster indicator.
inline Matrix membership_mask(const Partition& p) {
    const auto n = static_cast<Eigen::Index>(p.assignment.size());
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            m(i, j) = p.assignment[static_cast<std::size_t>(i)] == p.assignment[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    return m;
}

// ---------------------------------------------------------------- estimation

/// pi_k = n_k / N, cluster mean, unbiased variance with divisor
/// max(n_k - 1, 1), then floored at `var_floor`.
inline MixturePrior estimate_batch_gmm(const Matrix& features, const Partition& p, double var_floor = 1e-4) {
    validate(p, static_cast<std::size_t>(features.rows()));
    const double total = static_cast<double>(features.rows());
    MixturePrior out;
    for (const auto& members : p.clusters) {
        const auto n = static_cast<double>(members.size());
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(features.cols());
        for (int i : members) mean += features.row(i).transpose();
        mean /= n;
        Eigen::VectorXd var = Eigen::VectorXd::Zero(features.cols());
        for (int i : members) var += (features.row(i).transpose() - mean).array().square().matrix();
        var /= std::max(n - 1.0, 1.0);
        var = var.cwiseMax(var_floor);
        out.components.push_back({n / total, std::move(mean), std::move(var)});
    }
    return out;
}

/// Per-agent cluster statistics on the tape.
struct BatchGmmVars {
    ad::Var agent_mu;    ///< N x d, mean of each agent's cluster
    ad::Var agent_var;   ///< N x d
    ad::Var comp_mu;     ///< K x d
    ad::Var comp_var;    ///< K x d
    Eigen::RowVectorXd weights;  ///< pi_k = n_k / N
};

/// Cluster statistics whose forward value equals estimate_batch_gmm while
/// the backward pass reaches the relaxed adjacency. Pair weights are the
/// hard membership mask in the forward pass and A^ in the backward pass.
inline BatchGmmVars batch_gmm_vars(ad::Var features, ad::Var soft_adjacency, const Partition& p, double var_floor) {
    const auto n = features.rows();
    validate(p, static_cast<std::size_t>(n));
    ad::Tape& tape = *features.tape();
    const Matrix mask = membership_mask(p);
    const ad::Var W = ad::straight_through(mask, soft_adjacency);

    Matrix inv_div(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double c = static_cast<double>(p.clusters[static_cast<std::size_t>(p.assignment[static_cast<std::size_t>(i)])].size());
        inv_div(i, 0) = 1.0 / std::max(c - 1.0, 1.0);
    }
    const ad::Var rowsum = ad::sum_rows(W);
    const ad::Var wf = ad::matmul(W, features);
    const ad::Var mu = ad::mul_col(wf, ad::reciprocal(rowsum));
    // sum_j W_ij (f_j - mu_i)^2 expanded so every pair stays on the tape
    const ad::Var wf2 = ad::matmul(W, ad::square(features));
    const ad::Var spread = ad::add(ad::sub(wf2, ad::scale(ad::mul(mu, wf), 2.0)), ad::mul_col(ad::square(mu), rowsum));
    const ad::Var var = ad::clamp_min(ad::mul_col(spread, tape.constant(inv_div)), var_floor);

    std::vector<ad::Index> firsts;
    for (const auto& c : p.clusters) firsts.push_back(c.front());
    BatchGmmVars out{mu, var, ad::gather_rows(mu, firsts), ad::gather_rows(var, firsts),
                     Eigen::RowVectorXd(static_cast<Eigen::Index>(p.size()))};
    for (std::size_t k = 0; k < p.size(); ++k)
        out.weights(static_cast<Eigen::Index>(k)) = static_cast<double>(p.clusters[k].size()) / static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------- sampling

/// z = mu + sigma * eps for the agent's cluster component.
inline Eigen::VectorXd sample_batch_prior(const MixturePrior& prior, const std::vector<int>& assignment, std::size_t agent,
                                          std::mt19937_64& rng) {
    if (agent >= assignment.size()) throw DomainError("sample_batch_prior: agent has no cluster assignment");
    const int k = assignment[agent];
    if (k < 0 || static_cast<std::size_t>(k) >= prior.size()) throw DomainError("sample_batch_prior: agent has no cluster assignment");
    const auto& c = prior.components[static_cast<std::size_t>(k)];
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(c.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = c.mean(i) + std::sqrt(c.var(i)) * normal(rng);
    return z;
}

/// Reparameterised draw on the tape: mu + sqrt(var) * eps with eps fixed.
inline ad::Var reparameterize(ad::Var mu, ad::Var var, const Matrix& eps) {
    return ad::add(mu, ad::mul(ad::sqrt(var), mu.tape()->constant(eps)));
}

// ---------------------------------------------------------------- debug dump

/// Writes S.csv, R.csv, A_soft.csv, A.csv and partition.csv into `dir`.
inline void dump_batch_graph(const std::filesystem::path& dir, const PairScores& scores, const AdjacencyRelaxed& adj,
                             const Partition& p) {
    std::filesystem::create_directories(dir);
    util::write_matrix_csv((dir / "S.csv").string(), scores.similarity);
    util::write_matrix_csv((dir / "R.csv").string(), scores.repulsion);
    util::write_matrix_csv((dir / "A_soft.csv").string(), adj.soft);
    util::write_matrix_csv((dir / "A.csv").string(), adj.hard.cast<double>());
    std::ofstream out(dir / "partition.csv");
    if (!out) throw Error("cannot write partition.csv");
    out << "agent,cluster\n";
    for (std::size_t i = 0; i < p.assignment.size(); ++i) out << i << ',' << p.assignment[i] << '\n';
}

}  // namespace agma::prior
