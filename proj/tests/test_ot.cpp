#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "agma/ot/sinkhorn.hpp"
#include "oracles.hpp"

using namespace agma;
using namespace agma::ot;
using oracle::Matrix;
using oracle::random_matrix;
using oracle::random_simplex;
using Eigen::VectorXd;

namespace {

prior::MixturePrior mixture(std::initializer_list<std::pair<VectorXd, VectorXd>> comps) {
    prior::MixturePrior m;
    for (const auto& [mu, var] : comps) m.components.push_back({1.0 / static_cast<double>(comps.size()), mu, var});
    return m;
}

}  // namespace

// ------------------------------------------------------------------ cost

TEST(Cost, HandExamples) {
    const VectorXd z = VectorXd::Zero(2), one = VectorXd::Ones(2);
    EXPECT_EQ(w2_cost(mixture({{z, one}}), mixture({{z, one}}))(0, 0), 0.0);
    EXPECT_EQ(w2_cost(mixture({{z, one}}), mixture({{Eigen::Vector2d(3, 4), one}}))(0, 0), 25.0);
    EXPECT_EQ(w2_cost(mixture({{z, one}}), mixture({{z, Eigen::Vector2d(4, 9)}}))(0, 0), 5.0);
    EXPECT_THROW(w2_cost(mixture({{z, one}}), mixture({{VectorXd::Zero(3), VectorXd::Ones(3)}})), ShapeError);
}

TEST(Cost, TapeMatchesAndGradients) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        const double err = oracle::check_leaf_gradients(
            {random_matrix(4, 3, rng), random_matrix(4, 3, rng, 0.2, 2), random_matrix(2, 3, rng), random_matrix(2, 3, rng, 0.2, 2)},
            [](ad::Tape&, const auto& v) { return w2_cost(v[0], v[1], v[2], v[3]); }, rng);
        EXPECT_LE(err, 1e-3) << i;
    }
}

// ------------------------------------------------------------------ sinkhorn

TEST(Sinkhorn, ZeroCostGivesIndependentCoupling) {
    std::mt19937_64 rng(2);
    const VectorXd a = random_simplex(4, rng), b = random_simplex(3, rng);
    const TransportPlan p = sinkhorn(Matrix::Zero(4, 3), a, b);
    EXPECT_LE((p.P - a * b.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const double h = neg_entropy(a * b.transpose());
    EXPECT_NEAR(distill_loss(p, Matrix::Zero(4, 3)), 0.1 * h, 1e-12);
}

TEST(Sinkhorn, SingleCell) {
    const TransportPlan p = sinkhorn(Matrix::Constant(1, 1, 3.0), VectorXd::Ones(1), VectorXd::Ones(1));
    EXPECT_NEAR(p.P(0, 0), 1.0, 1e-15);
}

TEST(Sinkhorn, SmallEpsilonReachesPermutationPlan) {
    Matrix C(2, 2);
    C << 0, 1, 1, 0;
    const VectorXd u = VectorXd::Constant(2, 0.5);
    const TransportPlan p = sinkhorn(C, u, u, 0.01, 20);
    // the feasible couplings are [[t, .5-t], [.5-t, t]]; cost 1 - 2t is minimal at t = .5
    EXPECT_LE((p.P - Matrix::Identity(2, 2) * 0.5).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_EQ(distill_loss(Matrix::Identity(2, 2) * 0.5, C, 0.0), 0.0);
}

TEST(Sinkhorn, MarginalResidualsOnLargeProblems) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = std::uniform_int_distribution<int>(1, 8)(rng);
        const Matrix C = random_matrix(100, k, rng, 0, 1);  // convergence rate degrades like exp(-max C / eps)
        const VectorXd a = random_simplex(100, rng), b = random_simplex(k, rng);
        const TransportPlan p20 = sinkhorn(C, a, b, 0.1, 20);
        EXPECT_LE(p20.row_residual + p20.col_residual, 1e-3) << trial;
        const TransportPlan p200 = sinkhorn(C, a, b, 0.1, 200);
        EXPECT_LE(p200.row_residual + p200.col_residual, 1e-6) << trial;
        EXPECT_GE(p200.P.minCoeff(), 0.0);
    }
}

TEST(Sinkhorn, PermutationInvariant) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix C = random_matrix(5, 4, rng, 0, 2);
        const VectorXd a = random_simplex(5, rng), b = random_simplex(4, rng);
        Eigen::PermutationMatrix<Eigen::Dynamic> pr(5), pc(4);
        pr.setIdentity();
        pc.setIdentity();
        std::shuffle(pr.indices().data(), pr.indices().data() + 5, rng);
        std::shuffle(pc.indices().data(), pc.indices().data() + 4, rng);
        const TransportPlan base = sinkhorn(C, a, b);
        const TransportPlan perm = sinkhorn(pr * C * pc, pr * a, pc.transpose() * b);
        EXPECT_LE((pr * base.P * pc - perm.P).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Sinkhorn, LargeEpsilonTendsToIndependentCoupling) {
    std::mt19937_64 rng(5);
    const Matrix C = random_matrix(4, 3, rng, 0, 1);
    const VectorXd a = random_simplex(4, rng), b = random_simplex(3, rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {1.0, 10.0, 100.0, 1e4}) {
        const double gap = (sinkhorn(C, a, b, eps, 200).P - a * b.transpose()).cwiseAbs().maxCoeff();
        EXPECT_LT(gap, prev);
        prev = gap;
    }
    EXPECT_LE(prev, 1e-4);
}

TEST(Sinkhorn, ConvergesToExactCostFromAbove) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = std::uniform_int_distribution<int>(1, 5)(rng), n = std::uniform_int_distribution<int>(1, 5)(rng);
        const Matrix C = random_matrix(m, n, rng, 0, 1);
        const VectorXd a = random_simplex(m, rng), b = random_simplex(n, rng);
        const double lp = oracle::transport_lp(C, a, b);
        double prev = std::numeric_limits<double>::infinity();
        for (double eps : {0.5, 0.1, 0.03, 0.01}) {
            const TransportPlan p = sinkhorn(C, a, b, eps, 3000);
            const double cost = p.P.cwiseProduct(C).sum();
            EXPECT_GE(cost, lp - 1e-9);
            EXPECT_LE(cost, prev + 1e-9);
            prev = cost;
        }
        EXPECT_LE(prev - lp, 1e-2);
    }
}

TEST(Sinkhorn, DegenerateMarginalReportedNotThrown) {
    Matrix C = Matrix::Zero(2, 2);
    VectorXd a(2), b(2);
    a << 1.0, 0.0;
    b << 0.25, 0.75;
    TransportPlan p;
    EXPECT_NO_THROW(p = sinkhorn(C, a, b));
    EXPECT_EQ(p.P.row(1).sum(), 0.0);
    EXPECT_LE(p.row_residual + p.col_residual, 1e-12);
    b << 0.5, 0.6;
    EXPECT_GT(sinkhorn(C, a, b).row_residual + sinkhorn(C, a, b).col_residual, 0.05);
}

TEST(Sinkhorn, InvalidInputs) {
    EXPECT_THROW(sinkhorn(Matrix::Zero(2, 2), VectorXd::Ones(3) / 3, VectorXd::Ones(2) / 2), ShapeError);
    EXPECT_THROW(sinkhorn(Matrix::Zero(2, 2), VectorXd::Ones(2) / 2, VectorXd::Ones(2) / 2, 0.0), DomainError);
}

// ------------------------------------------------------------------ objective

TEST(Objective, HandExamples) {
    Matrix C(2, 2);
    C << 0, 1, 1, 0;
    const Matrix P = Matrix::Identity(2, 2) * 0.5;
    EXPECT_NEAR(distill_loss(P, C, 0.1), 0.1 * 2 * 0.5 * (std::log(0.5) - 1.0), 1e-15);
    EXPECT_EQ(neg_entropy(Matrix::Zero(2, 2)), 0.0);
}

TEST(Objective, UnrolledMatchesPlainSolver) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix C = random_matrix(6, 3, rng, 0, 3);
        const VectorXd a = random_simplex(6, rng), b = random_simplex(3, rng);
        ad::Tape t;
        const UnrolledResult u = sinkhorn_loss(t.constant(C), t.constant(a.transpose()), b, 0.1, 20);
        const TransportPlan p = sinkhorn(C, a, b, 0.1, 20);
        EXPECT_LE((u.plan.value() - p.P).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(u.loss.scalar(), distill_loss(p, C), 1e-12);
    }
}

TEST(Objective, UnrolledDropsZeroMassRows) {
    std::mt19937_64 rng(8);
    const Matrix C = random_matrix(3, 2, rng, 0, 1);
    VectorXd a(3);
    a << 0.4, 0.0, 0.6;
    const VectorXd b = random_simplex(2, rng);
    ad::Tape t;
    const UnrolledResult u = sinkhorn_loss(t.constant(C), t.constant(a.transpose()), b);
    EXPECT_EQ(u.rows, (std::vector<Eigen::Index>{0, 2}));
    EXPECT_NEAR(u.loss.scalar(), distill_loss(sinkhorn(C, a, b), C), 1e-12);
}

TEST(Objective, UnrolledGradients) {
    // through 20 sweeps w.r.t. both means, both spreads and the row marginal
    std::mt19937_64 rng(9);
    for (int i = 0; i < 20; ++i) {
        const int kg = 5, kb = 3, d = 2;
        const VectorXd b = random_simplex(kb, rng);
        const double err = oracle::check_leaf_gradients(
            {random_matrix(kg, d, rng), random_matrix(kg, d, rng, 0.3, 1.5), random_matrix(kb, d, rng), random_matrix(kb, d, rng, 0.3, 1.5),
             random_simplex(kg, rng).transpose()},
            [&](ad::Tape&, const auto& v) { return sinkhorn_loss(w2_cost(v[0], v[1], v[2], v[3]), v[4], b, 0.1, 20).loss; }, rng);
        EXPECT_LE(err, 1e-3) << i;
    }
}

TEST(Objective, MovingTowardPartnerLowersLoss) {
    std::mt19937_64 rng(10);
    int decreased = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        const Matrix mg = random_matrix(6, 2, rng, -2, 2), sg = random_matrix(6, 2, rng, 0.3, 1);
        Matrix mb = random_matrix(3, 2, rng, -2, 2);
        const Matrix sb = random_matrix(3, 2, rng, 0.3, 1);
        const VectorXd a = random_simplex(6, rng), b = random_simplex(3, rng);
        auto loss = [&](const Matrix& batch_mu) {
            ad::Tape t;
            return sinkhorn_loss(w2_cost(t.constant(mg), t.constant(sg), t.constant(batch_mu), t.constant(sb)), t.constant(a.transpose()), b)
                .loss.scalar();
        };
        ad::Tape t;
        const UnrolledResult u =
            sinkhorn_loss(w2_cost(t.constant(mg), t.constant(sg), t.constant(mb), t.constant(sb)), t.constant(a.transpose()), b);
        const int k = std::uniform_int_distribution<int>(0, 2)(rng);
        Eigen::Index partner = 0;
        u.plan.value().col(k).maxCoeff(&partner);
        Matrix moved = mb;
        moved.row(k) += 0.05 * (mg.row(u.rows[static_cast<std::size_t>(partner)]) - mb.row(k));
        if (loss(moved) < loss(mb)) ++decreased;
    }
    EXPECT_GE(decreased, trials * 9 / 10);
}

TEST(Export, PlanCsvHasHeaderAndRows) {
    std::mt19937_64 rng(11);
    const TransportPlan p = sinkhorn(random_matrix(3, 2, rng, 0, 1), random_simplex(3, rng), random_simplex(2, rng));
    std::stringstream ss;
    write_plan_csv(ss, p);
    std::string first;
    std::getline(ss, first);
    EXPECT_EQ(first.rfind("# eps=", 0), 0u);
    int lines = 0;
    for (std::string line; std::getline(ss, line);) ++lines;
    EXPECT_GE(lines, 3);
}
