#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "agma/core/ethucy.hpp"
#include "agma/core/synthetic.hpp"
#include "agma/core/trajectory.hpp"
#include "oracles.hpp"

using namespace agma;

namespace {

Trajectory random_traj(int T, std::mt19937_64& rng) {
    Trajectory t(T, 2);
    t = oracle::random_matrix(T, 2, rng, -5, 5);
    return t;
}

Trajectory shifted(const Trajectory& t, double dx, double dy) {
    Trajectory o = t;
    o.col(0).array() += dx;
    o.col(1).array() += dy;
    return o;
}

}  // namespace

TEST(Metrics, AdeConstantOffsets) {
    std::mt19937_64 rng(1);
    const Trajectory gt = random_traj(12, rng);
    EXPECT_EQ(ade(gt, gt), 0.0);
    EXPECT_NEAR(ade(shifted(gt, 1, 0), gt), 1.0, 1e-12);
    EXPECT_NEAR(ade(shifted(gt, 3, 4), gt), 5.0, 1e-12);
}

TEST(Metrics, FdeUsesFinalStepOnly) {
    std::mt19937_64 rng(2);
    const Trajectory gt = random_traj(12, rng);
    EXPECT_EQ(fde(gt, gt), 0.0);
    Trajectory p = random_traj(12, rng);
    p.row(11) = gt.row(11) + Eigen::RowVector2d(0, 2);
    EXPECT_NEAR(fde(p, gt), 2.0, 1e-12);
    EXPECT_NEAR(fde(shifted(gt, 3, 4), gt), 5.0, 1e-12);
}

TEST(Metrics, LengthMismatchIsShapeError) {
    std::mt19937_64 rng(3);
    EXPECT_THROW(ade(random_traj(12, rng), random_traj(11, rng)), ShapeError);
    EXPECT_THROW(fde(random_traj(12, rng), random_traj(11, rng)), ShapeError);
}

TEST(Metrics, SymmetryAndTriangleInequality) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const Trajectory a = random_traj(12, rng), b = random_traj(12, rng), c = random_traj(12, rng);
        EXPECT_GE(ade(a, b), 0.0);
        EXPECT_DOUBLE_EQ(ade(a, b), ade(b, a));
        EXPECT_DOUBLE_EQ(fde(a, b), fde(b, a));
        for (int t = 0; t < 12; ++t) {
            const double ab = (a.row(t) - b.row(t)).norm(), bc = (b.row(t) - c.row(t)).norm(), ac = (a.row(t) - c.row(t)).norm();
            EXPECT_LE(ac, ab + bc + 1e-12);
        }
        EXPECT_LE(ade(a, c), ade(a, b) + ade(b, c) + 1e-12);
    }
}

TEST(MinOfN, SingleSampleAndTwoOffsets) {
    std::mt19937_64 rng(5);
    const Trajectory gt = random_traj(12, rng);
    PredictionSet one{{shifted(gt, 3, 4)}};
    const MinOfN m1 = min_of_n(one, gt);
    EXPECT_DOUBLE_EQ(m1.min_ade, ade(one.samples[0], gt));
    EXPECT_DOUBLE_EQ(m1.min_fde, fde(one.samples[0], gt));
    PredictionSet two{{shifted(gt, 3, 4), shifted(gt, 0, 1)}};
    EXPECT_NEAR(min_of_n(two, gt).min_ade, 1.0, 1e-12);
    EXPECT_EQ(min_of_n(two, gt).argmin_ade, 1u);
}

TEST(MinOfN, EmptyIsDomainError) {
    EXPECT_THROW(min_of_n(PredictionSet{}, Trajectory::Zero(12, 2)), DomainError);
}

TEST(MinOfN, MatchesExhaustiveScan) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const Trajectory gt = random_traj(12, rng);
        PredictionSet p;
        std::vector<double> ades, fdes;
        for (int n = 0; n < 20; ++n) {
            p.samples.push_back(random_traj(12, rng));
            double s = 0.0;
            for (int t = 0; t < 12; ++t) s += std::hypot(p.samples.back()(t, 0) - gt(t, 0), p.samples.back()(t, 1) - gt(t, 1));
            ades.push_back(s / 12.0);
            fdes.push_back(std::hypot(p.samples.back()(11, 0) - gt(11, 0), p.samples.back()(11, 1) - gt(11, 1)));
        }
        const MinOfN m = min_of_n(p, gt);
        const auto [a, ai] = oracle::min_scan(ades);
        const auto [f, fi] = oracle::min_scan(fdes);
        EXPECT_NEAR(m.min_ade, a, 1e-12);
        EXPECT_NEAR(m.min_fde, f, 1e-12);
        EXPECT_EQ(m.argmin_ade, ai);
        EXPECT_EQ(m.argmin_fde, fi);
    }
}

TEST(MinOfN, NonincreasingAsSamplesAppended) {
    std::mt19937_64 rng(7);
    const Trajectory gt = random_traj(12, rng);
    PredictionSet p;
    double last_a = INFINITY, last_f = INFINITY;
    for (int n = 0; n < 40; ++n) {
        p.samples.push_back(random_traj(12, rng));
        const MinOfN m = min_of_n(p, gt);
        EXPECT_LE(m.min_ade, last_a);
        EXPECT_LE(m.min_fde, last_f);
        last_a = m.min_ade;
        last_f = m.min_fde;
    }
}

// ------------------------------------------------------------------ ingestion

namespace {

std::string track(int ped, int first_frame, int frames, int step = 10, double x0 = 0.0) {
    std::ostringstream s;
    for (int i = 0; i < frames; ++i) s << (first_frame + i * step) << ' ' << ped << ' ' << x0 + 0.1 * i << ' ' << 0.05 * i << '\n';
    return s.str();
}

}  // namespace

TEST(Ingest, TwentyConsecutiveFramesGiveOneWindow) {
    std::istringstream in(track(1, 0, 20));
    const auto scenes = ingest_ethucy(in);
    ASSERT_EQ(scenes.size(), 1u);
    ASSERT_EQ(scenes[0].agents.size(), 1u);
    EXPECT_EQ(scenes[0].agents[0].observed.rows(), 8);
    EXPECT_EQ(scenes[0].agents[0].future.rows(), 12);
    EXPECT_DOUBLE_EQ(scenes[0].agents[0].future(11, 0), 0.1 * 19);
}

TEST(Ingest, NineteenFramesIsEmpty) {
    std::istringstream in(track(1, 0, 19));
    EXPECT_THROW(ingest_ethucy(in), EmptyDatasetError);
}

TEST(Ingest, OverlappingPedestriansShareScene) {
    std::istringstream in(track(1, 0, 20) + track(2, 0, 20, 10, 5.0));
    const auto scenes = ingest_ethucy(in);
    ASSERT_EQ(scenes.size(), 1u);
    EXPECT_EQ(scenes[0].agents.size(), 2u);
}

TEST(Ingest, StrideOneSlidesWindows) {
    std::istringstream in(track(1, 0, 22));
    EXPECT_EQ(ingest_ethucy(in).size(), 3u);
}

TEST(Ingest, GapsAreSkipped) {
    // frames 0..90 and 110..300: the missing frame 100 breaks every window covering it
    std::string text = track(1, 0, 10) + track(1, 110, 20);
    std::istringstream in(text);
    IngestOptions opt;
    opt.frame_step = 10;
    const auto scenes = ingest_ethucy(in, opt);
    ASSERT_EQ(scenes.size(), 1u);
    EXPECT_DOUBLE_EQ(scenes[0].agents[0].observed(0, 0), 0.0);
}

TEST(Ingest, MalformedLineReportsLineNumber) {
    std::istringstream in("0 1 0.0 0.0\n10 1 abc 0.0\n");
    try {
        ingest_ethucy(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find('2'), std::string::npos) << e.what();
    }
}

TEST(Ingest, RoundTripPreservesCoordinates) {
    SynthConfig cfg;
    cfg.n_scenes = 25;
    const auto scenes = generate_synthetic(cfg, 11);
    std::stringstream text;
    write_ethucy(text, scenes, cfg.window);
    const auto back = ingest_ethucy(text);
    ASSERT_EQ(back.size(), scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        ASSERT_EQ(back[s].agents.size(), scenes[s].agents.size());
        for (std::size_t a = 0; a < scenes[s].agents.size(); ++a) {
            EXPECT_EQ(back[s].agents[a].observed, scenes[s].agents[a].observed);
            EXPECT_EQ(back[s].agents[a].future, scenes[s].agents[a].future);
        }
    }
}

// ------------------------------------------------------------------ synthetic

TEST(Synthetic, DeterministicInSeed) {
    SynthConfig cfg;
    cfg.n_scenes = 30;
    const auto a = generate_synthetic(cfg, 3), b = generate_synthetic(cfg, 3), c = generate_synthetic(cfg, 4);
    ASSERT_EQ(a.size(), b.size());
    bool differs = false;
    for (std::size_t s = 0; s < a.size(); ++s)
        for (std::size_t k = 0; k < a[s].agents.size(); ++k) {
            EXPECT_EQ(a[s].agents[k].observed, b[s].agents[k].observed);
            EXPECT_EQ(a[s].agents[k].future, b[s].agents[k].future);
            differs = differs || a[s].agents[k].future != c[s].agents[k].future;
        }
    EXPECT_TRUE(differs);
}

TEST(Synthetic, DegenerateProbabilitiesFollowOneBranch) {
    SynthConfig cfg;
    cfg.branch_probs = {1.0, 0.0, 0.0};
    cfg.n_scenes = 200;
    for (const Scene& s : generate_synthetic(cfg, 5))
        for (const auto& a : s.agents) EXPECT_EQ(classify_branch(a.observed, a.future.row(a.future.rows() - 1), cfg.branches), 0u);
}

TEST(Synthetic, BranchFrequencies) {
    SynthConfig cfg;
    cfg.n_scenes = 1500;  // 3000 agents
    std::vector<int> counts(3, 0);
    int total = 0;
    for (const Scene& s : generate_synthetic(cfg, 6))
        for (const auto& a : s.agents) {
            ++counts[classify_branch(a.observed, a.future.row(a.future.rows() - 1), cfg.branches)];
            ++total;
        }
    EXPECT_EQ(total, 3000);
    for (int c : counts) {
        const double f = static_cast<double>(c) / total;
        EXPECT_GE(f, 0.30);
        EXPECT_LE(f, 0.37);
    }
}

TEST(Synthetic, KWayBranchesProduceKModes) {
    for (int k : {2, 3, 4, 5}) {
        SynthConfig cfg;
        cfg.branches.clear();
        for (int b = 0; b < k; ++b) cfg.branches.push_back(-90.0 + 180.0 * b / (k - 1));
        cfg.branch_probs.assign(static_cast<std::size_t>(k), 1.0 / k);
        cfg.n_scenes = 500;
        std::set<std::size_t> modes;
        for (const Scene& s : generate_synthetic(cfg, 7))
            for (const auto& a : s.agents) modes.insert(classify_branch(a.observed, a.future.row(a.future.rows() - 1), cfg.branches));
        EXPECT_EQ(static_cast<int>(modes.size()), k);
    }
}

TEST(Synthetic, ProbabilitiesMustSumToOne) {
    SynthConfig cfg;
    cfg.branch_probs = {0.5, 0.3, 0.3};
    EXPECT_THROW(generate_synthetic(cfg, 0), ConfigError);
}

TEST(Synthetic, JunctionAtLastObservedPosition) {
    SynthConfig cfg;
    cfg.noise_std = 0.0;
    cfg.n_scenes = 5;
    for (const Scene& s : generate_synthetic(cfg, 8))
        for (const auto& a : s.agents) {
            const Eigen::RowVector2d last = a.observed.row(7);
            EXPECT_NEAR((a.future.row(0) - last).norm(), cfg.speed_mps * cfg.dt, 1e-12);
        }
}
