#pragma once

// Seed-controlled branching-junction scenes. Every agent walks straight
// toward a junction located at its last observed position, then leaves along
// one randomly drawn branch. The observation carries no cue about which
// branch follows, so the future distribution is genuinely multimodal.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agma/core/trajectory.hpp"

namespace agma {

struct SynthConfig {
    /// Branch directions in degrees, relative to the incoming heading.
    std::vector<double> branches{-90.0, 0.0, 90.0};
    std::vector<double> branch_probs{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    double speed_mps = 1.2;
    double noise_std = 0.03;
    int agents_per_scene = 2;
    int n_scenes = 100;
    std::uint64_t seed = 0;
    double dt = 0.4;
    /// Incoming headings are drawn uniformly in [-jitter, +jitter] degrees.
    double heading_jitter_deg = 30.0;
    /// Junctions are scattered uniformly in a square of this half-width.
    double spread_m = 10.0;
    WindowSpec window;

    void validate() const {
        if (branches.empty()) throw ConfigError("synthetic: at least one branch required");
        if (branches.size() != branch_probs.size())
            throw ConfigError("synthetic: branches and branch_probs differ in length");
        double total = 0.0;
        for (double p : branch_probs) {
            if (!(p >= 0.0)) throw ConfigError("synthetic: branch probabilities must be nonnegative");
            total += p;
        }
        if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("synthetic: branch probabilities must sum to 1");
        if (!(speed_mps > 0.0)) throw ConfigError("synthetic: speed_mps must be positive");
        if (!(noise_std >= 0.0)) throw ConfigError("synthetic: noise_std must be nonnegative");
        if (agents_per_scene < 1) throw ConfigError("synthetic: agents_per_scene must be >= 1");
        if (n_scenes < 0) throw ConfigError("synthetic: n_scenes must be >= 0");
        if (!(dt > 0.0)) throw ConfigError("synthetic: dt must be positive");
        if (window.t_obs < 2 || window.t_pred < 1) throw ConfigError("synthetic: t_obs >= 2 and t_pred >= 1 required");
    }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"branches", c.branches},
                       {"branch_probs", c.branch_probs},
                       {"speed_mps", c.speed_mps},
                       {"noise_std", c.noise_std},
                       {"agents_per_scene", c.agents_per_scene},
                       {"n_scenes", c.n_scenes},
                       {"seed", c.seed},
                       {"dt", c.dt},
                       {"heading_jitter_deg", c.heading_jitter_deg},
                       {"spread_m", c.spread_m},
                       {"t_obs", c.window.t_obs},
                       {"t_pred", c.window.t_pred}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    try {
        const SynthConfig d;
        c.branches = j.value("branches", d.branches);
        c.branch_probs = j.value("branch_probs", d.branch_probs);
        if (j.contains("branches") && !j.contains("branch_probs"))
            c.branch_probs.assign(c.branches.size(), 1.0 / static_cast<double>(c.branches.size()));
        c.speed_mps = j.value("speed_mps", d.speed_mps);
        c.noise_std = j.value("noise_std", d.noise_std);
        c.agents_per_scene = j.value("agents_per_scene", d.agents_per_scene);
        c.n_scenes = j.value("n_scenes", d.n_scenes);
        c.seed = j.value("seed", d.seed);
        c.dt = j.value("dt", d.dt);
        c.heading_jitter_deg = j.value("heading_jitter_deg", d.heading_jitter_deg);
        c.spread_m = j.value("spread_m", d.spread_m);
        c.window.t_obs = j.value("t_obs", d.window.t_obs);
        c.window.t_pred = j.value("t_pred", d.window.t_pred);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic config: ") + e.what());
    }
}

/// Deterministic in (config, seed); `config.seed` is ignored here.
inline std::vector<Scene> generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::discrete_distribution<std::size_t> pick(config.branch_probs.begin(), config.branch_probs.end());

    const double deg = std::numbers::pi / 180.0;
    const double stride = config.speed_mps * config.dt;
    const WindowSpec& w = config.window;

    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(config.n_scenes));
    std::int64_t next_agent = 0;
    for (int s = 0; s < config.n_scenes; ++s) {
        Scene scene;
        scene.scene_id = s;
        for (int a = 0; a < config.agents_per_scene; ++a) {
            const double jx = (2.0 * unit(rng) - 1.0) * config.spread_m;
            const double jy = (2.0 * unit(rng) - 1.0) * config.spread_m;
            const double heading = (2.0 * unit(rng) - 1.0) * config.heading_jitter_deg * deg;
            const std::size_t branch = pick(rng);
            const double out_heading = heading + config.branches[branch] * deg;

            TrajectoryPair p;
            p.agent_id = next_agent++;
            p.observed.resize(w.t_obs, 2);
            p.future.resize(w.t_pred, 2);
            for (int t = 0; t < w.t_obs; ++t) {
                const double back = static_cast<double>(w.t_obs - 1 - t) * stride;
                p.observed(t, 0) = jx - back * std::cos(heading) + config.noise_std * noise(rng);
                p.observed(t, 1) = jy - back * std::sin(heading) + config.noise_std * noise(rng);
            }
            for (int t = 0; t < w.t_pred; ++t) {
                const double ahead = static_cast<double>(t + 1) * stride;
                p.future(t, 0) = jx + ahead * std::cos(out_heading) + config.noise_std * noise(rng);
                p.future(t, 1) = jy + ahead * std::sin(out_heading) + config.noise_std * noise(rng);
            }
            scene.agents.push_back(std::move(p));
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

/// Index of the branch whose direction (relative to the observed heading)
/// is angularly closest to the displacement from the last observed position
/// to `endpoint`.
inline std::size_t classify_branch(const Trajectory& observed, const Eigen::RowVector2d& endpoint,
                                   const std::vector<double>& branches_deg) {
    if (observed.rows() < 2 || branches_deg.empty()) throw DomainError("classify_branch: insufficient input");
    const Eigen::RowVector2d last = observed.row(observed.rows() - 1);
    const Eigen::RowVector2d in = last - observed.row(0);
    const Eigen::RowVector2d out = endpoint - last;
    const double heading = std::atan2(in(1), in(0));
    const double dir = std::atan2(out(1), out(0));
    std::size_t best = 0;
    double best_gap = 1e300;
    for (std::size_t b = 0; b < branches_deg.size(); ++b) {
        const double target = heading + branches_deg[b] * std::numbers::pi / 180.0;
        const double gap = std::fabs(std::remainder(dir - target, 2.0 * std::numbers::pi));
        if (gap < best_gap) {
            best_gap = gap;
            best = b;
        }
    }
    return best;
}

}  // namespace agma
