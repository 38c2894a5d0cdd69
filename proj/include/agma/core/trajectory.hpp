#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "agma/util/errors.hpp"

namespace agma {

/// T x 2 positions in meters, one row per timestep.
using Trajectory = Eigen::MatrixX2d;

/// Observation/prediction horizon of every window.
struct WindowSpec {
    int t_obs = 8;
    int t_pred = 12;

    int length() const { return t_obs + t_pred; }
    bool operator==(const WindowSpec&) const = default;
};

struct TrajectoryPair {
    Trajectory observed;
    Trajectory future;
    std::int64_t agent_id = 0;
};

struct Scene {
    std::int64_t scene_id = 0;
    std::vector<TrajectoryPair> agents;
};

struct Batch {
    std::vector<Scene> scenes;

    std::size_t agent_count() const {
        std::size_t n = 0;
        for (const Scene& s : scenes) n += s.agents.size();
        return n;
    }
};

/// N candidate futures for one agent.
struct PredictionSet {
    std::vector<Trajectory> samples;
};

inline bool all_finite(const Trajectory& t) { return t.allFinite(); }

inline void validate(const TrajectoryPair& p, const WindowSpec& w) {
    if (p.observed.rows() != w.t_obs) throw ShapeError("observed trajectory must have t_obs rows");
    if (p.future.rows() != w.t_pred) throw ShapeError("future trajectory must have t_pred rows");
    if (!all_finite(p.observed) || !all_finite(p.future)) throw DomainError("non-finite coordinate");
}

inline void validate(const Scene& s, const WindowSpec& w) {
    if (s.agents.empty()) throw DomainError("scene " + std::to_string(s.scene_id) + " has no agents");
    std::set<std::int64_t> ids;
    for (const TrajectoryPair& p : s.agents) {
        validate(p, w);
        if (!ids.insert(p.agent_id).second)
            throw ContractError("duplicate agent id " + std::to_string(p.agent_id) + " in scene " +
                                std::to_string(s.scene_id));
    }
}

inline void validate(const Batch& b, const WindowSpec& w) {
    if (b.agent_count() == 0) throw DomainError("batch contains no agents");
    for (const Scene& s : b.scenes) validate(s, w);
}

inline void validate(const PredictionSet& p) {
    if (p.samples.empty()) throw DomainError("prediction set is empty");
    const auto rows = p.samples.front().rows();
    for (const Trajectory& s : p.samples) {
        if (s.rows() != rows) throw ShapeError("prediction samples differ in length");
        if (!all_finite(s)) throw DomainError("non-finite prediction sample");
    }
}

// ---------------------------------------------------------------- metrics

/// Mean Euclidean distance over corresponding timesteps.
inline double ade(const Trajectory& pred, const Trajectory& gt) {
    if (pred.rows() != gt.rows()) throw ShapeError("ade: trajectory lengths differ");
    if (pred.rows() == 0) throw ShapeError("ade: empty trajectory");
    return (pred - gt).rowwise().norm().mean();
}

/// Euclidean distance at the final timestep.
inline double fde(const Trajectory& pred, const Trajectory& gt) {
    if (pred.rows() != gt.rows()) throw ShapeError("fde: trajectory lengths differ");
    if (pred.rows() == 0) throw ShapeError("fde: empty trajectory");
    const auto last = pred.rows() - 1;
    return (pred.row(last) - gt.row(last)).norm();
}

struct MinOfN {
    double min_ade = 0.0;
    double min_fde = 0.0;
    std::size_t argmin_ade = 0;
    std::size_t argmin_fde = 0;
};

/// Best-of-N displacement errors; ties resolve to the lowest sample index.
inline MinOfN min_of_n(const PredictionSet& preds, const Trajectory& gt) {
    if (preds.samples.empty()) throw DomainError("min_of_n: empty prediction set");
    MinOfN out;
    out.min_ade = ade(preds.samples[0], gt);
    out.min_fde = fde(preds.samples[0], gt);
    for (std::size_t n = 1; n < preds.samples.size(); ++n) {
        const double a = ade(preds.samples[n], gt);
        const double f = fde(preds.samples[n], gt);
        if (a < out.min_ade) {
            out.min_ade = a;
            out.argmin_ade = n;
        }
        if (f < out.min_fde) {
            out.min_fde = f;
            out.argmin_fde = n;
        }
    }
    return out;
}

}  // namespace agma
