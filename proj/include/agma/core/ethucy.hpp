#pragma once

// ETH-UCY plain-text trajectories: one observation per line,
// `frame_id ped_id x y`, whitespace separated, coordinates in meters.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "agma/core/trajectory.hpp"

namespace agma {

struct IngestOptions {
    WindowSpec window;
    /// Frame-id increment between consecutive samples. When unset, the
    /// smallest positive gap between distinct frame ids in the file is used.
    std::optional<std::int64_t> frame_step;
    /// Window stride in samples.
    int stride = 1;
};

struct Observation {
    std::int64_t frame = 0;
    std::int64_t ped = 0;
    double x = 0.0;
    double y = 0.0;
};

namespace detail {

inline bool parse_double(const std::string& tok, double& out) {
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e && std::isfinite(out);
}

inline bool parse_integral(const std::string& tok, std::int64_t& out) {
    double v = 0.0;
    if (!parse_double(tok, v)) return false;
    if (v != std::floor(v) || std::fabs(v) > 9.0e15) return false;
    out = static_cast<std::int64_t>(v);
    return true;
}

}  // namespace detail

inline std::vector<Observation> parse_ethucy(std::istream& in) {
    std::vector<Observation> obs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() != 4) throw ParseError("expected 4 fields `frame_id ped_id x y`", lineno);
        Observation o;
        if (!detail::parse_integral(tok[0], o.frame)) throw ParseError("frame_id is not an integer", lineno);
        if (!detail::parse_integral(tok[1], o.ped)) throw ParseError("ped_id is not an integer", lineno);
        if (!detail::parse_double(tok[2], o.x) || !detail::parse_double(tok[3], o.y))
            throw ParseError("coordinate is not a finite decimal", lineno);
        obs.push_back(o);
    }
    return obs;
}

/// Segments per-pedestrian tracks into windows of t_obs + t_pred consecutive
/// samples. Windows with a missing frame are dropped. Agents whose windows
/// start on the same frame form one scene; scenes are ordered by start frame
/// and agents by pedestrian id.
inline std::vector<Scene> windows_from_observations(const std::vector<Observation>& obs,
                                                    const IngestOptions& opt) {
    if (opt.stride < 1) throw ConfigError("window stride must be >= 1");
    if (opt.window.t_obs < 1 || opt.window.t_pred < 1) throw ConfigError("t_obs and t_pred must be >= 1");

    std::int64_t step = 0;
    if (opt.frame_step) {
        step = *opt.frame_step;
        if (step < 1) throw ConfigError("frame_step must be >= 1");
    } else {
        std::vector<std::int64_t> frames;
        frames.reserve(obs.size());
        for (const Observation& o : obs) frames.push_back(o.frame);
        std::sort(frames.begin(), frames.end());
        frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
        for (std::size_t i = 1; i < frames.size(); ++i) {
            const std::int64_t d = frames[i] - frames[i - 1];
            if (step == 0 || d < step) step = d;
        }
        if (step == 0) step = 1;
    }

    // ped -> frame -> position (first occurrence wins for duplicate rows)
    std::map<std::int64_t, std::map<std::int64_t, std::pair<double, double>>> tracks;
    for (const Observation& o : obs) tracks[o.ped].emplace(o.frame, std::make_pair(o.x, o.y));

    const int len = opt.window.length();
    std::map<std::int64_t, Scene> by_start;
    for (const auto& [ped, track] : tracks) {
        for (const auto& entry : track) {
            const std::int64_t start = entry.first;
            // Stride is measured in samples from the track's first frame.
            const std::int64_t offset = start - track.begin()->first;
            if (offset % step != 0 || (offset / step) % opt.stride != 0) continue;
            TrajectoryPair p;
            p.agent_id = ped;
            p.observed.resize(opt.window.t_obs, 2);
            p.future.resize(opt.window.t_pred, 2);
            bool complete = true;
            for (int k = 0; k < len; ++k) {
                auto it = track.find(start + k * step);
                if (it == track.end()) {
                    complete = false;
                    break;
                }
                if (k < opt.window.t_obs) {
                    p.observed(k, 0) = it->second.first;
                    p.observed(k, 1) = it->second.second;
                } else {
                    p.future(k - opt.window.t_obs, 0) = it->second.first;
                    p.future(k - opt.window.t_obs, 1) = it->second.second;
                }
            }
            if (!complete) continue;
            by_start[start].agents.push_back(std::move(p));
        }
    }

    std::vector<Scene> scenes;
    scenes.reserve(by_start.size());
    for (auto& [start, scene] : by_start) {
        scene.scene_id = static_cast<std::int64_t>(scenes.size());
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

inline std::vector<Scene> ingest_ethucy(std::istream& in, const IngestOptions& opt = {}) {
    auto scenes = windows_from_observations(parse_ethucy(in), opt);
    if (scenes.empty()) throw EmptyDatasetError("no complete windows of " + std::to_string(opt.window.length()) +
                                                " frames found");
    return scenes;
}

inline std::vector<Scene> ingest_ethucy(const std::string& path, const IngestOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return ingest_ethucy(in, opt);
}

inline std::string format_coordinate(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Writes scenes so that ingest_ethucy with frame_step 1 recovers them:
/// scene k occupies frames [k*(len+1), k*(len+1)+len), leaving a one-frame
/// gap so no window straddles two scenes. Agent ids must be unique across
/// the whole set.
inline void write_ethucy(std::ostream& out, const std::vector<Scene>& scenes, const WindowSpec& w) {
    const std::int64_t span = w.length() + 1;
    for (std::size_t k = 0; k < scenes.size(); ++k) {
        const std::int64_t base = static_cast<std::int64_t>(k) * span;
        for (int t = 0; t < w.length(); ++t) {
            for (const TrajectoryPair& p : scenes[k].agents) {
                const auto row = t < w.t_obs ? p.observed.row(t) : p.future.row(t - w.t_obs);
                out << (base + t) << ' ' << p.agent_id << ' ' << format_coordinate(row(0)) << ' '
                    << format_coordinate(row(1)) << '\n';
            }
        }
    }
}

}  // namespace agma
