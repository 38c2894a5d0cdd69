// agma: synthetic data, training, evaluation, theory checks and plots.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agma/core/ethucy.hpp"
#include "agma/core/synthetic.hpp"
#include "agma/theory/discrete.hpp"
#include "agma/train/trainer.hpp"
#include "agma/util/csv.hpp"
#include "agma/util/log.hpp"
#include "agma/util/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace agma;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kInput = 2, kNumeric = 3, kCheckpoint = 4, kTheory = 5 };

class TheoryViolation : public Error {
public:
    using Error::Error;
};

struct Global {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "agma_out";
    int threads = 1;
};

// ---------------------------------------------------------------- config

/// Every tunable, with defaults materialised.
struct RunConfig {
    SynthConfig synthetic;
    train::TrainConfig train;
    IngestOptions ingest;
};

json ingest_to_json(const IngestOptions& o) {
    json j{{"stride", o.stride}};
    j["frame_step"] = o.frame_step ? json(*o.frame_step) : json(nullptr);
    return j;
}

json to_json(const RunConfig& c) { return json{{"synthetic", c.synthetic}, {"train", c.train}, {"ingest", ingest_to_json(c.ingest)}}; }

RunConfig load_config(const Global& g) {
    RunConfig c;
    if (!g.config_path.empty()) {
        std::ifstream in(g.config_path);
        if (!in) throw ConfigError("cannot open config " + g.config_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("malformed config " + g.config_path + ": " + e.what());
        }
        // a run manifest carries its resolved config
        if (!j.is_object()) throw ConfigError("config must be a JSON object: " + g.config_path);
        if (j.value("format", "") == "agma-manifest") j = j.at("config");
        try {
            if (j.contains("synthetic")) c.synthetic = j.at("synthetic").get<SynthConfig>();
            if (j.contains("train")) c.train = j.at("train").get<train::TrainConfig>();
            if (j.contains("ingest")) {
                const json& i = j.at("ingest");
                c.ingest.stride = i.value("stride", 1);
                if (i.contains("frame_step") && !i.at("frame_step").is_null()) c.ingest.frame_step = i.at("frame_step").get<std::int64_t>();
            }
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    if (g.seed) {
        c.synthetic.seed = *g.seed;
        c.train.seed = *g.seed;
    }
    c.ingest.window = c.train.model.window;
    if (!(c.synthetic.window == c.train.model.window)) throw ConfigError("synthetic and model windows differ");
    if (c.ingest.stride < 1) throw ConfigError("ingest stride must be >= 1");
    c.synthetic.validate();
    c.train.validate();
    return c;
}

// ---------------------------------------------------------------- manifest

struct Manifest {
    std::string command;
    json config;
    std::uint64_t seed = 0;
    std::vector<std::string> argv;
    json inputs = json::object();
    json outputs = json::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

void write_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        if (!out) throw Error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_manifest(const fs::path& dir, const Manifest& m) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - m.start).count();
    json j{{"format", "agma-manifest"}, {"command", m.command}, {"config", m.config},   {"seed", m.seed},
           {"version", kVersion},       {"argv", m.argv},       {"inputs", m.inputs}, {"outputs", m.outputs},
           {"duration_s", secs}};
    write_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

fs::path prepare_out(const Global& g) {
    fs::path out(g.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory " + out.string());
    return out;
}

std::vector<Scene> read_scenes(const std::string& path, const IngestOptions& opt) {
    if (!fs::exists(path)) throw ConfigError("missing input " + path);
    return ingest_ethucy(path, opt);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Global& g, Manifest& m) {
    const RunConfig c = load_config(g);
    const fs::path out = prepare_out(g);
    const auto scenes = generate_synthetic(c.synthetic, c.synthetic.seed);
    std::ostringstream text;
    write_ethucy(text, scenes, c.synthetic.window);
    write_atomic(out / "scenes.txt", text.str());
    m.config = to_json(c);
    m.seed = c.synthetic.seed;
    m.outputs = {{"scenes", (out / "scenes.txt").string()}, {"n_scenes", scenes.size()}};
    write_manifest(out, m);
    util::log(util::LogLevel::info, "wrote " + std::to_string(scenes.size()) + " scenes to " + (out / "scenes.txt").string());
    return kOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const Global& g, Manifest& m, const std::string& data, const std::string& val_path, bool no_lb, bool no_lg,
              bool no_distill) {
    RunConfig c = load_config(g);
    if (static_cast<int>(no_lb) + static_cast<int>(no_lg) + static_cast<int>(no_distill) > 1)
        throw ConfigError("--no-lb, --no-lg and --no-distill are mutually exclusive");
    if (no_lb) c.train.variant = train::Variant::no_LB;
    if (no_lg) c.train.variant = train::Variant::no_LG;
    if (no_distill) c.train.variant = train::Variant::no_distill;
    const fs::path out = prepare_out(g);

    std::vector<Scene> scenes = read_scenes(data, c.ingest);
    std::vector<Scene> val;
    if (!val_path.empty()) {
        val = read_scenes(val_path, c.ingest);
    } else if (scenes.size() >= 5) {
        // hold out the last fifth of the scenes
        const std::size_t keep = scenes.size() - scenes.size() / 5;
        val.assign(scenes.begin() + static_cast<std::ptrdiff_t>(keep), scenes.end());
        scenes.resize(keep);
    }

    train::Trainer trainer(c.train);
    trainer.set_dump_dir(out / "diagnostic");
    std::ostringstream metrics;
    train::write_metrics_header(metrics);
    trainer.fit(scenes, val.empty() ? nullptr : &val, [&](const train::EpochReport& r) {
        train::write_metrics_row(metrics, r);
        util::log(util::LogLevel::info, "epoch " + std::to_string(r.epoch) + " L_total " + util::fmt_double(r.L_total) + " val_mADE " +
                                            util::fmt_double(r.val_made));
    });
    write_atomic(out / "metrics.csv", metrics.str());
    nets::save_checkpoint((out / "checkpoint.json").string(), trainer.model().params(), json(c.train));
    m.config = to_json(c);
    m.seed = c.train.seed;
    m.inputs = {{"data", data}, {"val", val_path}};
    m.outputs = {{"checkpoint", (out / "checkpoint.json").string()},
                 {"metrics", (out / "metrics.csv").string()},
                 {"train_scenes", scenes.size()},
                 {"val_scenes", val.size()},
                 {"variant", train::to_string(c.train.variant)}};
    write_manifest(out, m);
    return kOk;
}

// ---------------------------------------------------------------- eval

std::vector<int> parse_k_list(const std::string& s) {
    std::vector<int> ks;
    for (const auto& tok : util::split(s, ',')) {
        if (tok.empty()) continue;
        try {
            const int k = std::stoi(tok);
            if (k < 1) throw ConfigError("K values must be >= 1");
            ks.push_back(k);
        } catch (const std::logic_error&) {
            throw ConfigError("bad K list: " + s);
        }
    }
    if (ks.empty()) throw ConfigError("empty K list");
    return ks;
}

int cmd_eval(const Global& g, Manifest& m, const std::string& checkpoint, const std::string& data, int n, const std::string& k_sweep) {
    if (n < 1) throw ConfigError("-N must be >= 1");
    nets::Checkpoint ck = nets::load_checkpoint(checkpoint);
    train::TrainConfig tc;
    try {
        tc = ck.config.get<train::TrainConfig>();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config unreadable: ") + e.what());
    }
    RunConfig c = load_config(g);
    if (!g.config_path.empty() && !(c.train.model == tc.model)) throw CheckpointError("checkpoint model config differs from --config");
    c.train = tc;
    if (g.seed) c.train.seed = *g.seed;
    c.ingest.window = tc.model.window;
    nets::Model model(tc.model, std::move(ck.params));
    const fs::path out = prepare_out(g);
    const auto scenes = read_scenes(data, c.ingest);

    std::mt19937_64 rng(train::Trainer::stream_seed(c.train.seed, 2));
    const auto preds = train::infer(model, c.train, train::observe(scenes), n, rng);
    const train::EvalResult ev = train::score(scenes, preds, &c.synthetic.branches);

    std::ostringstream csv;
    csv << "scene_id,agent_id,sample_idx,t,x,y\n";
    for (std::size_t s = 0; s < scenes.size(); ++s)
        for (std::size_t a = 0; a < scenes[s].agents.size(); ++a)
            for (std::size_t k = 0; k < preds[s][a].samples.size(); ++k) {
                const Trajectory& t = preds[s][a].samples[k];
                for (Eigen::Index i = 0; i < t.rows(); ++i)
                    csv << scenes[s].scene_id << ',' << scenes[s].agents[a].agent_id << ',' << k << ',' << i << ','
                        << util::fmt_double(t(i, 0)) << ',' << util::fmt_double(t(i, 1)) << '\n';
            }
    write_atomic(out / "predictions.csv", csv.str());

    json metrics{{"N", n},
                 {"mADE_N", ev.made},
                 {"mFDE_N", ev.mfde},
                 {"branch_coverage", ev.branch_coverage},
                 {"agents", ev.agents},
                 {"scenes", ev.scenes}};
    if (!k_sweep.empty()) {
        std::ostringstream ks;
        ks << "K,mADE_K,mFDE_K\n";
        // budgets are nested prefixes of one draw of max(K) samples
        const std::vector<int> ks_list = parse_k_list(k_sweep);
        const int k_max = *std::max_element(ks_list.begin(), ks_list.end());
        std::mt19937_64 krng(train::Trainer::stream_seed(c.train.seed, 3));
        const auto pool = train::infer(model, c.train, train::observe(scenes), k_max, krng);
        for (int k : ks_list) {
            auto prefix = pool;
            for (auto& scene : prefix)
                for (auto& agent : scene) agent.samples.resize(static_cast<std::size_t>(k));
            const train::EvalResult e = train::score(scenes, prefix);
            ks << k << ',' << util::fmt_double(e.made) << ',' << util::fmt_double(e.mfde) << '\n';
        }
        write_atomic(out / "ksweep.csv", ks.str());
        m.outputs["ksweep"] = (out / "ksweep.csv").string();
    }
    write_atomic(out / "metrics.json", metrics.dump(2) + "\n");
    std::cout << "mADE_" << n << " " << util::fmt_double(ev.made) << " mFDE_" << n << " " << util::fmt_double(ev.mfde) << '\n';
    m.config = to_json(c);
    m.seed = c.train.seed;
    m.inputs = {{"checkpoint", checkpoint}, {"data", data}};
    m.outputs["predictions"] = (out / "predictions.csv").string();
    m.outputs["metrics"] = (out / "metrics.json").string();
    write_manifest(out, m);
    return kOk;
}

// ---------------------------------------------------------------- verify-theory

int cmd_verify_theory(const Global& g, Manifest& m, std::size_t sweep_size, double delta, bool identical) {
    theory::SweepOptions opt;
    opt.size = sweep_size;
    opt.seed = g.seed.value_or(0);
    opt.delta = delta;
    opt.identical = identical;
    if (sweep_size < 1) throw ConfigError("--sweep-size must be >= 1");
    const fs::path out = prepare_out(g);
    const theory::SweepSummary s = theory::run_sweep(opt);
    std::ostringstream csv;
    theory::write_sweep_csv(csv, s);
    write_atomic(out / "theory_sweep.csv", csv.str());
    std::cout << "models " << s.rows.size() << " violations " << s.violations() << " (bound " << s.bound_violations << ", pinsker "
              << s.pinsker_violations << ", necessity " << s.necessity_violations << " of " << s.necessity_checked << " checked)\n";
    m.config = json{{"sweep_size", sweep_size}, {"delta", delta}, {"identical", identical}, {"max_states", opt.max_states},
                    {"max_outcomes", opt.max_outcomes}};
    m.seed = opt.seed;
    m.outputs = {{"sweep", (out / "theory_sweep.csv").string()}, {"violations", s.violations()}};
    write_manifest(out, m);
    if (s.violations() > 0) throw TheoryViolation("theory sweep found violations");
    return kOk;
}

// ---------------------------------------------------------------- plot

const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return colors[i % 8];
}

/// One SVG per scene: observed, ground truth and every sample per agent.
std::vector<std::string> plot_overlays(const fs::path& out, const std::string& data, const std::string& predictions, const IngestOptions& ingest,
                                       std::size_t max_scenes) {
    const auto scenes = read_scenes(data, ingest);
    if (!fs::exists(predictions)) throw ConfigError("missing input " + predictions);
    const util::CsvTable t = util::read_csv(predictions);
    const std::size_t cs = t.column("scene_id"), ca = t.column("agent_id"), ck = t.column("sample_idx"), ct = t.column("t"),
                      cx = t.column("x"), cy = t.column("y");
    // scene -> agent -> sample -> points
    std::map<std::int64_t, std::map<std::int64_t, std::map<int, std::vector<std::pair<double, double>>>>> samples;
    for (const auto& r : t.rows) {
        auto& pts = samples[static_cast<std::int64_t>(r[cs])][static_cast<std::int64_t>(r[ca])][static_cast<int>(r[ck])];
        const auto idx = static_cast<std::size_t>(r[ct]);
        if (pts.size() <= idx) pts.resize(idx + 1);
        pts[idx] = {r[cx], r[cy]};
    }
    std::vector<std::string> written;
    for (const Scene& s : scenes) {
        if (written.size() >= max_scenes) break;
        auto it = samples.find(s.scene_id);
        if (it == samples.end()) continue;
        util::SvgPlot plot;
        plot.title = "scene " + std::to_string(s.scene_id);
        plot.x_label = "x [m]";
        plot.y_label = "y [m]";
        plot.equal_aspect = true;
        for (std::size_t a = 0; a < s.agents.size(); ++a) {
            const auto& agent = s.agents[a];
            const std::string base = "agent" + std::to_string(agent.agent_id);
            util::Polyline obs{base + "/observed", "#000000", 2.0, 1.0, {}};
            for (Eigen::Index i = 0; i < agent.observed.rows(); ++i) obs.points.emplace_back(agent.observed(i, 0), agent.observed(i, 1));
            util::Polyline gt{base + "/truth", "#2ca02c", 2.0, 1.0, {}};
            gt.points.emplace_back(agent.observed(agent.observed.rows() - 1, 0), agent.observed(agent.observed.rows() - 1, 1));
            for (Eigen::Index i = 0; i < agent.future.rows(); ++i) gt.points.emplace_back(agent.future(i, 0), agent.future(i, 1));
            plot.lines.push_back(std::move(obs));
            plot.lines.push_back(std::move(gt));
            auto ag = it->second.find(agent.agent_id);
            if (ag == it->second.end()) continue;
            for (const auto& [k, pts] : ag->second)
                plot.lines.push_back({base + "/sample" + std::to_string(k), palette(a + 1), 1.0, 0.5, pts});
        }
        const std::string stem = (out / ("scene_" + std::to_string(s.scene_id))).string();
        util::write_plot(stem, plot);
        written.push_back(stem + ".svg");
    }
    return written;
}

/// Every column after the first plotted against the first.
std::string plot_curves(const fs::path& out, const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("missing input " + path);
    const util::CsvTable t = util::read_csv(path);
    if (t.header.size() < 2) throw ConfigError("curve input needs at least two columns: " + path);
    util::SvgPlot plot;
    plot.title = fs::path(path).stem().string();
    plot.x_label = t.header[0];
    plot.y_label = "value";
    for (std::size_t c = 1; c < t.header.size(); ++c) {
        util::Polyline l{t.header[c], palette(c - 1), 1.5, 1.0, {}};
        for (const auto& r : t.rows) l.points.emplace_back(r[0], r[c]);
        plot.lines.push_back(std::move(l));
    }
    const std::string stem = (out / fs::path(path).stem()).string();
    util::write_plot(stem, plot);
    return stem + ".svg";
}

int cmd_plot(const Global& g, Manifest& m, const std::string& data, const std::string& predictions, const std::vector<std::string>& curves,
             std::size_t max_scenes) {
    if (predictions.empty() && curves.empty()) throw ConfigError("plot: nothing to plot (give --predictions or --curve)");
    if (!predictions.empty() && data.empty()) throw ConfigError("plot: --predictions requires --data");
    const RunConfig c = load_config(g);
    const fs::path out = prepare_out(g);
    json written = json::array();
    if (!predictions.empty())
        for (const auto& f : plot_overlays(out, data, predictions, c.ingest, max_scenes)) written.push_back(f);
    for (const auto& path : curves) written.push_back(plot_curves(out, path));
    m.config = to_json(c);
    m.seed = c.train.seed;
    m.inputs = {{"data", data}, {"predictions", predictions}, {"curves", curves}};
    m.outputs = {{"svg", written}};
    write_manifest(out, m);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agma: multimodal trajectory forecasting with batch and global mixture priors"};
    app.require_subcommand(1);
    Global g;
    std::uint64_t seed_value = 0;
    app.add_option("--config", g.config_path, "JSON config {synthetic, train, ingest}, or a run manifest");
    auto* seed_opt = app.add_option("--seed", seed_value, "Seed overriding every seed in the config");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (computation is single-threaded; recorded in the manifest)")
        ->check(CLI::PositiveNumber);
    app.footer(
        "CSV columns:\n"
        "  metrics.csv      epoch,L_B,L_G,L_distill,L_total,val_mADE_N,val_mFDE_N\n"
        "  predictions.csv  scene_id,agent_id,sample_idx,t,x,y\n"
        "  ksweep.csv       K,mADE_K,mFDE_K\n"
        "  theory_sweep.csv model_id,C,V,eps_prior,eps_sample,L_dist,bound,slack,holds\n"
        "  plot sidecars    label,index,x,y\n"
        "Exit codes: 0 ok, 2 config/input, 3 numeric failure, 4 checkpoint mismatch, 5 theory violation.\n"
        "AGMA_LOG=error|warn|info|debug sets verbosity.");

    auto* sim = app.add_subcommand("simulate", "Generate synthetic intersection scenes in ETH-UCY text format");

    auto* tr = app.add_subcommand("train", "Train on ETH-UCY text data; writes checkpoint, metrics.csv, manifest");
    std::string data, val;
    bool no_lb = false, no_lg = false, no_distill = false;
    tr->add_option("--data", data, "Training data")->required();
    tr->add_option("--val", val, "Validation data (default: last fifth of --data scenes)");
    tr->add_flag("--no-lb", no_lb, "Drop the batch-prior loss");
    tr->add_flag("--no-lg", no_lg, "Drop the global-prior loss");
    tr->add_flag("--no-distill", no_distill, "Drop the transport distillation loss");

    auto* ev = app.add_subcommand("eval", "Sample N futures per agent; writes predictions.csv and metrics.json");
    std::string checkpoint, k_sweep;
    int n = 20;
    ev->add_option("--checkpoint", checkpoint, "Checkpoint from train")->required();
    ev->add_option("--data", data, "Evaluation data")->required();
    ev->add_option("-N", n, "Samples per agent")->capture_default_str();
    ev->add_option("--k-sweep", k_sweep, "Comma-separated K values; writes ksweep.csv");

    auto* th = app.add_subcommand("verify-theory", "Randomised discrete checks of the prior/sampler error bounds");
    std::size_t sweep_size = 100000;
    double delta = 0.5;
    bool identical = false;
    th->add_option("--sweep-size", sweep_size, "Number of random models")->capture_default_str();
    th->add_option("--delta", delta, "Divergence threshold for the necessity check")->capture_default_str();
    th->add_flag("--identical", identical, "Draw learned models equal to the true ones");

    auto* pl = app.add_subcommand("plot", "SVG scene overlays and metric curves, each with a sidecar CSV");
    std::string predictions;
    std::vector<std::string> curves;
    std::size_t max_scenes = 6;
    pl->add_option("--data", data, "Scenes matching the predictions");
    pl->add_option("--predictions", predictions, "predictions.csv from eval");
    pl->add_option("--curve", curves, "CSV whose first column is x (metrics.csv, ksweep.csv, ...)");
    pl->add_option("--max-scenes", max_scenes, "Overlay at most this many scenes")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }
    if (*seed_opt) g.seed = seed_value;

    Manifest m;
    m.argv.assign(argv, argv + argc);
    try {
        util::log_level();
        if (*sim) return m.command = "simulate", cmd_simulate(g, m);
        if (*tr) return m.command = "train", cmd_train(g, m, data, val, no_lb, no_lg, no_distill);
        if (*ev) return m.command = "eval", cmd_eval(g, m, checkpoint, data, n, k_sweep);
        if (*th) return m.command = "verify-theory", cmd_verify_theory(g, m, sweep_size, delta, identical);
        if (*pl) return m.command = "plot", cmd_plot(g, m, data, predictions, curves, max_scenes);
    } catch (const TheoryViolation& e) {
        util::log(util::LogLevel::error, e.what());
        return kTheory;
    } catch (const NumericError& e) {
        util::log(util::LogLevel::error, e.what());
        return kNumeric;
    } catch (const CheckpointError& e) {
        util::log(util::LogLevel::error, e.what());
        return kCheckpoint;
    } catch (const std::exception& e) {
        util::log(util::LogLevel::error, e.what());
        return kInput;
    }
    return kInput;
}
