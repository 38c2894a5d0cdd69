#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agma/ad/ops.hpp"
#include "agma/core/ethucy.hpp"
#include "agma/core/synthetic.hpp"
#include "agma/core/trajectory.hpp"
#include "agma/nets/model.hpp"
#include "agma/ot/sinkhorn.hpp"
#include "agma/prior/batch_prior.hpp"
#include "agma/prior/global_prior.hpp"
#include "agma/train/adamw.hpp"
#include "agma/train/config.hpp"

namespace agma::train {

using Matrix = Eigen::MatrixXd;

/// Loss terms as they enter the objective; a term switched off by the
/// variant is reported as 0.
struct LossReport {
    double L_B = 0.0;
    double L_G = 0.0;
    double L_distill = 0.0;
    double L_total = 0.0;
    std::size_t clusters = 0;
};

struct EpochReport {
    int epoch = 0;
    double L_B = 0.0;
    double L_G = 0.0;
    double L_distill = 0.0;
    double L_total = 0.0;
    double val_made = 0.0;
    double val_mfde = 0.0;
};

// ---------------------------------------------------------------- batch layout

/// Agents of several scenes flattened in scene order.
struct BatchLayout {
    std::vector<nets::AgentView> views;
    Matrix targets;  ///< A x 2 T_pred offsets from each agent's last observed position

    ad::Index agents() const { return static_cast<ad::Index>(views.size()); }
};

inline BatchLayout make_layout(const std::vector<const Scene*>& scenes, const WindowSpec& w) {
    BatchLayout out;
    int label = 0;
    for (const Scene* s : scenes) {
        for (const TrajectoryPair& a : s->agents) out.views.push_back({&a.observed, &a.future, label});
        ++label;
    }
    if (out.views.empty()) throw DomainError("batch contains no agents");
    out.targets.resize(out.agents(), 2 * w.t_pred);
    for (ad::Index i = 0; i < out.agents(); ++i) {
        const auto& v = out.views[static_cast<std::size_t>(i)];
        if (v.future->rows() != w.t_pred || v.observed->rows() != w.t_obs) throw ShapeError("batch: window length mismatch");
        out.targets.row(i) = nets::trajectory_to_offsets(*v.future, v.observed->row(w.t_obs - 1));
    }
    return out;
}

inline Matrix repeat_rows(const Matrix& m, ad::Index times) {
    Matrix out(m.rows() * times, m.cols());
    for (ad::Index i = 0; i < m.rows(); ++i)
        for (ad::Index k = 0; k < times; ++k) out.row(i * times + k) = m.row(i);
    return out;
}

inline Matrix standard_normal(ad::Index rows, ad::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (ad::Index i = 0; i < rows; ++i)
        for (ad::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

/// Gumbel noise where `a` is positive, zero elsewhere.
inline Matrix gumbel_noise(const Matrix& a, std::mt19937_64& rng) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    for (ad::Index i = 0; i < a.rows(); ++i)
        for (ad::Index j = 0; j < a.cols(); ++j)
            if (a(i, j) > 0.0) g(i, j) = prior::draw_gumbel(rng);
    return g;
}

// ---------------------------------------------------------------- losses

/// Mean over agents of the smallest ADE among each agent's `n` decoded
/// codes. `codes` holds n consecutive rows per agent.
inline ad::Var best_of_n_ade(const nets::Model& model, nets::Binder& p, ad::Var f_past, ad::Var codes, const Matrix& targets, int n) {
    const ad::Var refined = model.refine(p, codes, n);
    const ad::Var pred = model.decode(p, ad::repeat_rows(f_past, n), refined);
    return ad::mean(ad::group_min(ad::ade_rows(pred, repeat_rows(targets, n)), n));
}

/// Codes from each agent's cluster Gaussian.
inline ad::Var loss_batch_path(const nets::Model& model, nets::Binder& p, ad::Var f_past, const prior::BatchGmmVars& batch,
                               const Matrix& targets, int n, std::mt19937_64& rng) {
    const Matrix eps = standard_normal(f_past.rows() * n, batch.agent_mu.cols(), rng);
    const ad::Var codes = prior::reparameterize(ad::repeat_rows(batch.agent_mu, n), ad::repeat_rows(batch.agent_var, n), eps);
    return best_of_n_ade(model, p, f_past, codes, targets, n);
}

/// Codes from the attention-weighted global mixture with soft Gumbel
/// selection at temperature `tau`.
inline ad::Var loss_global_path(const nets::Model& model, nets::Binder& p, ad::Var f_past, ad::Var attention, const nets::GmmVars& gmm,
                                const Matrix& targets, int n, double tau, std::mt19937_64& rng) {
    const ad::Var att = ad::repeat_rows(attention, n);
    const Matrix G = gumbel_noise(att.value(), rng);
    const ad::Var sel = prior::gumbel_softmax_rows(att, G, tau);
    const Matrix eps = standard_normal(att.rows(), gmm.mu.cols(), rng);
    const ad::Var codes = prior::mix_components(sel, gmm.mu, gmm.var, eps);
    return best_of_n_ade(model, p, f_past, codes, targets, n);
}

/// Entropic transport objective between the batch-averaged attention over
/// global components and the batch mixture weights.
inline ad::Var loss_distill(ad::Var attention, const nets::GmmVars& gmm, const prior::BatchGmmVars& batch, double eps, int iters,
                            bool stop_batch_grad) {
    const ad::Var abar = ad::scale(ad::sum_cols(attention), 1.0 / static_cast<double>(attention.rows()));
    ad::Var bmu = batch.comp_mu;
    ad::Var bvar = batch.comp_var;
    if (stop_batch_grad) {
        bmu = ad::stop_gradient(bmu);
        bvar = ad::stop_gradient(bvar);
    }
    const ad::Var C = ot::w2_cost(gmm.mu, gmm.sigma, bmu, ad::sqrt(bvar));
    return ot::sinkhorn_loss(C, abar, batch.weights.transpose(), eps, iters).loss;
}

// ---------------------------------------------------------------- inference

struct ObservedAgent {
    std::int64_t agent_id = 0;
    Trajectory observed;
};

struct ObservedScene {
    std::int64_t scene_id = 0;
    std::vector<ObservedAgent> agents;
};

/// Drops every future trajectory.
inline ObservedScene observe(const Scene& s) {
    ObservedScene o{s.scene_id, {}};
    for (const auto& a : s.agents) o.agents.push_back({a.agent_id, a.observed});
    return o;
}

inline std::vector<ObservedScene> observe(const std::vector<Scene>& scenes) {
    std::vector<ObservedScene> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back(observe(s));
    return out;
}

/// N futures per agent from the global prior only. Scenes are processed
/// in chunks; the draw order is fixed, so output depends only on the
/// parameters, inputs and generator state.
inline std::vector<std::vector<PredictionSet>> infer(nets::Model& model, const TrainConfig& cfg, const std::vector<ObservedScene>& scenes,
                                                     int n, std::mt19937_64& rng, std::size_t chunk = 16) {
    if (n < 1) throw DomainError("infer: N must be >= 1");
    const WindowSpec w = model.config().window;
    std::vector<std::vector<PredictionSet>> out(scenes.size());
    for (std::size_t begin = 0; begin < scenes.size(); begin += chunk) {
        const std::size_t end = std::min(scenes.size(), begin + chunk);
        std::vector<nets::AgentView> views;
        for (std::size_t s = begin; s < end; ++s)
            for (const auto& a : scenes[s].agents) views.push_back({&a.observed, nullptr, static_cast<int>(s - begin)});
        if (views.empty()) continue;
        ad::Tape tape;
        nets::Binder p(tape, model.params());
        const ad::Var f_past = model.encode_past(p, views);
        const nets::GmmVars gmm = model.global_gmm(p);
        const ad::Var att = ad::repeat_rows(model.cross_attention(p, f_past, gmm), n);
        const Matrix G = gumbel_noise(att.value(), rng);
        const ad::Var sel = cfg.hard_inference ? tape.constant(prior::hard_selection(att.value(), G))
                                               : prior::gumbel_softmax_rows(att, G, cfg.tau_gumbel);
        const Matrix eps = standard_normal(att.rows(), gmm.mu.cols(), rng);
        const ad::Var codes = model.refine(p, prior::mix_components(sel, gmm.mu, gmm.var, eps), n);
        const Matrix pred = model.decode(p, ad::repeat_rows(f_past, n), codes).value();
        std::size_t row = 0;
        for (std::size_t s = begin; s < end; ++s) {
            out[s].resize(scenes[s].agents.size());
            for (std::size_t a = 0; a < scenes[s].agents.size(); ++a) {
                const Eigen::RowVector2d origin = scenes[s].agents[a].observed.row(w.t_obs - 1);
                for (int k = 0; k < n; ++k)
                    out[s][a].samples.push_back(nets::offsets_to_trajectory(pred.row(static_cast<ad::Index>(row * n + k)), origin));
                ++row;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- evaluation

struct EvalResult {
    double made = 0.0;  ///< mean over agents of min-of-N ADE
    double mfde = 0.0;
    double branch_coverage = 0.0;  ///< fraction of scenes whose every agent spans >= 2 branches
    std::size_t agents = 0;
    std::size_t scenes = 0;
};

inline EvalResult score(const std::vector<Scene>& scenes, const std::vector<std::vector<PredictionSet>>& preds,
                        const std::vector<double>* branches_deg = nullptr) {
    if (preds.size() != scenes.size()) throw ShapeError("score: prediction count differs from scenes");
    EvalResult r;
    std::size_t covered = 0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        bool scene_ok = true;
        for (std::size_t a = 0; a < scenes[s].agents.size(); ++a) {
            const auto& agent = scenes[s].agents[a];
            const MinOfN m = min_of_n(preds[s][a], agent.future);
            r.made += m.min_ade;
            r.mfde += m.min_fde;
            ++r.agents;
            if (branches_deg != nullptr) {
                std::vector<bool> seen(branches_deg->size(), false);
                for (const auto& sample : preds[s][a].samples)
                    seen[classify_branch(agent.observed, sample.row(sample.rows() - 1), *branches_deg)] = true;
                if (std::count(seen.begin(), seen.end(), true) < 2) scene_ok = false;
            }
        }
        if (scene_ok) ++covered;
    }
    if (r.agents == 0) throw EmptyDatasetError("score: no agents");
    r.made /= static_cast<double>(r.agents);
    r.mfde /= static_cast<double>(r.agents);
    r.scenes = scenes.size();
    r.branch_coverage = static_cast<double>(covered) / static_cast<double>(scenes.size());
    return r;
}

inline EvalResult evaluate(nets::Model& model, const TrainConfig& cfg, const std::vector<Scene>& scenes, int n, std::mt19937_64& rng,
                           const std::vector<double>* branches_deg = nullptr) {
    return score(scenes, infer(model, cfg, observe(scenes), n, rng), branches_deg);
}

// ---------------------------------------------------------------- trainer

/// Owns the model, optimizer and the training random stream.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg)
        : cfg_(validated(cfg)), model_(cfg_.model, cfg_.seed), opt_(cfg_.lr, cfg_.weight_decay), rng_(stream_seed(cfg_.seed, 1)) {}

    Trainer(const TrainConfig& cfg, nets::Model model)
        : cfg_(validated(cfg)), model_(std::move(model)), opt_(cfg_.lr, cfg_.weight_decay), rng_(stream_seed(cfg_.seed, 1)) {}

    const TrainConfig& config() const { return cfg_; }
    nets::Model& model() { return model_; }
    std::mt19937_64& rng() { return rng_; }

    /// Directory receiving a diagnostic dump when a step goes non-finite;
    /// empty disables dumping.
    void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

    /// Forward pass of every loss term on one batch, one backward pass over
    /// the total, one optimizer update.
    LossReport train_step(const std::vector<const Scene*>& scenes) {
        const BatchLayout layout = make_layout(scenes, cfg_.model.window);
        nets::ParamStore& store = model_.params();
        store.zero_grad();
        ad::Tape tape;
        nets::Binder p(tape, store);
        const int n = cfg_.n_samples;
        LossReport rep;
        // non-finite activations surface as domain errors deep in the graph
        try {
            forward_backward(tape, p, layout, scenes, n, rep);
        } catch (const DomainError& e) {
            fail(scenes, rep, std::string("forward pass: ") + e.what());
        }
        for (const auto& e : store.entries())
            if (!e.grad.allFinite()) fail(scenes, rep, "non-finite gradient in " + e.name);
        opt_.step(store);
        if (!store.all_finite()) fail(scenes, rep, "non-finite parameter after update");
        ++steps_;
        return rep;
    }

private:
    void forward_backward(ad::Tape& tape, nets::Binder& p, const BatchLayout& layout, const std::vector<const Scene*>& scenes, int n,
                          LossReport& rep) {
        const ad::Var f_past = model_.encode_past(p, layout.views);
        const ad::Var f_full = model_.encode_full(p, layout.views);
        const auto [s, r] = model_.project_heads(p, f_full);
        const auto [S, R] = prior::pair_scores(s, r);
        const ad::Var soft = prior::build_adjacency(S, R, p("theta.sim"), p("theta.rep"), cfg_.tau_threshold, cfg_.tau_threshold);
        const prior::Partition part = prior::connected_components(prior::threshold_adjacency(soft.value()));
        const prior::BatchGmmVars batch = prior::batch_gmm_vars(f_full, soft, part, cfg_.model.var_floor);
        const nets::GmmVars gmm = model_.global_gmm(p);
        const ad::Var att = model_.cross_attention(p, f_past, gmm);

        rep.clusters = part.size();
        std::vector<ad::Var> terms;
        if (cfg_.uses_batch_loss()) {
            const ad::Var lb = loss_batch_path(model_, p, f_past, batch, layout.targets, n, rng_);
            rep.L_B = lb.scalar();
            terms.push_back(lb);
        }
        if (cfg_.uses_global_loss()) {
            const ad::Var lg = loss_global_path(model_, p, f_past, att, gmm, layout.targets, n, cfg_.tau_gumbel, rng_);
            rep.L_G = lg.scalar();
            terms.push_back(lg);
        }
        const ad::Var ld = loss_distill(att, gmm, batch, cfg_.eps, cfg_.sinkhorn_iters, cfg_.stop_grad_batch_distill);
        rep.L_distill = ld.scalar();
        const double lambda = cfg_.distill_weight();
        if (lambda > 0.0) terms.push_back(ad::scale(ld, lambda));
        rep.L_total = rep.L_B + rep.L_G + lambda * rep.L_distill;

        if (!std::isfinite(rep.L_total)) fail(scenes, rep, "non-finite loss");
        if (!terms.empty()) {
            ad::Var total = terms.front();
            for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
            tape.backward(total);
        }
    }

public:
    /// One pass over `train` in a shuffled order, then validation.
    EpochReport run_epoch(const std::vector<Scene>& train, const std::vector<Scene>* val, int epoch) {
        if (train.empty()) throw EmptyDatasetError("training set is empty");
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng_);
        EpochReport er;
        er.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg_.batch_size)) {
            std::vector<const Scene*> batch;
            for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(cfg_.batch_size)); ++i)
                batch.push_back(&train[order[i]]);
            const LossReport r = train_step(batch);
            er.L_B += r.L_B;
            er.L_G += r.L_G;
            er.L_distill += r.L_distill;
            er.L_total += r.L_total;
            ++batches;
        }
        const double k = static_cast<double>(batches);
        er.L_B /= k;
        er.L_G /= k;
        er.L_distill /= k;
        er.L_total /= k;
        if (val != nullptr && !val->empty()) {
            std::mt19937_64 vrng(stream_seed(cfg_.seed, 1000 + static_cast<std::uint64_t>(epoch)));
            const EvalResult ev = evaluate(model_, cfg_, *val, cfg_.n_samples, vrng);
            er.val_made = ev.made;
            er.val_mfde = ev.mfde;
            if (!std::isfinite(ev.made) || !std::isfinite(ev.mfde)) {
                std::vector<const Scene*> shown;
                for (std::size_t i = 0; i < std::min(val->size(), static_cast<std::size_t>(cfg_.batch_size)); ++i) shown.push_back(&(*val)[i]);
                LossReport rep;
                rep.L_B = er.L_B;
                rep.L_G = er.L_G;
                rep.L_distill = er.L_distill;
                rep.L_total = er.L_total;
                fail(shown, rep, "non-finite validation metric after epoch " + std::to_string(epoch));
            }
        }
        return er;
    }

    std::vector<EpochReport> fit(const std::vector<Scene>& train, const std::vector<Scene>* val,
                                 const std::function<void(const EpochReport&)>& on_epoch = {}) {
        std::vector<EpochReport> out;
        for (int e = 1; e <= cfg_.epochs; ++e) {
            out.push_back(run_epoch(train, val, e));
            if (on_epoch) on_epoch(out.back());
        }
        return out;
    }

    /// Independent generator derived from a run seed and a stream index.
    static std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        std::uint32_t words[2];
        seq.generate(words, words + 2);
        return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    }

private:
    static TrainConfig validated(const TrainConfig& c) {
        c.validate();
        return c;
    }

    [[noreturn]] void fail(const std::vector<const Scene*>& scenes, const LossReport& rep, const std::string& why) {
        std::string where;
        if (!dump_dir_.empty()) {
            const auto dir = dump_dir_ / ("nonfinite_step_" + std::to_string(steps_));
            std::filesystem::create_directories(dir);
            std::vector<Scene> copy;
            for (const Scene* s : scenes) copy.push_back(*s);
            std::ofstream data(dir / "batch.txt");
            write_ethucy(data, copy, cfg_.model.window);
            nlohmann::json j{{"step", steps_},       {"reason", why},          {"L_B", rep.L_B},
                             {"L_G", rep.L_G},       {"L_distill", rep.L_distill}, {"clusters", rep.clusters}};
            nlohmann::json bad = nlohmann::json::array();
            for (const auto& e : model_.params().entries())
                if (!e.value.allFinite() || !e.grad.allFinite()) bad.push_back(e.name);
            j["non_finite_params"] = bad;
            std::ofstream(dir / "report.json") << j.dump(2) << '\n';
            where = " (dump: " + dir.string() + ")";
        }
        throw NumericError("step " + std::to_string(steps_) + ": " + why + where);
    }

    TrainConfig cfg_;
    nets::Model model_;
    AdamW opt_;
    std::mt19937_64 rng_;
    std::filesystem::path dump_dir_;
    long steps_ = 0;
};

// ---------------------------------------------------------------- metrics CSV

inline void write_metrics_header(std::ostream& out) {
    out << "epoch,L_B,L_G,L_distill,L_total,val_mADE_N,val_mFDE_N\n";
}

inline void write_metrics_row(std::ostream& out, const EpochReport& r) {
    out << r.epoch << ',' << util::fmt_double(r.L_B) << ',' << util::fmt_double(r.L_G) << ',' << util::fmt_double(r.L_distill) << ','
        << util::fmt_double(r.L_total) << ',' << util::fmt_double(r.val_made) << ',' << util::fmt_double(r.val_mfde) << '\n';
}

}  // namespace agma::train
