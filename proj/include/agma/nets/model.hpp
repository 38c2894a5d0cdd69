#pragma once

// Every parameterised function of the forecaster: the two trajectory
// encoders, the similarity/repulsion heads, the cross-attention scorer over
// global mixture components, the shared decoder and the optional refinement
// attention across sampled latent codes.

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agma/core/trajectory.hpp"
#include "agma/nets/entmax.hpp"
#include "agma/nets/layers.hpp"

namespace agma::nets {

struct ModelConfig {
    WindowSpec window;
    int d = 32;             ///< latent / embedding dimension
    int embed = 16;         ///< per-step coordinate embedding width
    int conv_kernel = 3;
    int head_hidden = 32;
    int decoder_hidden = 64;
    int attn_dim = 32;
    int k_global = 100;
    bool use_entmax = true;
    bool refine = false;
    int refine_heads = 4;
    int refine_embed = 640;  ///< 20 * d
    double var_floor = 1e-4;
    double theta_sim_init = 0.7;
    double theta_rep_init = 0.3;

    void validate() const {
        if (window.t_obs < 1 || window.t_pred < 1) throw ConfigError("model: t_obs and t_pred must be >= 1");
        if (d < 1 || embed < 1 || head_hidden < 1 || decoder_hidden < 1 || attn_dim < 1)
            throw ConfigError("model: layer widths must be positive");
        if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("model: conv_kernel must be odd");
        if (k_global < 1) throw ConfigError("model: k_global must be >= 1");
        if (refine_heads < 1 || refine_embed % refine_heads != 0)
            throw ConfigError("model: refine_embed must be divisible by refine_heads");
        if (!(var_floor > 0.0)) throw ConfigError("model: var_floor must be positive");
    }

    bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"t_obs", c.window.t_obs},       {"t_pred", c.window.t_pred},
                       {"d", c.d},                      {"embed", c.embed},
                       {"conv_kernel", c.conv_kernel},  {"head_hidden", c.head_hidden},
                       {"decoder_hidden", c.decoder_hidden}, {"attn_dim", c.attn_dim},
                       {"k_global", c.k_global},        {"use_entmax", c.use_entmax},
                       {"refine", c.refine},            {"refine_heads", c.refine_heads},
                       {"refine_embed", c.refine_embed}, {"var_floor", c.var_floor},
                       {"theta_sim_init", c.theta_sim_init}, {"theta_rep_init", c.theta_rep_init}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    try {
        const ModelConfig d;
        c.window.t_obs = j.value("t_obs", d.window.t_obs);
        c.window.t_pred = j.value("t_pred", d.window.t_pred);
        c.d = j.value("d", d.d);
        c.embed = j.value("embed", d.embed);
        c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
        c.head_hidden = j.value("head_hidden", d.head_hidden);
        c.decoder_hidden = j.value("decoder_hidden", d.decoder_hidden);
        c.attn_dim = j.value("attn_dim", d.attn_dim);
        c.k_global = j.value("k_global", d.k_global);
        c.use_entmax = j.value("use_entmax", d.use_entmax);
        c.refine = j.value("refine", d.refine);
        c.refine_heads = j.value("refine_heads", d.refine_heads);
        c.refine_embed = j.value("refine_embed", 20 * c.d);
        c.var_floor = j.value("var_floor", d.var_floor);
        c.theta_sim_init = j.value("theta_sim_init", d.theta_sim_init);
        c.theta_rep_init = j.value("theta_rep_init", d.theta_rep_init);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

/// One agent as seen by an encoder. `future` is null for observation-only use.
struct AgentView {
    const Trajectory* observed = nullptr;
    const Trajectory* future = nullptr;
    int scene = 0;
};

/// Time-major stacked encoder input: row t*agents + a holds agent a's
/// position at step t relative to its last observed position.
struct EncoderInput {
    Matrix stacked;
    ad::Index agents = 0;
    ad::Index steps = 0;
    Mask social;
};

inline EncoderInput make_encoder_input(const std::vector<AgentView>& agents, bool with_future, const WindowSpec& w) {
    if (agents.empty()) throw DomainError("encoder input: no agents");
    EncoderInput in;
    in.agents = static_cast<ad::Index>(agents.size());
    in.steps = w.t_obs + (with_future ? w.t_pred : 0);
    in.stacked.resize(in.steps * in.agents, 2);
    std::vector<int> scenes;
    for (ad::Index a = 0; a < in.agents; ++a) {
        const AgentView& v = agents[static_cast<std::size_t>(a)];
        if (v.observed == nullptr || v.observed->rows() != w.t_obs)
            throw ShapeError("encoder input: observed trajectory must have t_obs rows");
        if (with_future && (v.future == nullptr || v.future->rows() != w.t_pred))
            throw ShapeError("encoder input: future trajectory must have t_pred rows");
        const Eigen::RowVector2d origin = v.observed->row(w.t_obs - 1);
        for (ad::Index t = 0; t < in.steps; ++t) {
            const Eigen::RowVector2d pos =
                t < w.t_obs ? Eigen::RowVector2d(v.observed->row(t)) : Eigen::RowVector2d(v.future->row(t - w.t_obs));
            in.stacked.row(t * in.agents + a) = pos - origin;
        }
        scenes.push_back(v.scene);
    }
    if (!in.stacked.allFinite()) throw DomainError("encoder input: non-finite coordinate");
    in.social = same_label_mask(scenes);
    return in;
}

/// Global mixture parameters as tape variables.
struct GmmVars {
    ad::Var mu;       ///< K x d
    ad::Var var;      ///< K x d, >= var_floor
    ad::Var sigma;    ///< K x d
    ad::Var weights;  ///< 1 x K base mixture weights
};

class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        params_.set_seed(seed);
        std::mt19937_64 rng(seed);
        const int d = cfg_.d;
        for (const char* pre : {"enc_past", "enc_full"}) {
            const std::string p(pre);
            add_linear(params_, p + ".embed", 2, cfg_.embed, rng);
            add_linear(params_, p + ".conv", cfg_.conv_kernel * cfg_.embed, d, rng);
            add_linear(params_, p + ".gru_ih", d, 3 * d, rng, 1.0);
            add_linear(params_, p + ".gru_hh", d, 3 * d, rng, 1.0);
            params_.add(p + ".social.Wq", fan_in_uniform(d, d, d, 1.0, rng));
            params_.add(p + ".social.Wk", fan_in_uniform(d, d, d, 1.0, rng));
            params_.add(p + ".social.Wv", fan_in_uniform(d, d, d, 1.0, rng));
        }
        for (const char* pre : {"sim", "rep"}) {
            add_linear(params_, std::string(pre) + ".l1", d, cfg_.head_hidden, rng);
            add_linear(params_, std::string(pre) + ".l2", cfg_.head_hidden, d, rng);
        }
        add_linear(params_, "xattn.query", d, cfg_.attn_dim, rng);
        add_linear(params_, "xattn.key", 2 * d + 1, cfg_.attn_dim, rng);
        add_linear(params_, "dec.l1", 2 * d, cfg_.decoder_hidden, rng);
        add_linear(params_, "dec.l2", cfg_.decoder_hidden, cfg_.decoder_hidden, rng);
        add_linear(params_, "dec.out", cfg_.decoder_hidden, 2 * cfg_.window.t_pred, rng);
        if (cfg_.refine) {
            const int e = cfg_.refine_embed;
            params_.add("refine.Wq", fan_in_uniform(d, e, d, 1.0, rng));
            params_.add("refine.Wk", fan_in_uniform(d, e, d, 1.0, rng));
            params_.add("refine.Wv", fan_in_uniform(d, e, d, 1.0, rng));
            params_.add("refine.Wo", fan_in_uniform(e, d, e, 1.0, rng));
        }

        std::normal_distribution<double> normal(0.0, 1.0);
        Matrix mu(cfg_.k_global, d);
        for (ad::Index j = 0; j < mu.cols(); ++j)
            for (ad::Index i = 0; i < mu.rows(); ++i) mu(i, j) = normal(rng);
        params_.add("gmm.mu", std::move(mu));
        // softplus(raw) + floor = 1
        const double raw = std::log(std::expm1(1.0 - cfg_.var_floor));
        params_.add("gmm.var_raw", Matrix::Constant(cfg_.k_global, d, raw));
        params_.add("gmm.logits", Matrix::Zero(1, cfg_.k_global));
        params_.add("theta.sim", Matrix::Constant(1, 1, cfg_.theta_sim_init));
        params_.add("theta.rep", Matrix::Constant(1, 1, cfg_.theta_rep_init));
    }

    /// Restores a model from stored parameters; every tensor must match the
    /// shapes implied by `cfg`.
    Model(const ModelConfig& cfg, ParamStore params) : Model(cfg, params.seed()) {
        for (const auto& e : params_.entries()) {
            if (!params.contains(e.name)) throw CheckpointError("checkpoint lacks parameter " + e.name);
            const Matrix& v = params.value(e.name);
            if (v.rows() != e.value.rows() || v.cols() != e.value.cols())
                throw CheckpointError("checkpoint shape mismatch for " + e.name);
        }
        if (params.entries().size() != params_.entries().size())
            throw CheckpointError("checkpoint has unexpected parameters");
        for (auto& e : params_.entries()) e.value = params.value(e.name);
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // ------------------------------------------------------------ encoders

    /// Coordinate MLP -> temporal convolution -> GRU -> social self-attention.
    ad::Var encode(Binder& p, const std::string& pre, const EncoderInput& in) const {
        const ad::Index A = in.agents;
        const ad::Index T = in.steps;
        const ad::Index d = cfg_.d;
        const ad::Var x = p.constant(in.stacked);
        const ad::Var e = ad::relu(linear(p, pre + ".embed", x));

        const ad::Index half = cfg_.conv_kernel / 2;
        std::vector<ad::Var> padded_parts;
        const ad::Var pad = p.constant(Matrix::Zero(half * A, cfg_.embed));
        if (half > 0) padded_parts.push_back(pad);
        padded_parts.push_back(e);
        if (half > 0) padded_parts.push_back(pad);
        const ad::Var padded = ad::vcat(padded_parts);
        std::vector<ad::Var> taps;
        for (ad::Index k = 0; k < cfg_.conv_kernel; ++k) taps.push_back(ad::slice_rows(padded, k * A, T * A));
        const ad::Var c = ad::relu(linear(p, pre + ".conv", ad::hcat(taps)));

        const ad::Var xi = linear(p, pre + ".gru_ih", c);
        const ad::Var U = p(pre + ".gru_hh.W");
        const ad::Var bh = p(pre + ".gru_hh.b");
        ad::Var h = p.constant(Matrix::Zero(A, d));
        for (ad::Index t = 0; t < T; ++t) {
            const ad::Var gi = ad::slice_rows(xi, t * A, A);
            const ad::Var gh = ad::add_row(ad::matmul(h, U), bh);
            const ad::Var r = ad::sigmoid(ad::add(ad::slice_cols(gi, 0, d), ad::slice_cols(gh, 0, d)));
            const ad::Var u = ad::sigmoid(ad::add(ad::slice_cols(gi, d, d), ad::slice_cols(gh, d, d)));
            const ad::Var n = ad::tanh(ad::add(ad::slice_cols(gi, 2 * d, d), ad::mul(r, ad::slice_cols(gh, 2 * d, d))));
            h = ad::add(n, ad::mul(u, ad::sub(h, n)));
        }
        return masked_self_attention(p, pre + ".social", h, in.social);
    }

    ad::Var encode_past(Binder& p, const std::vector<AgentView>& agents) const {
        return encode(p, "enc_past", make_encoder_input(agents, false, cfg_.window));
    }

    ad::Var encode_full(Binder& p, const std::vector<AgentView>& agents) const {
        return encode(p, "enc_full", make_encoder_input(agents, true, cfg_.window));
    }

    // ------------------------------------------------------------ heads

    ad::Var head(Binder& p, const std::string& pre, ad::Var f) const {
        return ad::sigmoid(linear(p, pre + ".l2", ad::relu(linear(p, pre + ".l1", f))));
    }

    /// Similarity and repulsion projections, each in (0, 1)^d.
    std::pair<ad::Var, ad::Var> project_heads(Binder& p, ad::Var f_full) const {
        return {head(p, "sim", f_full), head(p, "rep", f_full)};
    }

    // ------------------------------------------------------------ global mixture

    GmmVars global_gmm(Binder& p) const {
        GmmVars g;
        g.mu = p("gmm.mu");
        g.var = ad::add_scalar(ad::softplus(p("gmm.var_raw")), cfg_.var_floor);
        g.sigma = ad::sqrt(g.var);
        g.weights = ad::softmax_rows(p("gmm.logits"));
        return g;
    }

    /// Attention of each query row over mixture components. Keys are the
    /// concatenation (mean, variance, weight) of every component mapped
    /// through a learned linear layer. Rows sum to one.
    ad::Var cross_attention(Binder& p, ad::Var f_past, ad::Var mu, ad::Var var, ad::Var weights) const {
        if (mu.rows() < 1) throw DomainError("cross_attention: empty mixture");
        const ad::Var keys_in = ad::hcat({mu, var, ad::transpose(weights)});
        const ad::Var k = linear(p, "xattn.key", keys_in);
        const ad::Var q = linear(p, "xattn.query", f_past);
        const ad::Var scores = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim)));
        return cfg_.use_entmax ? entmax15_rows(scores) : ad::softmax_rows(scores);
    }

    ad::Var cross_attention(Binder& p, ad::Var f_past, const GmmVars& g) const {
        return cross_attention(p, f_past, g.mu, g.var, g.weights);
    }

    // ------------------------------------------------------------ decoder

    /// MLP over (f_past, z); each output row holds T_pred interleaved (x, y)
    /// offsets from the agent's last observed position.
    ad::Var decode(Binder& p, ad::Var f_past_rows, ad::Var z) const {
        const ad::Var h1 = ad::relu(linear(p, "dec.l1", ad::hcat({f_past_rows, z})));
        const ad::Var h2 = ad::relu(linear(p, "dec.l2", h1));
        return linear(p, "dec.out", h2);
    }

    // ------------------------------------------------------------ refinement

    /// Multi-head self-attention among the codes of each consecutive group
    /// of `group` rows (one group per agent), with a residual connection.
    /// Identity when refinement is disabled.
    ad::Var refine(Binder& p, ad::Var codes, ad::Index group) const {
        if (!cfg_.refine) return codes;
        if (group < 1 || codes.rows() % group != 0) throw ShapeError("refine: rows not divisible by group");
        std::vector<int> labels(static_cast<std::size_t>(codes.rows()));
        for (std::size_t r = 0; r < labels.size(); ++r) labels[r] = static_cast<int>(static_cast<ad::Index>(r) / group);
        const Mask mask = same_label_mask(labels);
        const ad::Var q = ad::matmul(codes, p("refine.Wq"));
        const ad::Var k = ad::matmul(codes, p("refine.Wk"));
        const ad::Var v = ad::matmul(codes, p("refine.Wv"));
        const ad::Index eh = cfg_.refine_embed / cfg_.refine_heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(eh));
        std::vector<ad::Var> heads;
        for (int h = 0; h < cfg_.refine_heads; ++h) {
            const ad::Var qh = ad::slice_cols(q, h * eh, eh);
            const ad::Var kh = ad::slice_cols(k, h * eh, eh);
            const ad::Var vh = ad::slice_cols(v, h * eh, eh);
            const ad::Var w = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale), &mask);
            heads.push_back(ad::matmul(w, vh));
        }
        return ad::add(codes, ad::matmul(ad::hcat(heads), p("refine.Wo")));
    }

private:
    ModelConfig cfg_;
    ParamStore params_;
};

/// Offsets from the decoder, row-major (x0, y0, x1, y1, ...), back to
/// absolute positions.
inline Trajectory offsets_to_trajectory(const Eigen::RowVectorXd& row, const Eigen::RowVector2d& origin) {
    const auto steps = row.size() / 2;
    Trajectory t(steps, 2);
    for (Eigen::Index s = 0; s < steps; ++s) {
        t(s, 0) = origin(0) + row(2 * s);
        t(s, 1) = origin(1) + row(2 * s + 1);
    }
    return t;
}

/// Future positions relative to `origin`, flattened to one interleaved row.
inline Eigen::RowVectorXd trajectory_to_offsets(const Trajectory& t, const Eigen::RowVector2d& origin) {
    Eigen::RowVectorXd row(2 * t.rows());
    for (Eigen::Index s = 0; s < t.rows(); ++s) {
        row(2 * s) = t(s, 0) - origin(0);
        row(2 * s + 1) = t(s, 1) - origin(1);
    }
    return row;
}

}  // namespace agma::nets
