#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "agma/nets/model.hpp"
#include "agma/util/errors.hpp"

namespace agma::train {

enum class Variant { full, no_LB, no_LG, no_distill };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_LB: return "no_LB";
        case Variant::no_LG: return "no_LG";
        case Variant::no_distill: return "no_distill";
    }
    return "full";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_LB") return Variant::no_LB;
    if (s == "no_LG") return Variant::no_LG;
    if (s == "no_distill") return Variant::no_distill;
    throw ConfigError("unknown variant " + s);
}

struct TrainConfig {
    nets::ModelConfig model;
    int n_samples = 20;
    double lambda = 0.1;
    double eps = 0.1;
    int sinkhorn_iters = 20;
    double tau_threshold = 0.1;
    double tau_gumbel = 1.0;
    bool hard_inference = false;         ///< argmax component selection at test time instead of soft Gumbel
    bool stop_grad_batch_distill = false;  ///< detach the batch side of the transport cost
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int epochs = 50;
    int batch_size = 4;  ///< scenes per step
    std::uint64_t seed = 0;
    Variant variant = Variant::full;

    bool uses_batch_loss() const { return variant != Variant::no_LB; }
    bool uses_global_loss() const { return variant != Variant::no_LG; }
    double distill_weight() const { return variant == Variant::no_distill ? 0.0 : lambda; }

    void validate() const {
        model.validate();
        if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
        if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
        if (!(eps > 0.0)) throw ConfigError("eps must be positive");
        if (sinkhorn_iters < 1) throw ConfigError("sinkhorn_iters must be >= 1");
        if (!(tau_threshold > 0.0) || !(tau_gumbel > 0.0)) throw ConfigError("temperatures must be positive");
        if (!(lr > 0.0) || weight_decay < 0.0) throw ConfigError("invalid optimizer settings");
        if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
    }

    bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"model", c.model},
                       {"n_samples", c.n_samples},
                       {"lambda", c.lambda},
                       {"eps", c.eps},
                       {"sinkhorn_iters", c.sinkhorn_iters},
                       {"tau_threshold", c.tau_threshold},
                       {"tau_gumbel", c.tau_gumbel},
                       {"hard_inference", c.hard_inference},
                       {"stop_grad_batch_distill", c.stop_grad_batch_distill},
                       {"lr", c.lr},
                       {"weight_decay", c.weight_decay},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed},
                       {"variant", to_string(c.variant)}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    try {
        const TrainConfig d;
        c.model = j.contains("model") ? j.at("model").get<nets::ModelConfig>() : d.model;
        c.n_samples = j.value("n_samples", d.n_samples);
        c.lambda = j.value("lambda", d.lambda);
        c.eps = j.value("eps", d.eps);
        c.sinkhorn_iters = j.value("sinkhorn_iters", d.sinkhorn_iters);
        c.tau_threshold = j.value("tau_threshold", d.tau_threshold);
        c.tau_gumbel = j.value("tau_gumbel", d.tau_gumbel);
        c.hard_inference = j.value("hard_inference", d.hard_inference);
        c.stop_grad_batch_distill = j.value("stop_grad_batch_distill", d.stop_grad_batch_distill);
        c.lr = j.value("lr", d.lr);
        c.weight_decay = j.value("weight_decay", d.weight_decay);
        c.epochs = j.value("epochs", d.epochs);
        c.batch_size = j.value("batch_size", d.batch_size);
        c.seed = j.value("seed", d.seed);
        c.variant = variant_from_string(j.value("variant", std::string("full")));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
}

}  // namespace agma::train
