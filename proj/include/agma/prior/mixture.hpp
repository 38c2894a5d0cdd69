#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agma/util/csv.hpp"
#include "agma/util/errors.hpp"

namespace agma::prior {

/// Diagonal Gaussian with a mixture weight.
struct GaussianComponent {
    double weight = 0.0;
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
};

struct MixturePrior {
    std::vector<GaussianComponent> components;

    std::size_t size() const { return components.size(); }
    Eigen::Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }

    /// Weights positive and summing to 1 within `tol`, variances nonnegative,
    /// consistent dimensions.
    void validate(double tol = 1e-9) const {
        if (components.empty()) throw DomainError("mixture has no components");
        double total = 0.0;
        for (const auto& c : components) {
            if (!(c.weight > 0.0)) throw DomainError("mixture weight must be positive");
            if (c.mean.size() != dim() || c.var.size() != dim()) throw ShapeError("mixture components differ in dimension");
            if ((c.var.array() < 0.0).any()) throw DomainError("negative variance");
            if (!c.mean.allFinite() || !c.var.allFinite()) throw DomainError("non-finite mixture parameter");
            total += c.weight;
        }
        if (std::fabs(total - 1.0) > tol) throw DomainError("mixture weights do not sum to 1");
    }

    Eigen::MatrixXd means() const {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), dim());
        for (std::size_t k = 0; k < size(); ++k) m.row(static_cast<Eigen::Index>(k)) = components[k].mean.transpose();
        return m;
    }
    Eigen::MatrixXd variances() const {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), dim());
        for (std::size_t k = 0; k < size(); ++k) m.row(static_cast<Eigen::Index>(k)) = components[k].var.transpose();
        return m;
    }
    Eigen::VectorXd weights() const {
        Eigen::VectorXd w(static_cast<Eigen::Index>(size()));
        for (std::size_t k = 0; k < size(); ++k) w(static_cast<Eigen::Index>(k)) = components[k].weight;
        return w;
    }
};

/// log N(z; mean, diag(var)). Zero-variance coordinates must match exactly.
inline double log_gaussian_diag(const Eigen::VectorXd& z, const Eigen::VectorXd& mean, const Eigen::VectorXd& var) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double diff = z(i) - mean(i);
        if (var(i) <= 0.0) {
            if (diff != 0.0) return -std::numeric_limits<double>::infinity();
            continue;
        }
        acc += -0.5 * (std::log(2.0 * std::numbers::pi * var(i)) + diff * diff / var(i));
    }
    return acc;
}

/// log sum_k w_k N(z; mu_k, diag var_k) with log-sum-exp stabilisation.
/// `weights` overrides the stored component weights when given.
inline double log_density(const MixturePrior& m, const Eigen::VectorXd& z, const Eigen::VectorXd* weights = nullptr) {
    if (z.size() != m.dim()) throw ShapeError("log_density: dimension mismatch");
    std::vector<double> terms;
    terms.reserve(m.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.size(); ++k) {
        const double w = weights ? (*weights)(static_cast<Eigen::Index>(k)) : m.components[k].weight;
        if (w <= 0.0) continue;
        const double t = std::log(w) + log_gaussian_diag(z, m.components[k].mean, m.components[k].var);
        terms.push_back(t);
        top = std::max(top, t);
    }
    if (std::isinf(top)) return top;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - top);
    return top + std::log(s);
}

// ---------------------------------------------------------------- CSV

/// Header `g,pi,mu_0..mu_{d-1},var_0..var_{d-1}`; one row per component.
inline void write_mixture_csv(std::ostream& out, const MixturePrior& m) {
    const auto d = m.dim();
    out << "g,pi";
    for (Eigen::Index i = 0; i < d; ++i) out << ",mu_" << i;
    for (Eigen::Index i = 0; i < d; ++i) out << ",var_" << i;
    out << '\n';
    for (std::size_t g = 0; g < m.size(); ++g) {
        const auto& c = m.components[g];
        out << g << ',' << util::fmt_double(c.weight);
        for (Eigen::Index i = 0; i < d; ++i) out << ',' << util::fmt_double(c.mean(i));
        for (Eigen::Index i = 0; i < d; ++i) out << ',' << util::fmt_double(c.var(i));
        out << '\n';
    }
}

inline MixturePrior read_mixture_csv(std::istream& in) {
    const util::CsvTable t = util::read_csv(in);
    if (t.header.size() < 2 || (t.header.size() - 2) % 2 != 0 || t.header[0] != "g" || t.header[1] != "pi")
        throw ParseError("mixture csv: unexpected header");
    const auto d = static_cast<Eigen::Index>((t.header.size() - 2) / 2);
    MixturePrior m;
    for (const auto& row : t.rows) {
        GaussianComponent c;
        c.weight = row[1];
        c.mean.resize(d);
        c.var.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            c.mean(i) = row[static_cast<std::size_t>(2 + i)];
            c.var(i) = row[static_cast<std::size_t>(2 + d + i)];
        }
        m.components.push_back(std::move(c));
    }
    return m;
}

}  // namespace agma::prior
