#pragma once

#include <string>

#include "agma/ad/ops.hpp"
#include "agma/nets/param_store.hpp"

namespace agma::nets {

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Registers `prefix.W` (in x out) and `prefix.b` (1 x out).
inline void add_linear(ParamStore& store, const std::string& prefix, ad::Index in, ad::Index out,
                       std::mt19937_64& rng, double gain = std::sqrt(3.0)) {
    store.add(prefix + ".W", fan_in_uniform(in, out, in, gain, rng));
    store.add(prefix + ".b", Matrix::Zero(1, out));
}

inline ad::Var linear(Binder& p, const std::string& prefix, ad::Var x) {
    return ad::add_row(ad::matmul(x, p(prefix + ".W")), p(prefix + ".b"));
}

/// Single-head scaled dot-product self-attention over rows of `x` with a
/// residual connection. Row i attends to row j only where mask(i, j).
inline ad::Var masked_self_attention(Binder& p, const std::string& prefix, ad::Var x, const Mask& mask) {
    const ad::Var q = ad::matmul(x, p(prefix + ".Wq"));
    const ad::Var k = ad::matmul(x, p(prefix + ".Wk"));
    const ad::Var v = ad::matmul(x, p(prefix + ".Wv"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    const ad::Var w = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), scale), &mask);
    return ad::add(x, ad::matmul(w, v));
}

/// Block-diagonal mask: rows share a block when they carry the same label.
inline Mask same_label_mask(const std::vector<int>& labels) {
    const auto n = static_cast<ad::Index>(labels.size());
    Mask m(n, n);
    for (ad::Index i = 0; i < n; ++i)
        for (ad::Index j = 0; j < n; ++j)
            m(i, j) = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
    return m;
}

}  // namespace agma::nets
