#pragma once

#include <cmath>
#include <vector>

#include "agma/nets/param_store.hpp"

namespace agma::train {

/// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(nets::ParamStore& store) {
        auto& entries = store.entries();
        if (m_.empty()) {
            for (const auto& e : entries) {
                m_.push_back(nets::Matrix::Zero(e.value.rows(), e.value.cols()));
                v_.push_back(nets::Matrix::Zero(e.value.rows(), e.value.cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        std::size_t i = 0;
        for (auto& e : entries) {
            auto& m = m_[i];
            auto& v = v_[i];
            ++i;
            m = b1_ * m + (1.0 - b1_) * e.grad;
            v = b2_ * v + (1.0 - b2_) * e.grad.cwiseProduct(e.grad);
            e.value *= 1.0 - lr_ * wd_;
            e.value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
        }
    }

    long steps() const { return t_; }

private:
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<nets::Matrix> m_, v_;
};

}  // namespace agma::train
