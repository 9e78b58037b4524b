#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sessrec/common.hpp"
#include "sessrec/params.hpp"
#include "sessrec/tensor.hpp"

namespace sessrec {

/// Adam with global gradient-norm clipping. step() consumes the gradients
/// accumulated in the store (and zeroes them afterwards).
class Adam {
public:
    explicit Adam(double lr = 1e-3, double clip = 5.0,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), clip_(clip), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    int64_t step_count() const { return t_; }

    void step(ParameterStore& store) {
        for (const auto& blk : store.blocks())
            if (!all_finite(blk.grad.a))
                throw NumericError("non-finite gradient in block " + blk.name);
        ensure_state(store);

        if (clip_ > 0.0) {
            double norm = std::sqrt(store.grad_sq_norm());
            if (norm > clip_) store.scale_grads(clip_ / norm);
        }

        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        auto& blocks = store.blocks();
        for (size_t b = 0; b < blocks.size(); ++b) {
            auto& val = blocks[b].value.a;
            auto& grd = blocks[b].grad.a;
            auto& m = m_[b];
            auto& v = v_[b];
            for (size_t i = 0; i < val.size(); ++i) {
                const double g = grd[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
        store.zero_grads();
    }

private:
    void ensure_state(const ParameterStore& store) {
        if (m_.empty()) {
            for (const auto& blk : store.blocks()) {
                m_.emplace_back(blk.value.size(), 0.0);
                v_.emplace_back(blk.value.size(), 0.0);
            }
            return;
        }
        if (m_.size() != store.blocks().size())
            throw PreconditionError("optimizer bound to a different store layout");
        for (size_t b = 0; b < m_.size(); ++b)
            if (m_[b].size() != store.blocks()[b].value.size())
                throw PreconditionError("optimizer bound to a different store layout");
    }

    double lr_, clip_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Vec> m_, v_;
};

}  // namespace sessrec
