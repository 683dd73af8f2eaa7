#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "slidemil/errors.hpp"
#include "slidemil/tensor.hpp"

namespace slidemil {

// AdamW with decoupled weight decay: the decay multiplies the weights
// directly (p *= 1 - lr*wd) before the bias-corrected moment update, so it
// never flows through the moment estimates.
class AdamW {
public:
    struct Hyper {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(std::vector<Tensor*> params, Hyper hyper)
        : params_(std::move(params)), hyper_(hyper) {
        if (hyper_.lr < 0.0) throw ValidationError("AdamW lr must be >= 0");
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->size(), 0.0);
            v_[i].assign(params_[i]->size(), 0.0);
        }
    }

    void set_lr(double lr) {
        if (lr < 0.0) throw ValidationError("AdamW lr must be >= 0");
        hyper_.lr = lr;
    }
    const Hyper& hyper() const { return hyper_; }

    // grads[i] pairs with params[i]; updates parameters in place.
    void step(const std::vector<std::vector<double>>& grads) {
        if (grads.size() != params_.size())
            throw DimensionError("AdamW step: got " + std::to_string(grads.size()) +
                                 " gradients for " + std::to_string(params_.size()) +
                                 " parameters");
        ++t_;
        const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = *params_[i];
            const auto& g = grads[i];
            if (g.size() != p.size())
                throw DimensionError("AdamW step: gradient length mismatch at parameter " +
                                     std::to_string(i));
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = hyper_.beta1 * m[j] + (1.0 - hyper_.beta1) * g[j];
                v[j] = hyper_.beta2 * v[j] + (1.0 - hyper_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p.at(j) *= 1.0 - hyper_.lr * hyper_.weight_decay;
                p.at(j) -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
            }
        }
    }

private:
    std::vector<Tensor*> params_;
    Hyper hyper_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace slidemil
