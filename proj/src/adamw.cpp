#include "structformer/adamw.hpp"

#include <algorithm>
#include <cmath>

namespace structformer {

AdamW::AdamW(const ParamMap& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
    moment1_.reserve(params.size());
    moment2_.reserve(params.size());
    for (const auto& p : params) {
        moment1_.emplace_back(p.tensor.numel(), real(0));
        moment2_.emplace_back(p.tensor.numel(), real(0));
    }
}

void AdamW::step(real lr) {
    ++step_;
    const real bc1 = real(1) - static_cast<real>(std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_)));
    const real bc2 = real(1) - static_cast<real>(std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_)));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        const auto& p = params_[k];
        if (!p.tensor.requires_grad()) continue;
        check(p.tensor.grad_allocated(), "adamw: parameter '" + p.name + "' has no gradient");
        const auto& g = p.tensor.grad();
        auto& theta = const_cast<Tensor&>(p.tensor).values();
        auto& m = moment1_[k];
        auto& v = moment2_[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (real(1) - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (real(1) - cfg_.beta2) * g[i] * g[i];
            const real m_hat = m[i] / bc1;
            const real v_hat = v[i] / bc2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * theta[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (const auto& p : params_) {
        auto& t = const_cast<Tensor&>(p.tensor);
        auto& g = t.grad();  // allocates on first use
        std::fill(g.begin(), g.end(), real(0));
    }
}

}  // namespace structformer
