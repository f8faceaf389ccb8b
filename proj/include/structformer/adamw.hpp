#pragma once

#include <cstdint>
#include <vector>

#include "structformer/tensor.hpp"

namespace structformer {

struct AdamWConfig {
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
    real weight_decay = real(0);  // decoupled, applied outside the gradient path
};

// AdamW with bias correction over a fixed parameter map. The learning rate
// is passed per step so a scheduler can drive it.
class AdamW {
public:
    AdamW(const ParamMap& params, AdamWConfig cfg = {});

    void step(real lr);
    void zero_grad();
    std::int64_t step_count() const { return step_; }

private:
    const ParamMap& params_;
    AdamWConfig cfg_;
    std::vector<std::vector<real>> moment1_;
    std::vector<std::vector<real>> moment2_;
    std::int64_t step_ = 0;
};

}  // namespace structformer
