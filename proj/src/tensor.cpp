#include "structformer/tensor.hpp"

#include <numeric>

namespace structformer {

namespace {

thread_local Tape t_tape;
thread_local bool t_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        check_dims(d > 0, "tensor dimensions must be positive, got " + shape_to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->values.assign(shape_numel(shape), real(0));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, real value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = value;
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values, bool requires_grad) {
    check_dims(shape_numel(shape) == values.size(),
               "value count " + std::to_string(values.size()) + " does not match shape " +
                   shape_to_string(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(real value) {
    return from({1}, {value});
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, real stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) {
        v = static_cast<real>(rng.normal()) * stddev;
    }
    return t;
}

std::string Tensor::shape_str() const {
    return shape_to_string(node_->shape);
}

std::vector<real>& Tensor::grad() {
    if (node_->grad.empty()) {
        node_->grad.assign(node_->values.size(), real(0));
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), real(0));
    }
}

real Tensor::item() const {
    check_dims(numel() == 1, "item() requires a scalar tensor, got " + shape_str());
    return node_->values[0];
}

bool Tensor::all_finite() const {
    for (real v : node_->values) {
        if (!is_finite(v)) return false;
    }
    return true;
}

void Tape::backward(const Tensor& loss) {
    check_dims(loss.numel() == 1, "backward() requires a scalar loss, got " + loss.shape_str());
    loss.node()->grad.assign(1, real(1));
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        (*it)();
    }
}

Tape& active_tape() {
    return t_tape;
}

bool grad_enabled() {
    return t_grad_enabled;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
    t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    t_grad_enabled = previous_;
}

std::int64_t count_trainable(const ParamMap& params) {
    std::int64_t n = 0;
    for (const auto& p : params) {
        if (p.tensor.requires_grad()) {
            n += static_cast<std::int64_t>(p.tensor.numel());
        }
    }
    return n;
}

const Tensor& find_param(const ParamMap& params, const std::string& name) {
    for (const auto& p : params) {
        if (p.name == name) return p.tensor;
    }
    throw std::runtime_error("parameter not found: " + name);
}

}  // namespace structformer
