#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "structformer/common.hpp"
#include "structformer/rng.hpp"

namespace structformer {

struct TensorNode {
    std::vector<int> shape;
    std::vector<real> values;   // row-major
    std::vector<real> grad;     // empty until first accumulation
    bool requires_grad = false;
};

// Value-semantics handle onto a shared node; the currency of the
// differentiable core. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, real value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<real> values, bool requires_grad = false);
    static Tensor scalar(real value);
    static Tensor randn(std::vector<int> shape, Rng& rng, real stddev, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return node_->values.size(); }
    const std::vector<int>& shape() const { return node_->shape; }
    std::string shape_str() const;

    std::vector<real>& values() { return node_->values; }
    const std::vector<real>& values() const { return node_->values; }

    // Gradient buffer, zero-filled on first access.
    std::vector<real>& grad();
    const std::vector<real>& grad() const { return node_->grad; }
    bool grad_allocated() const { return !node_->grad.empty(); }
    void zero_grad();

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    real item() const;
    bool all_finite() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Records backward steps in execution order; backward() replays them exactly
// once in reverse, so gradient accumulation order is fixed and repeat runs
// are bit-identical.
class Tape {
public:
    void record(std::function<void()> backward_step) {
        steps_.push_back(std::move(backward_step));
    }

    void backward(const Tensor& loss);

    void clear() { steps_.clear(); }
    std::size_t size() const { return steps_.size(); }

private:
    std::vector<std::function<void()>> steps_;
};

// One tape per thread; distinct threads never share recording state.
Tape& active_tape();

bool grad_enabled();

// Disables recording within a scope (evaluation, finite-difference probes).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Trainable tensor with a stable name; the unit of optimization,
// checkpointing, and parameter counting.
struct NamedParam {
    std::string name;
    Tensor tensor;
};

using ParamMap = std::vector<NamedParam>;

std::int64_t count_trainable(const ParamMap& params);
const Tensor& find_param(const ParamMap& params, const std::string& name);

}  // namespace structformer
