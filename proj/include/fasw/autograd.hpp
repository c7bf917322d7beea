#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fasw/tensor.hpp"

// Tape-free reverse-mode differentiation over a dynamically built graph.
// Each op records its inputs only when one of them requires a gradient, so
// forward passes through frozen parameters build no graph at all.

namespace fasw::ad {

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Tensor& g);
    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on);

    /// Gradient accumulated by `backward`; zeros when nothing flowed here.
    Tensor grad() const;
    void zero_grad();

    /// Scalar value of a one-element tensor.
    double item() const;

    /// Same value, cut from the graph.
    Var detach() const;

    const std::shared_ptr<Node>& node() const noexcept { return node_; }

    static Var from_node(std::shared_ptr<Node> node);

private:
    std::shared_ptr<Node> node_;
};

/// While alive on this thread, ops record no graph (evaluation mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool active();

private:
    bool previous_;
};

/// Builds a result node; `fn` is kept only if some input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn);

/// Reverse pass from a one-element root, seeding d(root)/d(root) = 1.
void backward(const Var& root);

}  // namespace fasw::ad
