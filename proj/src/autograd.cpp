#include "fasw/autograd.hpp"

#include <unordered_set>

#include "fasw/error.hpp"

namespace fasw::ad {

Tensor& Node::grad_buffer() {
    if (grad.shape() != value.shape()) {
        grad = Tensor(value.shape(), 0.0);
    }
    return grad;
}

void Node::accumulate(const Tensor& g) {
    Tensor& buf = grad_buffer();
    require(g.size() == buf.size(), ErrorKind::input, "gradient shape mismatch");
    double* dst = buf.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += src[i];
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
}

void Var::set_requires_grad(bool on) { node_->requires_grad = on; }

Tensor Var::grad() const {
    if (node_->grad.shape() != node_->value.shape()) {
        return Tensor(node_->value.shape(), 0.0);
    }
    return node_->grad;
}

void Var::zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(0.0);
}

double Var::item() const {
    require(node_->value.size() == 1, ErrorKind::input,
            "item() on tensor of shape " + shape_string(node_->value.shape()));
    return node_->value[0];
}

Var Var::detach() const { return Var(node_->value, false); }

namespace {
thread_local bool t_no_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(t_no_grad) { t_no_grad = true; }
NoGradGuard::~NoGradGuard() { t_no_grad = previous_; }
bool NoGradGuard::active() { return t_no_grad; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (t_no_grad) return Var::from_node(std::move(node));
    bool any = false;
    for (const Var& in : inputs) any = any || in.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const Var& in : inputs) node->inputs.push_back(in.node());
        node->backward_fn = std::move(fn);
    }
    return Var::from_node(std::move(node));
}

void backward(const Var& root) {
    require(root.defined() && root.value().size() == 1, ErrorKind::input,
            "backward() requires a one-element root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS; reversed it is a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are scratch; leaves keep accumulating.
    for (Node* n : order) {
        if (n->backward_fn) n->grad = Tensor(n->value.shape(), 0.0);
    }
    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
    for (Node* n : order) {
        if (n->backward_fn) n->grad = Tensor();
    }
}

}  // namespace fasw::ad
