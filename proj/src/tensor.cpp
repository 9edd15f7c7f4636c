#include "muff/tensor.hpp"

#include <unordered_set>

#include "muff/error.hpp"

namespace muff {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            s += ", ";
        }
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), value);
    return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (data.size() != shape_numel(shape)) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->op = "leaf";
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) {
    return from({1}, {value});
}

detail::Node& Tensor::node() const {
    if (!node_) {
        throw Error("use of undefined tensor");
    }
    return *node_;
}

const Shape& Tensor::shape() const {
    return node().shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(s));
    }
    return s[axis];
}

std::span<const double> Tensor::data() const {
    return node().data;
}

std::span<double> Tensor::mutable_data() {
    return node().data;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    }
    return data()[0];
}

bool Tensor::requires_grad() const {
    return node().requires_grad;
}

bool Tensor::has_grad() const {
    return !node().grad.empty();
}

std::span<const double> Tensor::grad() const {
    return node().grad_buffer();
}

void Tensor::zero_grad() {
    node().grad.clear();
}

const std::string& Tensor::op() const {
    return node().op;
}

Tensor Tensor::detach() const {
    return from(shape(), node().data, false);
}

Tensor Tensor::clone() const {
    return from(shape(), node().data, requires_grad());
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data, std::string op,
                           std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = std::move(op);
    bool needs_grad = false;
    for (const auto& in : inputs) {
        needs_grad = needs_grad || in.requires_grad();
    }
    node->requires_grad = needs_grad;
    if (needs_grad) {
        node->parents.reserve(inputs.size());
        for (auto& in : inputs) {
            node->parents.push_back(in.node_);
        }
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

void Tensor::backward() const {
    auto& root = node();
    if (root.data.size() != 1) {
        throw DimensionError("backward() requires a scalar, got shape " + shape_str(root.shape));
    }
    if (!root.requires_grad) {
        return;
    }

    // Iterative post-order DFS gives a topological order of the recorded graph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(&root, 0);
    visited.insert(&root);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && !n->grad.empty()) {
            n->backward(*n);
        }
    }
}

}  // namespace muff
