#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace muff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value in the computation graph. Parents are the op's inputs; the
// backward rule reads this node's grad and accumulates into the parents'.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient flows here
    bool requires_grad = false;
    std::string op;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) {
            grad.assign(data.size(), 0.0);
        }
        return grad;
    }
};

}  // namespace detail

// Dense row-major float64 array with reverse-mode differentiation.
//
// Tensors are cheap handles: copies share the underlying node. Ops record a
// backward rule on the node they create, so calling backward() on a scalar
// result walks the recorded graph in reverse topological order and
// accumulates d(result)/d(leaf) into every leaf created with
// requires_grad = true.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const noexcept { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const { return data().size(); }

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;

    bool requires_grad() const;
    bool has_grad() const;
    // Gradient buffer; zeros when nothing has flowed into this tensor yet.
    std::span<const double> grad() const;
    void zero_grad();

    const std::string& op() const;

    // Back-propagates from a single-element tensor.
    void backward() const;

    // Same values, no history, no gradient tracking.
    Tensor detach() const;

    // Deep copy of the values into a fresh leaf that keeps requires_grad.
    Tensor clone() const;

    // Used by op implementations.
    static Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward);
    detail::Node& node() const;
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;
};

}  // namespace muff
