#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vrpcp/errors.hpp"

namespace vrpcp {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_size(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

/// One recorded operation. `backward` reads `grad` (dLoss/dOutput) and adds
/// into the grad buffers of the inputs that require gradients.
template <typename Scalar>
struct Node {
    std::string op;
    Shape shape;
    Vec<Scalar> value;
    Vec<Scalar> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    bool is_leaf() const { return inputs.empty(); }

    Vec<Scalar>& grad_buffer() {
        if (grad.size() != value.size()) grad = Vec<Scalar>::Zero(value.size());
        return grad;
    }
};

}  // namespace detail

/// Shaped, row-major numeric array with an optional gradient record. Copies
/// are cheap handles onto the same node; values of non-leaf tensors never
/// change after creation.
template <typename Scalar>
class Tensor {
public:
    using scalar_type = Scalar;
    using NodeType = detail::Node<Scalar>;
    using BackwardFn = std::function<void(NodeType&)>;

    Tensor() = default;

    static Tensor constant(Shape shape, Vec<Scalar> values) {
        return Tensor(make_leaf("constant", std::move(shape), std::move(values), false));
    }

    static Tensor zeros(Shape shape) {
        const Index n = shape_size(shape);
        return constant(std::move(shape), Vec<Scalar>::Zero(n));
    }

    static Tensor full(Shape shape, Scalar value) {
        const Index n = shape_size(shape);
        return constant(std::move(shape), Vec<Scalar>::Constant(n, value));
    }

    static Tensor scalar(Scalar value) { return full({1}, value); }

    /// Trainable leaf: receives accumulated gradients on backward().
    static Tensor parameter(Shape shape, Vec<Scalar> values) {
        return Tensor(make_leaf("parameter", std::move(shape), std::move(values), true));
    }

    /// Records an operation. Inputs and the backward closure are kept only
    /// when at least one input requires gradients.
    static Tensor from_op(std::string op, Shape shape, Vec<Scalar> value,
                          const std::vector<Tensor>& inputs, BackwardFn backward) {
        check_size(shape, value.size());
        auto node = std::make_shared<NodeType>();
        node->op = std::move(op);
        node->shape = std::move(shape);
        node->value = std::move(value);
        for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
        if (node->requires_grad) {
            node->inputs.reserve(inputs.size());
            for (const auto& in : inputs) node->inputs.push_back(in.node_);
            node->backward = std::move(backward);
        }
        return Tensor(std::move(node));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    Index rank() const { return static_cast<Index>(node_->shape.size()); }
    Index dim(Index axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
    Index size() const { return node_->value.size(); }
    const std::string& op() const { return node_->op; }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf(); }

    const Vec<Scalar>& value() const { return node_->value; }
    Scalar at(Index i) const { return node_->value(i); }

    Scalar item() const {
        if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
        return node_->value(0);
    }

    Eigen::Map<const RowMatrix<Scalar>> matrix() const {
        if (rank() != 2) throw DimensionError("matrix view needs rank 2, got " + shape_string(shape()));
        return {node_->value.data(), dim(0), dim(1)};
    }

    /// Accumulated gradient; zeros when no backward pass reached this tensor.
    Vec<Scalar> grad() const {
        if (node_->grad.size() != node_->value.size()) return Vec<Scalar>::Zero(size());
        return node_->grad;
    }

    void zero_grad() { node_->grad = Vec<Scalar>::Zero(size()); }

    /// In-place access for optimizers and checkpoint loading. Leaves only.
    Vec<Scalar>& mutable_value() {
        if (!is_leaf()) throw ContractError("mutable_value() on non-leaf tensor produced by " + op());
        return node_->value;
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }
    const std::shared_ptr<NodeType>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

    static void check_size(const Shape& shape, Index n) {
        for (Index d : shape)
            if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_string(shape));
        if (shape_size(shape) != n)
            throw DimensionError("shape " + shape_string(shape) + " does not hold " + std::to_string(n) +
                                 " values");
    }

    static std::shared_ptr<NodeType> make_leaf(std::string op, Shape shape, Vec<Scalar> values,
                                               bool requires_grad) {
        check_size(shape, values.size());
        auto node = std::make_shared<NodeType>();
        node->op = std::move(op);
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return node;
    }

    std::shared_ptr<NodeType> node_;
};

/// Reverse-mode sweep from a scalar loss. Interior gradients are rebuilt on
/// every call while leaf gradients accumulate, so two calls on the same graph
/// without zero_grad() leave exactly twice the single-call gradient.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
    using Node = detail::Node<Scalar>;
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    if (!loss.requires_grad()) return;

    // Post-order DFS gives a topological order (inputs before consumers).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* in = node->inputs[next++].get();
            if (in->requires_grad && visited.insert(in).second) stack.emplace_back(in, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order)
        if (!n->is_leaf()) n->grad = Vec<Scalar>::Zero(n->value.size());
    loss.node()->grad_buffer()(0) += Scalar(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->is_leaf()) continue;
        n->backward(*n);
        n->grad.resize(0);
    }
}

template <typename Scalar>
Tensor<Scalar> detach(const Tensor<Scalar>& x) {
    return Tensor<Scalar>::constant(x.shape(), x.value());
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
    return Tensor<To>::constant(x.shape(), x.value().template cast<To>());
}

}  // namespace vrpcp
