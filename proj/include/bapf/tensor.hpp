#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bapf {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;     // accumulated gradient (leaves only)
    std::vector<T> pending;  // scratch gradient, alive only during backward
    bool requires_grad = false;
    uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads self.pending and adds into the pending buffers of parents that require grad.
    std::function<void(const Node& self)> backward_fn;
};

uint64_t next_sequence();

}  // namespace detail

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool grad_enabled();

private:
    bool previous_;
};

/// Dense row-major tensor with optional gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Values are immutable once constructed except through `mutable_data()`,
/// which optimizers use on leaf parameters.
template <typename T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::initializer_list<T> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node().shape; }
    int64_t rank() const { return static_cast<int64_t>(shape().size()); }
    int64_t dim(int64_t axis) const;
    int64_t numel() const { return static_cast<int64_t>(node().data.size()); }

    std::span<const T> data() const { return node().data; }
    std::span<T> mutable_data() { return node_->data; }
    T operator[](int64_t i) const { return node().data[static_cast<size_t>(i)]; }
    T item() const;

    bool requires_grad() const { return node().requires_grad; }
    Tensor& set_requires_grad(bool value);
    bool is_leaf() const { return !node().backward_fn; }
    bool has_grad() const { return !node().grad.empty(); }
    std::span<const T> grad() const { return node().grad; }
    Tensor grad_tensor() const;
    void zero_grad();

    /// Fresh leaf holding a copy of the values, cut from any graph.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(node().data.begin(), node().data.end());
        return Tensor<U>(shape(), std::move(out), requires_grad());
    }

    const NodePtr& node_ptr() const { return node_; }

private:
    const detail::Node<T>& node() const {
        if (!node_) throw std::logic_error("use of undefined tensor");
        return *node_;
    }

    NodePtr node_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across calls.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward(const Tensor<float>&);
extern template void backward(const Tensor<double>&);

}  // namespace bapf
