#include "bapf/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace bapf {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw std::invalid_argument("non-positive extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

namespace detail {

uint64_t next_sequence() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    node_ = std::make_shared<detail::Node<T>>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    node_->seq = detail::next_sequence();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(shape, std::vector<T>(static_cast<size_t>(shape_numel(shape)), T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
    return Tensor(shape, std::vector<T>(static_cast<size_t>(shape_numel(shape)), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::initializer_list<T> values) {
    return Tensor(shape, std::vector<T>(values));
}

template <typename T>
int64_t Tensor<T>::dim(int64_t axis) const {
    const auto& s = shape();
    if (axis < 0) axis += static_cast<int64_t>(s.size());
    if (axis < 0 || axis >= static_cast<int64_t>(s.size())) {
        throw std::out_of_range("axis out of range for shape " + shape_str(s));
    }
    return s[static_cast<size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
    if (!node_) throw std::logic_error("use of undefined tensor");
    if (node_->backward_fn && !value) {
        throw std::logic_error("cannot clear requires_grad on a non-leaf tensor");
    }
    node_->requires_grad = value;
    return *this;
}

template <typename T>
Tensor<T> Tensor<T>::grad_tensor() const {
    if (!has_grad()) return zeros(shape());
    return Tensor(shape(), node().grad);
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(shape(), node().data, false);
}

template <typename T>
void backward(const Tensor<T>& loss) {
    using NodeT = detail::Node<T>;
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    NodeT* root = loss.node_ptr().get();
    if (!root->requires_grad) return;

    // Collect every reachable node that participates in differentiation.
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> seen;
    std::vector<NodeT*> stack{root};
    seen.insert(root);
    while (!stack.empty()) {
        NodeT* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    // Reverse execution order: a node's consumers always carry larger sequence numbers.
    std::sort(order.begin(), order.end(), [](const NodeT* a, const NodeT* b) { return a->seq > b->seq; });

    for (NodeT* n : order) n->pending.assign(n->data.size(), T(0));
    root->pending[0] = T(1);

    for (NodeT* n : order) {
        if (n->backward_fn) n->backward_fn(*n);
    }
    for (NodeT* n : order) {
        if (!n->backward_fn) {
            if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
            for (size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->pending[i];
        }
    }
    for (NodeT* n : order) {
        n->pending.clear();
        n->pending.shrink_to_fit();
    }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace bapf
