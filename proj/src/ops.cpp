#include "bapf/ops.hpp"

#include <cmath>

#include "graph_util.hpp"

namespace bapf {

using detail::record;
using detail::wants;

namespace {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
}

// Unary map with a derivative expressed through (input, output).
template <typename T, typename F, typename D>
Tensor<T> unary(const char* name, const Tensor<T>& a, F f, D dfdx) {
    const auto x = a.data();
    std::vector<T> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(f(static_cast<double>(x[i])));
    auto an = a.node_ptr();
    return record<T>(a.shape(), std::move(out), {a}, name, [an, dfdx](const detail::Node<T>& self) {
        if (!wants(an)) return;
        for (size_t i = 0; i < self.pending.size(); ++i) {
            an->pending[i] += static_cast<T>(self.pending[i] * dfdx(static_cast<double>(an->data[i]),
                                                                     static_cast<double>(self.data[i])));
        }
    });
}

double stable_sigmoid(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("add", a, b);
    std::vector<T> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return record<T>(a.shape(), std::move(out), {a, b}, "add", [an, bn](const detail::Node<T>& self) {
        for (const auto& n : {an, bn}) {
            if (!wants(n)) continue;
            for (size_t i = 0; i < self.pending.size(); ++i) n->pending[i] += self.pending[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("sub", a, b);
    std::vector<T> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return record<T>(a.shape(), std::move(out), {a, b}, "sub", [an, bn](const detail::Node<T>& self) {
        if (wants(an))
            for (size_t i = 0; i < self.pending.size(); ++i) an->pending[i] += self.pending[i];
        if (wants(bn))
            for (size_t i = 0; i < self.pending.size(); ++i) bn->pending[i] -= self.pending[i];
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a, b);
    std::vector<T> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return record<T>(a.shape(), std::move(out), {a, b}, "mul", [an, bn](const detail::Node<T>& self) {
        if (wants(an))
            for (size_t i = 0; i < self.pending.size(); ++i) an->pending[i] += self.pending[i] * bn->data[i];
        if (wants(bn))
            for (size_t i = 0; i < self.pending.size(); ++i) bn->pending[i] += self.pending[i] * an->data[i];
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
    return unary<T>("scale", a, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double s) {
    return unary<T>("add_scalar", a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary<T>("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary<T>(
        "relu", a, [](double v) { return v > 0 ? v : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double slope) {
    return unary<T>(
        "leaky_relu", a, [slope](double v) { return v > 0 ? v : slope * v; },
        [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
    return unary<T>(
        "tanh", a, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return unary<T>(
        "abs", a, [](double v) { return std::abs(v); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return unary<T>(
        "square", a, [](double v) { return v * v; }, [](double x, double) { return 2.0 * x; });
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
    switch (op) {
        case ElementwiseOp::Add: return add(a, b);
        case ElementwiseOp::Sub: return sub(a, b);
        case ElementwiseOp::Mul: return mul(a, b);
        case ElementwiseOp::Scale:
            if (b.numel() != 1) throw std::invalid_argument("scale: expected scalar operand, got " + shape_str(b.shape()));
            return scale(a, static_cast<double>(b.item()));
        case ElementwiseOp::Sigmoid: return sigmoid(a);
        case ElementwiseOp::Relu: return relu(a);
    }
    throw std::invalid_argument("unknown elementwise op");
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, double s) {
    switch (op) {
        case ElementwiseOp::Add: return add_scalar(a, s);
        case ElementwiseOp::Sub: return add_scalar(a, -s);
        case ElementwiseOp::Mul:
        case ElementwiseOp::Scale: return scale(a, s);
        case ElementwiseOp::Sigmoid: return sigmoid(a);
        case ElementwiseOp::Relu: return relu(a);
    }
    throw std::invalid_argument("unknown elementwise op");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.data()) acc += v;
    auto an = a.node_ptr();
    return record<T>(Shape{1}, {static_cast<T>(acc)}, {a}, "sum", [an](const detail::Node<T>& self) {
        if (!wants(an)) return;
        const T g = self.pending[0];
        for (auto& p : an->pending) p += g;
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.data()) acc += v;
    const double n = static_cast<double>(a.numel());
    auto an = a.node_ptr();
    return record<T>(Shape{1}, {static_cast<T>(acc / n)}, {a}, "mean", [an, n](const detail::Node<T>& self) {
        if (!wants(an)) return;
        const T g = static_cast<T>(self.pending[0] / n);
        for (auto& p : an->pending) p += g;
    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(static_cast<size_t>(m * n));
    detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
    auto an = a.node_ptr(), bn = b.node_ptr();
    return record<T>(Shape{m, n}, std::move(out), {a, b}, "matmul", [an, bn, m, k, n](const detail::Node<T>& self) {
        // dA = G B^T, dB = A^T G
        if (wants(an)) detail::gemm_nt(m, k, n, self.pending.data(), bn->data.data(), an->pending.data(), true);
        if (wants(bn)) detail::gemm_tn(k, n, m, an->data.data(), self.pending.data(), bn->pending.data(), true);
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: expected rank 2, got " + shape_str(a.shape()));
    const int64_t r = a.dim(0), c = a.dim(1);
    std::vector<T> out(static_cast<size_t>(r * c));
    const auto x = a.data();
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
    auto an = a.node_ptr();
    return record<T>(Shape{c, r}, std::move(out), {a}, "transpose", [an, r, c](const detail::Node<T>& self) {
        if (!wants(an)) return;
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) an->pending[i * c + j] += self.pending[j * r + i];
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<T> out(a.data().begin(), a.data().end());
    auto an = a.node_ptr();
    return record<T>(shape, std::move(out), {a}, "reshape", [an](const detail::Node<T>& self) {
        if (!wants(an)) return;
        for (size_t i = 0; i < self.pending.size(); ++i) an->pending[i] += self.pending[i];
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    int64_t lead = 0;
    for (const auto& p : parts) {
        Shape t(p.shape().begin() + 1, p.shape().end());
        if (t != tail) {
            throw std::invalid_argument("concat: trailing shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                                        shape_str(p.shape()));
        }
        lead += p.dim(0);
    }
    std::vector<T> out;
    out.reserve(static_cast<size_t>(lead * shape_numel(tail.empty() ? Shape{1} : tail)));
    std::vector<std::shared_ptr<detail::Node<T>>> nodes;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        nodes.push_back(p.node_ptr());
    }
    Shape shape{lead};
    shape.insert(shape.end(), tail.begin(), tail.end());
    return record<T>(shape, std::move(out), parts, "concat", [nodes](const detail::Node<T>& self) {
        size_t offset = 0;
        for (const auto& n : nodes) {
            const size_t len = n->data.size();
            if (wants(n))
                for (size_t i = 0; i < len; ++i) n->pending[i] += self.pending[offset + i];
            offset += len;
        }
    });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int64_t begin, int64_t end) {
    if (begin < 0 || end > a.dim(0) || begin >= end) {
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") invalid for shape " + shape_str(a.shape()));
    }
    const int64_t row = a.numel() / a.dim(0);
    Shape shape = a.shape();
    shape[0] = end - begin;
    std::vector<T> out(a.data().begin() + begin * row, a.data().begin() + end * row);
    auto an = a.node_ptr();
    const int64_t offset = begin * row;
    return record<T>(shape, std::move(out), {a}, "slice", [an, offset](const detail::Node<T>& self) {
        if (!wants(an)) return;
        for (size_t i = 0; i < self.pending.size(); ++i) an->pending[offset + i] += self.pending[i];
    });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x, std::span<const uint8_t> support) {
    if (x.rank() < 1) throw std::invalid_argument("softmax_lastdim: scalar input");
    if (!support.empty() && static_cast<int64_t>(support.size()) != x.numel()) {
        throw std::invalid_argument("softmax_lastdim: support mask has " + std::to_string(support.size()) +
                                    " entries for shape " + shape_str(x.shape()));
    }
    const int64_t cols = x.dim(-1);
    const int64_t rows = x.numel() / cols;
    const auto in = x.data();
    std::vector<T> out(in.size(), T(0));
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t base = r * cols;
        auto on = [&](int64_t j) { return support.empty() || support[base + j] != 0; };
        double mx = -INFINITY;
        for (int64_t j = 0; j < cols; ++j)
            if (on(j)) mx = std::max(mx, static_cast<double>(in[base + j]));
        if (mx == -INFINITY) {
            throw std::invalid_argument("softmax_lastdim: row " + std::to_string(r) + " has empty support");
        }
        double z = 0.0;
        std::vector<double> e(static_cast<size_t>(cols), 0.0);
        for (int64_t j = 0; j < cols; ++j) {
            if (!on(j)) continue;
            e[j] = std::exp(static_cast<double>(in[base + j]) - mx);
            z += e[j];
        }
        for (int64_t j = 0; j < cols; ++j) out[base + j] = static_cast<T>(e[j] / z);
    }
    auto xn = x.node_ptr();
    return record<T>(x.shape(), std::move(out), {x}, "softmax", [xn, rows, cols](const detail::Node<T>& self) {
        if (!wants(xn)) return;
        // dx_j = y_j (g_j - sum_k g_k y_k); masked entries have y = 0 and receive nothing.
        for (int64_t r = 0; r < rows; ++r) {
            const int64_t base = r * cols;
            double dot = 0.0;
            for (int64_t j = 0; j < cols; ++j) dot += static_cast<double>(self.pending[base + j]) * self.data[base + j];
            for (int64_t j = 0; j < cols; ++j) {
                xn->pending[base + j] += static_cast<T>(self.data[base + j] * (self.pending[base + j] - dot));
            }
        }
    });
}

#define BAPF_INSTANTIATE_OPS(T)                                                              \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> scale(const Tensor<T>&, double);                                      \
    template Tensor<T> add_scalar(const Tensor<T>&, double);                                 \
    template Tensor<T> sigmoid(const Tensor<T>&);                                            \
    template Tensor<T> relu(const Tensor<T>&);                                               \
    template Tensor<T> leaky_relu(const Tensor<T>&, double);                                 \
    template Tensor<T> tanh(const Tensor<T>&);                                               \
    template Tensor<T> abs(const Tensor<T>&);                                                \
    template Tensor<T> square(const Tensor<T>&);                                             \
    template Tensor<T> elementwise(ElementwiseOp, const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> elementwise(ElementwiseOp, const Tensor<T>&, double);                 \
    template Tensor<T> sum(const Tensor<T>&);                                                \
    template Tensor<T> mean(const Tensor<T>&);                                               \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> transpose(const Tensor<T>&);                                          \
    template Tensor<T> reshape(const Tensor<T>&, const Shape&);                              \
    template Tensor<T> concat(const std::vector<Tensor<T>>&);                                \
    template Tensor<T> slice(const Tensor<T>&, int64_t, int64_t);                            \
    template Tensor<T> softmax_lastdim(const Tensor<T>&, std::span<const uint8_t>);

BAPF_INSTANTIATE_OPS(float)
BAPF_INSTANTIATE_OPS(double)

}  // namespace bapf
