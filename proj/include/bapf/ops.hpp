#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bapf/tensor.hpp"

namespace bapf {

enum class ElementwiseOp { Add, Sub, Mul, Scale, Sigmoid, Relu };

// Binary ops require equal shapes; there is no broadcasting beyond scalars.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, double s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, double s);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, double slope);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
/// |a|; the subgradient at 0 is 0.
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);

/// Dispatches the named elementwise op. Unary ops ignore `b`; Scale reads `s`.
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, double s);

/// Scalar-valued reductions, left to right in double precision.
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, const Shape& shape);

/// Concatenates along the leading axis; trailing extents must agree.
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);
/// Rows [begin, end) of the leading axis.
template <typename T> Tensor<T> slice(const Tensor<T>& a, int64_t begin, int64_t end);

/// Softmax along the last axis. A non-empty `support` (one byte per element)
/// restricts each row to its nonzero entries; unsupported entries come out as
/// exactly 0. Every row must keep at least one supported entry.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x, std::span<const uint8_t> support = {});

}  // namespace bapf
