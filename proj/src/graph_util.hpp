#pragma once
// Internal helpers for op authors: graph recording and dense kernels.

#include <vector>

#include "bapf/tensor.hpp"

namespace bapf::detail {

template <typename T>
using BackwardFn = std::function<void(const Node<T>&)>;

/// Builds the result node; attaches `fn` only if recording is on and some input needs grad.
template <typename T>
Tensor<T> record(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs, const char* op,
                 BackwardFn<T> fn) {
    Tensor<T> out(std::move(shape), std::move(data));
    if (!NoGradGuard::grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    auto& node = *out.node_ptr();
    node.requires_grad = true;
    node.op = op;
    for (const auto& in : inputs) node.parents.push_back(in.node_ptr());
    node.backward_fn = std::move(fn);
    return out;
}

template <typename T>
inline bool wants(const std::shared_ptr<Node<T>>& n) {
    return n->requires_grad && !n->pending.empty();
}

// C[M,N] (+)= A[M,K] * B[K,N], accumulated in double.
template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
    std::vector<double> acc(static_cast<size_t>(N));
    for (int64_t i = 0; i < M; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const T* a_row = A + i * K;
        for (int64_t p = 0; p < K; ++p) {
            const double a = a_row[p];
            if (a == 0.0) continue;
            const T* b_row = B + p * N;
            for (int64_t j = 0; j < N; ++j) acc[j] += a * static_cast<double>(b_row[j]);
        }
        T* c_row = C + i * N;
        if (accumulate) {
            for (int64_t j = 0; j < N; ++j) c_row[j] = static_cast<T>(c_row[j] + acc[j]);
        } else {
            for (int64_t j = 0; j < N; ++j) c_row[j] = static_cast<T>(acc[j]);
        }
    }
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
    std::vector<double> acc(static_cast<size_t>(N));
    for (int64_t i = 0; i < M; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t p = 0; p < K; ++p) {
            const double a = A[p * M + i];
            if (a == 0.0) continue;
            const T* b_row = B + p * N;
            for (int64_t j = 0; j < N; ++j) acc[j] += a * static_cast<double>(b_row[j]);
        }
        T* c_row = C + i * N;
        if (accumulate) {
            for (int64_t j = 0; j < N; ++j) c_row[j] = static_cast<T>(c_row[j] + acc[j]);
        } else {
            for (int64_t j = 0; j < N; ++j) c_row[j] = static_cast<T>(acc[j]);
        }
    }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
    std::vector<T> bt(static_cast<size_t>(K * N));
    for (int64_t j = 0; j < N; ++j)
        for (int64_t p = 0; p < K; ++p) bt[p * N + j] = B[j * K + p];
    gemm_nn(M, N, K, A, bt.data(), C, accumulate);
}

}  // namespace bapf::detail
