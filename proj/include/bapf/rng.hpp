#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "bapf/tensor.hpp"

namespace bapf {

/// Counter-based generator keyed by (seed, purpose).
///
/// Draw i is a pure function of (key, i), so streams for different purposes
/// never interact and reruns are bit-identical across platforms. Distributions
/// are implemented here rather than taken from <random>, whose algorithms are
/// implementation-defined.
class Rng {
public:
    Rng(uint64_t seed, std::string_view purpose);

    /// Independent child stream.
    Rng split(std::string_view purpose) const;
    Rng split(uint64_t index) const;

    uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi].
    int64_t uniform_int(int64_t lo, int64_t hi);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    Tensor<T> normal_tensor(const Shape& shape, double stddev = 1.0, bool requires_grad = false) {
        std::vector<T> v(static_cast<size_t>(shape_numel(shape)));
        for (auto& x : v) x = static_cast<T>(stddev * normal());
        return Tensor<T>(shape, std::move(v), requires_grad);
    }

    template <typename T>
    Tensor<T> uniform_tensor(const Shape& shape, double lo, double hi, bool requires_grad = false) {
        std::vector<T> v(static_cast<size_t>(shape_numel(shape)));
        for (auto& x : v) x = static_cast<T>(uniform(lo, hi));
        return Tensor<T>(shape, std::move(v), requires_grad);
    }

    uint64_t key() const { return key_; }

private:
    explicit Rng(uint64_t key) : key_(key) {}

    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace bapf
