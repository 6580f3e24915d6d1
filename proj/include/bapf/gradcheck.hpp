#pragma once

#include <functional>
#include <optional>

#include "bapf/tensor.hpp"

namespace bapf {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

/// Max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|),
/// with central differences of step `eps`. Everything runs in 64-bit.
///
/// When `max_coords` is set, a deterministic evenly spaced subset of the
/// coordinates is checked instead of all of them.
double finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double eps = 1e-4,
                         std::optional<int64_t> max_coords = std::nullopt);

/// Weighted sum of `y` with fixed pseudo-random weights keyed by `salt`; turns
/// tensor-valued ops into scalar objectives without symmetric cancellation.
Tensor<double> random_projection(const Tensor<double>& y, uint64_t salt);

}  // namespace bapf
