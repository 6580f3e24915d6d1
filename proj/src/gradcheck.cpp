#include "bapf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bapf/ops.hpp"
#include "bapf/rng.hpp"

namespace bapf {

double finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double eps, std::optional<int64_t> max_coords) {
    if (eps <= 0) throw std::invalid_argument("finite_diff_check: eps must be positive");
    Tensor<double> leaf = x.detach();
    leaf.set_requires_grad(true);
    const Tensor<double> y = f(leaf);
    backward(y);
    std::vector<double> analytic(static_cast<size_t>(x.numel()), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

    const int64_t n = x.numel();
    const int64_t count = max_coords ? std::min(*max_coords, n) : n;
    const auto base = x.data();
    double worst = 0.0;
    NoGradGuard no_grad;
    for (int64_t c = 0; c < count; ++c) {
        const int64_t i = count == n ? c : (c * n) / count;
        std::vector<double> plus(base.begin(), base.end());
        std::vector<double> minus(base.begin(), base.end());
        plus[i] += eps;
        minus[i] -= eps;
        const double fp = f(Tensor<double>(x.shape(), std::move(plus))).item();
        const double fm = f(Tensor<double>(x.shape(), std::move(minus))).item();
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[static_cast<size_t>(i)];
        const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

Tensor<double> random_projection(const Tensor<double>& y, uint64_t salt) {
    Rng rng(salt, "random_projection");
    const Tensor<double> w = rng.uniform_tensor<double>(y.shape(), -1.0, 1.0);
    return sum(mul(y, w));
}

}  // namespace bapf
