#include "bapf/ba_layer.hpp"

#include <cmath>
#include <numbers>

#include "bapf/nn_ops.hpp"
#include "bapf/ops.hpp"
#include "graph_util.hpp"

namespace bapf {

using detail::record;
using detail::wants;

void BAConfig::validate() const {
    auto odd = [](int w) { return w >= 1 && w % 2 == 1; };
    if (!odd(value_window) || !odd(distance_window)) {
        throw std::invalid_argument("BA windows must be odd and >= 1 (value=" + std::to_string(value_window) +
                                    ", distance=" + std::to_string(distance_window) + ")");
    }
    if (!(alpha_s > 0)) throw std::invalid_argument("BA alpha_s must be positive");
}

double GaussianKernel::at(int dr, int dt) const {
    const int r = window / 2;
    if (std::abs(dr) > r || std::abs(dt) > r) throw std::out_of_range("offset outside Gaussian window");
    return weights[static_cast<size_t>((dr + r) * window + (dt + r))];
}

double GaussianKernel::total() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

GaussianKernel gaussian_kernel(double alpha_s, int window) {
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("Gaussian window must be odd");
    GaussianKernel k;
    k.window = window;
    k.weights.resize(static_cast<size_t>(window * window));
    const int r = window / 2;
    const double a2 = alpha_s * alpha_s;
    const double norm = 1.0 / (2.0 * std::numbers::pi * a2);
    for (int dr = -r; dr <= r; ++dr)
        for (int dt = -r; dt <= r; ++dt)
            k.weights[static_cast<size_t>((dr + r) * window + (dt + r))] =
                norm * std::exp(-static_cast<double>(dr * dr + dt * dt) / (2.0 * a2));
    return k;
}

namespace {

template <typename T>
void require_chw(const char* op, const Tensor<T>& x) {
    if (x.rank() != 3) throw std::invalid_argument(std::string(op) + ": expected [C,H,W], got " + shape_str(x.shape()));
}

// Visits every in-bounds (position i, offset o, neighbour j) triple of a square window.
template <typename F>
void for_each_window(int64_t h, int64_t w, int window, F&& f) {
    const int r = window / 2;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const int64_t i = y * w + x;
            for (int dy = -r; dy <= r; ++dy) {
                const int64_t yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    const int64_t xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    f(i, static_cast<int64_t>((dy + r) * window + (dx + r)), yy * w + xx);
                }
            }
        }
}

}  // namespace

template <typename T>
Tensor<T> distance_step(const Tensor<T>& x, const BAConfig& cfg) {
    cfg.validate();
    require_chw("distance_step", x);
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2), HW = H * W;
    const int win = cfg.distance_window;
    const double n = static_cast<double>(win * win);
    auto taps = std::make_shared<std::vector<double>>(gaussian_kernel(cfg.alpha_s, win).weights);
    for (auto& t : *taps) t /= n;

    const auto in = x.data();
    std::vector<T> out(in.size());
    for (int64_t c = 0; c < C; ++c) {
        std::vector<double> acc(static_cast<size_t>(HW), 0.0);
        const T* plane = in.data() + c * HW;
        for_each_window(H, W, win, [&](int64_t i, int64_t o, int64_t j) { acc[i] += (*taps)[o] * plane[j]; });
        for (int64_t i = 0; i < HW; ++i) out[c * HW + i] = static_cast<T>(acc[i]);
    }
    auto xn = x.node_ptr();
    return record<T>(x.shape(), std::move(out), {x}, "distance_step", [xn, taps, C, H, W, win](const detail::Node<T>& self) {
        if (!wants(xn)) return;
        const int64_t HW = H * W;
        for (int64_t c = 0; c < C; ++c) {
            const T* g = self.pending.data() + c * HW;
            T* dx = xn->pending.data() + c * HW;
            for_each_window(H, W, win, [&](int64_t i, int64_t o, int64_t j) { dx[j] += static_cast<T>((*taps)[o] * g[i]); });
        }
    });
}

std::vector<uint8_t> window_support(int64_t h, int64_t w, int window) {
    const int64_t kk = static_cast<int64_t>(window) * window;
    std::vector<uint8_t> support(static_cast<size_t>(h * w * kk), 0);
    for_each_window(h, w, window, [&](int64_t i, int64_t o, int64_t) { support[i * kk + o] = 1; });
    return support;
}

template <typename T>
Tensor<T> local_affinity(const Tensor<T>& a, int window) {
    require_chw("local_affinity", a);
    const int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2), HW = H * W;
    const int64_t kk = static_cast<int64_t>(window) * window;
    const auto in = a.data();
    std::vector<T> out(static_cast<size_t>(HW * kk), T(0));
    for_each_window(H, W, window, [&](int64_t i, int64_t o, int64_t j) {
        double dot = 0.0;
        for (int64_t c = 0; c < C; ++c) dot += static_cast<double>(in[c * HW + i]) * in[c * HW + j];
        out[i * kk + o] = static_cast<T>(dot);
    });
    auto an = a.node_ptr();
    return record<T>(Shape{HW, kk}, std::move(out), {a}, "local_affinity",
                     [an, C, H, W, window, kk](const detail::Node<T>& self) {
                         if (!wants(an)) return;
                         const int64_t HW = H * W;
                         const auto& v = an->data;
                         for_each_window(H, W, window, [&](int64_t i, int64_t o, int64_t j) {
                             const T g = self.pending[i * kk + o];
                             if (g == T(0)) return;
                             for (int64_t c = 0; c < C; ++c) {
                                 an->pending[c * HW + i] += g * v[c * HW + j];
                                 an->pending[c * HW + j] += g * v[c * HW + i];
                             }
                         });
                     });
}

template <typename T>
Tensor<T> local_aggregate(const Tensor<T>& weights, const Tensor<T>& x, int window) {
    require_chw("local_aggregate", x);
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2), HW = H * W;
    const int64_t kk = static_cast<int64_t>(window) * window;
    if (weights.shape() != Shape{HW, kk}) {
        throw std::invalid_argument("local_aggregate: weights " + shape_str(weights.shape()) + " do not match input " +
                                    shape_str(x.shape()) + " with window " + std::to_string(window));
    }
    const auto wv = weights.data();
    const auto xv = x.data();
    std::vector<T> out(xv.size());
    for (int64_t c = 0; c < C; ++c) {
        std::vector<double> acc(static_cast<size_t>(HW), 0.0);
        for_each_window(H, W, window,
                        [&](int64_t i, int64_t o, int64_t j) { acc[i] += static_cast<double>(wv[i * kk + o]) * xv[c * HW + j]; });
        for (int64_t i = 0; i < HW; ++i) out[c * HW + i] = static_cast<T>(acc[i]);
    }
    auto wn = weights.node_ptr(), xn = x.node_ptr();
    return record<T>(x.shape(), std::move(out), {weights, x}, "local_aggregate",
                     [wn, xn, C, H, W, window, kk](const detail::Node<T>& self) {
                         const int64_t HW = H * W;
                         const bool gw = wants(wn), gx = wants(xn);
                         for_each_window(H, W, window, [&](int64_t i, int64_t o, int64_t j) {
                             double acc = 0.0;
                             const T w = wn->data[i * kk + o];
                             for (int64_t c = 0; c < C; ++c) {
                                 const T g = self.pending[c * HW + i];
                                 if (gw) acc += static_cast<double>(g) * xn->data[c * HW + j];
                                 if (gx) xn->pending[c * HW + j] += w * g;
                             }
                             if (gw) wn->pending[i * kk + o] += static_cast<T>(acc);
                         });
                     });
}

template <typename T>
Tensor<T> value_step_weights(const Tensor<T>& x, const BAConfig& cfg) {
    cfg.validate();
    require_chw("value_step", x);
    const auto support = window_support(x.dim(1), x.dim(2), cfg.value_window);
    return softmax_lastdim(local_affinity(sigmoid(x), cfg.value_window), support);
}

template <typename T>
Tensor<T> value_step(const Tensor<T>& x, const BAConfig& cfg) {
    return local_aggregate(value_step_weights(x, cfg), x, cfg.value_window);
}

template <typename T>
Tensor<T> ba_fuse(const Tensor<T>& y_dist, const Tensor<T>& y_val, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (y_dist.shape() != y_val.shape()) {
        throw std::invalid_argument("ba_fuse: shape mismatch " + shape_str(y_dist.shape()) + " vs " +
                                    shape_str(y_val.shape()));
    }
    require_chw("ba_fuse", y_dist);
    const int64_t C = y_dist.dim(0);
    const ConvSpec q{2 * C, C, 1, 1, 0, true};
    return conv2d(concat<T>({y_dist, y_val}), q, weight, bias);
}

template <typename T>
void init_ba_params(ModelParams<T>& params, const std::string& prefix, int64_t channels, const BAConfig& cfg) {
    const int64_t steps = (cfg.enable_distance ? 1 : 0) + (cfg.enable_value ? 1 : 0);
    if (steps == 0) return;
    const int64_t in = steps * channels;
    std::vector<T> w(static_cast<size_t>(channels * in), T(0));
    const T share = static_cast<T>(1.0 / static_cast<double>(steps));
    for (int64_t c = 0; c < channels; ++c)
        for (int64_t s = 0; s < steps; ++s) w[c * in + s * channels + c] = share;
    params.set(prefix + ".fuse.weight", Tensor<T>({channels, in, 1, 1}, std::move(w)));
    params.set(prefix + ".fuse.bias", Tensor<T>::zeros({channels}));
}

template <typename T>
Tensor<T> ba_forward(const Tensor<T>& x, const BAConfig& cfg, const ModelParams<T>& params, const std::string& prefix) {
    cfg.validate();
    require_chw("ba_forward", x);
    if (!cfg.enable_distance && !cfg.enable_value) return x;
    const Tensor<T>& w = params.at(prefix + ".fuse.weight");
    const Tensor<T>& b = params.at(prefix + ".fuse.bias");
    if (cfg.enable_distance && cfg.enable_value) return ba_fuse(distance_step(x, cfg), value_step(x, cfg), w, b);
    const int64_t C = x.dim(0);
    const Tensor<T> y = cfg.enable_distance ? distance_step(x, cfg) : value_step(x, cfg);
    return conv2d(y, ConvSpec{C, C, 1, 1, 0, true}, w, b);
}

template <typename T>
Tensor<T> nonlocal_forward(const Tensor<T>& x, const ModelParams<T>& params, const std::string& prefix) {
    require_chw("nonlocal_forward", x);
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2), HW = H * W;
    const int64_t inner = params.at(prefix + ".theta.weight").dim(0);
    const ConvSpec down{C, inner, 1, 1, 0, true};
    const ConvSpec up{inner, C, 1, 1, 0, true};
    auto proj = [&](const std::string& name) {
        return reshape(conv2d(x, down, params.at(prefix + "." + name + ".weight"), params.at(prefix + "." + name + ".bias")),
                       {inner, HW});
    };
    const Tensor<T> theta = proj("theta");
    const Tensor<T> phi = proj("phi");
    const Tensor<T> g = proj("g");
    const Tensor<T> attn = softmax_lastdim(matmul(transpose(theta), phi));  // [HW, HW]
    const Tensor<T> y = reshape(transpose(matmul(attn, transpose(g))), {inner, H, W});
    return add(conv2d(y, up, params.at(prefix + ".z.weight"), params.at(prefix + ".z.bias")), x);
}

template <typename T>
void init_nonlocal_params(ModelParams<T>& params, const std::string& prefix, int64_t channels, Rng& rng) {
    const int64_t inner = std::max<int64_t>(1, channels / 2);
    for (const char* name : {"theta", "phi", "g"}) {
        init_conv(params, prefix + "." + name, {inner, channels, 1, 1}, inner, rng);
    }
    params.set(prefix + ".z.weight", Tensor<T>::zeros({channels, inner, 1, 1}));
    params.set(prefix + ".z.bias", Tensor<T>::zeros({channels}));
}

#define BAPF_INSTANTIATE_BA(T)                                                                                 \
    template Tensor<T> distance_step(const Tensor<T>&, const BAConfig&);                                       \
    template Tensor<T> local_affinity(const Tensor<T>&, int);                                                  \
    template Tensor<T> local_aggregate(const Tensor<T>&, const Tensor<T>&, int);                               \
    template Tensor<T> value_step_weights(const Tensor<T>&, const BAConfig&);                                  \
    template Tensor<T> value_step(const Tensor<T>&, const BAConfig&);                                          \
    template Tensor<T> ba_fuse(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
    template void init_ba_params(ModelParams<T>&, const std::string&, int64_t, const BAConfig&);               \
    template Tensor<T> ba_forward(const Tensor<T>&, const BAConfig&, const ModelParams<T>&, const std::string&); \
    template Tensor<T> nonlocal_forward(const Tensor<T>&, const ModelParams<T>&, const std::string&);          \
    template void init_nonlocal_params(ModelParams<T>&, const std::string&, int64_t, Rng&);

BAPF_INSTANTIATE_BA(float)
BAPF_INSTANTIATE_BA(double)

}  // namespace bapf
