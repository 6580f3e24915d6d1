#include "bapf/nn_ops.hpp"

#include <cmath>

#include "graph_util.hpp"

namespace bapf {

using detail::record;
using detail::wants;

void ConvSpec::validate() const {
    if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || padding < 0) {
        throw std::invalid_argument("invalid conv spec: in=" + std::to_string(in_channels) +
                                    " out=" + std::to_string(out_channels) + " k=" + std::to_string(kernel) +
                                    " s=" + std::to_string(stride) + " p=" + std::to_string(padding));
    }
}

int64_t ConvSpec::out_extent(int64_t in) const {
    const int64_t span = in + 2 * padding - kernel;
    if (span < 0) {
        throw std::invalid_argument("conv geometry: kernel " + std::to_string(kernel) + " does not fit extent " +
                                    std::to_string(in) + " with padding " + std::to_string(padding));
    }
    return span / stride + 1;
}

int64_t ConvSpec::transposed_out_extent(int64_t in) const {
    const int64_t out = (in - 1) * stride - 2 * padding + kernel;
    if (out < 1) throw std::invalid_argument("transposed conv geometry yields extent " + std::to_string(out));
    return out;
}

namespace {

struct Geometry {
    int64_t channels, h, w;      // image side
    int64_t k, s, p;
    int64_t oh, ow;              // patch-grid side
};

// cols[(c*k + ki)*k + kj][oy*ow + ox] = img[c, oy*s - p + ki, ox*s - p + kj]
template <typename T>
void im2col(const Geometry& g, const T* img, T* cols) {
    const int64_t P = g.oh * g.ow;
    for (int64_t c = 0; c < g.channels; ++c)
        for (int64_t ki = 0; ki < g.k; ++ki)
            for (int64_t kj = 0; kj < g.k; ++kj) {
                T* row = cols + ((c * g.k + ki) * g.k + kj) * P;
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    const int64_t iy = oy * g.s - g.p + ki;
                    for (int64_t ox = 0; ox < g.ow; ++ox) {
                        const int64_t ix = ox * g.s - g.p + kj;
                        const bool in = iy >= 0 && iy < g.h && ix >= 0 && ix < g.w;
                        row[oy * g.ow + ox] = in ? img[(c * g.h + iy) * g.w + ix] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_add(const Geometry& g, const T* cols, T* img) {
    const int64_t P = g.oh * g.ow;
    for (int64_t c = 0; c < g.channels; ++c)
        for (int64_t ki = 0; ki < g.k; ++ki)
            for (int64_t kj = 0; kj < g.k; ++kj) {
                const T* row = cols + ((c * g.k + ki) * g.k + kj) * P;
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    const int64_t iy = oy * g.s - g.p + ki;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int64_t ox = 0; ox < g.ow; ++ox) {
                        const int64_t ix = ox * g.s - g.p + kj;
                        if (ix < 0 || ix >= g.w) continue;
                        img[(c * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
                    }
                }
            }
}

template <typename T>
void require_chw(const char* op, const Tensor<T>& x) {
    if (x.rank() != 3) throw std::invalid_argument(std::string(op) + ": expected [C,H,W], got " + shape_str(x.shape()));
}

template <typename T>
void check_params(const char* op, const ConvSpec& spec, const Shape& expected_w, const Tensor<T>& weight,
                  const Tensor<T>& bias) {
    if (weight.shape() != expected_w) {
        throw std::invalid_argument(std::string(op) + ": weight shape " + shape_str(weight.shape()) + " expected " +
                                    shape_str(expected_w));
    }
    if (spec.has_bias) {
        if (!bias.defined() || bias.shape() != Shape{spec.out_channels}) {
            throw std::invalid_argument(std::string(op) + ": bias must have shape [" +
                                        std::to_string(spec.out_channels) + "]");
        }
    }
}

template <typename T>
Tensor<T> conv2d_nobias(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight) {
    const Geometry g{x.dim(0), x.dim(1), x.dim(2), spec.kernel, spec.stride, spec.padding,
                     spec.out_extent(x.dim(1)), spec.out_extent(x.dim(2))};
    const int64_t P = g.oh * g.ow;
    const int64_t K = g.channels * g.k * g.k;
    const int64_t M = spec.out_channels;
    auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(K * P));
    im2col(g, x.data().data(), cols->data());
    std::vector<T> out(static_cast<size_t>(M * P));
    detail::gemm_nn(M, P, K, weight.data().data(), cols->data(), out.data(), false);
    auto xn = x.node_ptr(), wn = weight.node_ptr();
    return record<T>(Shape{M, g.oh, g.ow}, std::move(out), {x, weight}, "conv2d",
                     [xn, wn, cols, g, M, K, P](const detail::Node<T>& self) {
                         if (wants(wn)) detail::gemm_nt(M, K, P, self.pending.data(), cols->data(), wn->pending.data(), true);
                         if (wants(xn)) {
                             std::vector<T> dcols(static_cast<size_t>(K * P));
                             detail::gemm_tn(K, P, M, wn->data.data(), self.pending.data(), dcols.data(), false);
                             col2im_add(g, dcols.data(), xn->pending.data());
                         }
                     });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>& bias) {
    spec.validate();
    require_chw("conv2d", x);
    if (x.dim(0) != spec.in_channels) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(x.dim(0)) + " channels, spec expects " +
                                    std::to_string(spec.in_channels));
    }
    check_params("conv2d", spec, spec.weight_shape(), weight, bias);
    Tensor<T> y = conv2d_nobias(x, spec, weight);
    return spec.has_bias ? add_channel_bias(y, bias) : y;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>& bias) {
    spec.validate();
    require_chw("conv_transpose2d", x);
    if (x.dim(0) != spec.in_channels) {
        throw std::invalid_argument("conv_transpose2d: input has " + std::to_string(x.dim(0)) +
                                    " channels, spec expects " + std::to_string(spec.in_channels));
    }
    check_params("conv_transpose2d", spec, spec.transposed_weight_shape(), weight, bias);
    const int64_t oh = spec.transposed_out_extent(x.dim(1));
    const int64_t ow = spec.transposed_out_extent(x.dim(2));
    const Geometry g{spec.out_channels, oh, ow, spec.kernel, spec.stride, spec.padding, x.dim(1), x.dim(2)};
    const int64_t P = g.oh * g.ow;  // input positions
    const int64_t Cin = spec.in_channels;
    const int64_t K = spec.out_channels * g.k * g.k;
    std::vector<T> cols(static_cast<size_t>(K * P));
    detail::gemm_tn(K, P, Cin, weight.data().data(), x.data().data(), cols.data(), false);
    std::vector<T> out(static_cast<size_t>(spec.out_channels * oh * ow), T(0));
    col2im_add(g, cols.data(), out.data());
    auto xn = x.node_ptr(), wn = weight.node_ptr();
    Tensor<T> y = record<T>(Shape{spec.out_channels, oh, ow}, std::move(out), {x, weight}, "conv_transpose2d",
                            [xn, wn, g, Cin, K, P](const detail::Node<T>& self) {
                                std::vector<T> gcols(static_cast<size_t>(K * P));
                                im2col(g, self.pending.data(), gcols.data());
                                if (wants(xn)) detail::gemm_nn(Cin, P, K, wn->data.data(), gcols.data(), xn->pending.data(), true);
                                if (wants(wn)) detail::gemm_nt(Cin, K, P, xn->data.data(), gcols.data(), wn->pending.data(), true);
                            });
    return spec.has_bias ? add_channel_bias(y, bias) : y;
}

template <typename T>
PartialConvResult<T> partial_conv2d(const Tensor<T>& x, const Tensor<T>& vmask, const ConvSpec& spec,
                                    const Tensor<T>& weight, const Tensor<T>& bias) {
    spec.validate();
    require_chw("partial_conv2d", x);
    if (vmask.rank() != 3 || vmask.dim(0) != 1 || vmask.dim(1) != x.dim(1) || vmask.dim(2) != x.dim(2)) {
        throw std::invalid_argument("partial_conv2d: mask shape " + shape_str(vmask.shape()) +
                                    " does not match input " + shape_str(x.shape()));
    }
    if (x.dim(0) != spec.in_channels) {
        throw std::invalid_argument("partial_conv2d: input has " + std::to_string(x.dim(0)) +
                                    " channels, spec expects " + std::to_string(spec.in_channels));
    }
    check_params("partial_conv2d", spec, spec.weight_shape(), weight, bias);

    // Valid count per window, via the same patch geometry as the convolution.
    const Geometry g{1, x.dim(1), x.dim(2), spec.kernel, spec.stride, spec.padding, spec.out_extent(x.dim(1)),
                     spec.out_extent(x.dim(2))};
    const int64_t P = g.oh * g.ow;
    const int64_t kk = g.k * g.k;
    std::vector<T> mcols(static_cast<size_t>(kk * P));
    im2col(g, vmask.data().data(), mcols.data());
    // Window size counts in-bounds positions only, so an all-valid mask reproduces
    // conv2d exactly at the borders too (kernel^2 in the interior).
    std::vector<T> ones_plane(static_cast<size_t>(g.h * g.w), T(1));
    std::vector<T> ocols(static_cast<size_t>(kk * P));
    im2col(g, ones_plane.data(), ocols.data());
    std::vector<T> ratio(static_cast<size_t>(P), T(0));
    std::vector<T> updated(static_cast<size_t>(P), T(0));
    for (int64_t p = 0; p < P; ++p) {
        double count = 0.0, window = 0.0;
        for (int64_t r = 0; r < kk; ++r) {
            count += mcols[r * P + p];
            window += ocols[r * P + p];
        }
        if (count > 0) {
            ratio[p] = static_cast<T>(window / count);
            updated[p] = T(1);
        }
    }
    const Tensor<T> ratio_map(Shape{1, g.oh, g.ow}, std::move(ratio));
    Tensor<T> new_mask(Shape{1, g.oh, g.ow}, std::move(updated));

    Tensor<T> y = conv2d_nobias(spatial_gate(x, vmask), spec, weight);
    y = spatial_gate(y, ratio_map);
    if (spec.has_bias) y = add_channel_bias(y, bias, new_mask);
    return {y, new_mask};
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
    require_chw("bilinear_upsample", x);
    const int64_t C = x.dim(0), ih = x.dim(1), iw = x.dim(2);
    if (out_h < ih || out_w < iw) {
        throw std::invalid_argument("bilinear_upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                                    " smaller than input " + shape_str(x.shape()));
    }
    struct Tap {
        int64_t i0, i1;
        double f;
    };
    auto taps = [](int64_t in, int64_t out) {
        std::vector<Tap> t(static_cast<size_t>(out));
        const double ratio = static_cast<double>(in) / static_cast<double>(out);
        for (int64_t d = 0; d < out; ++d) {
            double s = (static_cast<double>(d) + 0.5) * ratio - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(in - 1));
            const auto i0 = static_cast<int64_t>(std::floor(s));
            const int64_t i1 = std::min(i0 + 1, in - 1);
            t[d] = {i0, i1, s - static_cast<double>(i0)};
        }
        return t;
    };
    auto ty = std::make_shared<std::vector<Tap>>(taps(ih, out_h));
    auto tx = std::make_shared<std::vector<Tap>>(taps(iw, out_w));
    const auto in = x.data();
    std::vector<T> out(static_cast<size_t>(C * out_h * out_w));
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < out_h; ++y) {
            const Tap& a = (*ty)[y];
            for (int64_t xo = 0; xo < out_w; ++xo) {
                const Tap& b = (*tx)[xo];
                const T* plane = in.data() + c * ih * iw;
                const double top = (1 - b.f) * plane[a.i0 * iw + b.i0] + b.f * plane[a.i0 * iw + b.i1];
                const double bot = (1 - b.f) * plane[a.i1 * iw + b.i0] + b.f * plane[a.i1 * iw + b.i1];
                out[(c * out_h + y) * out_w + xo] = static_cast<T>((1 - a.f) * top + a.f * bot);
            }
        }
    auto xn = x.node_ptr();
    return record<T>(Shape{C, out_h, out_w}, std::move(out), {x}, "bilinear_upsample",
                     [xn, ty, tx, C, ih, iw, out_h, out_w](const detail::Node<T>& self) {
                         if (!wants(xn)) return;
                         for (int64_t c = 0; c < C; ++c)
                             for (int64_t y = 0; y < out_h; ++y) {
                                 const Tap& a = (*ty)[y];
                                 for (int64_t xo = 0; xo < out_w; ++xo) {
                                     const Tap& b = (*tx)[xo];
                                     const double g = self.pending[(c * out_h + y) * out_w + xo];
                                     T* plane = xn->pending.data() + c * ih * iw;
                                     plane[a.i0 * iw + b.i0] += static_cast<T>(g * (1 - a.f) * (1 - b.f));
                                     plane[a.i0 * iw + b.i1] += static_cast<T>(g * (1 - a.f) * b.f);
                                     plane[a.i1 * iw + b.i0] += static_cast<T>(g * a.f * (1 - b.f));
                                     plane[a.i1 * iw + b.i1] += static_cast<T>(g * a.f * b.f);
                                 }
                             }
                     });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    require_chw("global_avg_pool", x);
    const int64_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
    std::vector<T> out(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int64_t i = 0; i < HW; ++i) acc += x.data()[c * HW + i];
        out[c] = static_cast<T>(acc / static_cast<double>(HW));
    }
    auto xn = x.node_ptr();
    return record<T>(Shape{C}, std::move(out), {x}, "global_avg_pool", [xn, C, HW](const detail::Node<T>& self) {
        if (!wants(xn)) return;
        for (int64_t c = 0; c < C; ++c) {
            const T g = static_cast<T>(self.pending[c] / static_cast<double>(HW));
            for (int64_t i = 0; i < HW; ++i) xn->pending[c * HW + i] += g;
        }
    });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, double eps) {
    require_chw("instance_norm", x);
    const int64_t C = x.dim(0), N = x.dim(1) * x.dim(2);
    const auto in = x.data();
    std::vector<T> out(in.size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
        double m = 0.0;
        for (int64_t i = 0; i < N; ++i) m += in[c * N + i];
        m /= static_cast<double>(N);
        double v = 0.0;
        for (int64_t i = 0; i < N; ++i) {
            const double d = in[c * N + i] - m;
            v += d * d;
        }
        v /= static_cast<double>(N);
        const double inv = 1.0 / std::sqrt(v + eps);
        (*inv_std)[c] = inv;
        for (int64_t i = 0; i < N; ++i) out[c * N + i] = static_cast<T>((in[c * N + i] - m) * inv);
    }
    auto xn = x.node_ptr();
    return record<T>(x.shape(), std::move(out), {x}, "instance_norm", [xn, inv_std, C, N](const detail::Node<T>& self) {
        if (!wants(xn)) return;
        for (int64_t c = 0; c < C; ++c) {
            double sg = 0.0, sgy = 0.0;
            for (int64_t i = 0; i < N; ++i) {
                sg += self.pending[c * N + i];
                sgy += static_cast<double>(self.pending[c * N + i]) * self.data[c * N + i];
            }
            const double inv = (*inv_std)[c];
            const double n = static_cast<double>(N);
            for (int64_t i = 0; i < N; ++i) {
                const double g = self.pending[c * N + i];
                xn->pending[c * N + i] += static_cast<T>(inv / n * (n * g - sg - self.data[c * N + i] * sgy));
            }
        }
    });
}

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s) {
    require_chw("channel_scale", x);
    if (s.shape() != Shape{x.dim(0)}) {
        throw std::invalid_argument("channel_scale: scale shape " + shape_str(s.shape()) + " vs input " +
                                    shape_str(x.shape()));
    }
    const int64_t C = x.dim(0), N = x.dim(1) * x.dim(2);
    std::vector<T> out(x.data().begin(), x.data().end());
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i) out[c * N + i] *= s.data()[c];
    auto xn = x.node_ptr(), sn = s.node_ptr();
    return record<T>(x.shape(), std::move(out), {x, s}, "channel_scale", [xn, sn, C, N](const detail::Node<T>& self) {
        for (int64_t c = 0; c < C; ++c) {
            if (wants(xn))
                for (int64_t i = 0; i < N; ++i) xn->pending[c * N + i] += self.pending[c * N + i] * sn->data[c];
            if (wants(sn)) {
                double acc = 0.0;
                for (int64_t i = 0; i < N; ++i)
                    acc += static_cast<double>(self.pending[c * N + i]) * xn->data[c * N + i];
                sn->pending[c] += static_cast<T>(acc);
            }
        }
    });
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias, const Tensor<T>& gate) {
    require_chw("add_channel_bias", x);
    const int64_t C = x.dim(0), N = x.dim(1) * x.dim(2);
    if (bias.shape() != Shape{C}) {
        throw std::invalid_argument("add_channel_bias: bias shape " + shape_str(bias.shape()) + " vs input " +
                                    shape_str(x.shape()));
    }
    if (gate.defined() && gate.numel() != N) {
        throw std::invalid_argument("add_channel_bias: gate shape " + shape_str(gate.shape()) + " vs input " +
                                    shape_str(x.shape()));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i)
            out[c * N + i] += gate.defined() ? bias.data()[c] * gate.data()[i] : bias.data()[c];
    auto xn = x.node_ptr(), bn = bias.node_ptr();
    auto gn = gate.defined() ? gate.node_ptr() : nullptr;
    return record<T>(x.shape(), std::move(out), {x, bias}, "add_channel_bias",
                     [xn, bn, gn, C, N](const detail::Node<T>& self) {
                         if (wants(xn))
                             for (size_t i = 0; i < self.pending.size(); ++i) xn->pending[i] += self.pending[i];
                         if (wants(bn))
                             for (int64_t c = 0; c < C; ++c) {
                                 double acc = 0.0;
                                 for (int64_t i = 0; i < N; ++i)
                                     acc += static_cast<double>(self.pending[c * N + i]) * (gn ? gn->data[i] : T(1));
                                 bn->pending[c] += static_cast<T>(acc);
                             }
                     });
}

template <typename T>
Tensor<T> spatial_gate(const Tensor<T>& x, const Tensor<T>& gate) {
    require_chw("spatial_gate", x);
    const int64_t C = x.dim(0), N = x.dim(1) * x.dim(2);
    if (gate.numel() != N) {
        throw std::invalid_argument("spatial_gate: gate shape " + shape_str(gate.shape()) + " vs input " +
                                    shape_str(x.shape()));
    }
    auto gv = std::make_shared<std::vector<T>>(gate.data().begin(), gate.data().end());
    std::vector<T> out(x.data().begin(), x.data().end());
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < N; ++i) out[c * N + i] *= (*gv)[i];
    auto xn = x.node_ptr();
    return record<T>(x.shape(), std::move(out), {x}, "spatial_gate", [xn, gv, C, N](const detail::Node<T>& self) {
        if (!wants(xn)) return;
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < N; ++i) xn->pending[c * N + i] += self.pending[c * N + i] * (*gv)[i];
    });
}

template <typename T>
Tensor<T> complement_mask(const Tensor<T>& m) {
    std::vector<T> out(m.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = T(1) - m.data()[i];
    return Tensor<T>(m.shape(), std::move(out));
}

template <typename T>
void require_binary_mask(const char* who, const Tensor<T>& m) {
    for (T v : m.data()) {
        if (v != T(0) && v != T(1)) {
            throw std::invalid_argument(std::string(who) + ": mask entries must be 0 or 1, found " + std::to_string(v));
        }
    }
}

#define BAPF_INSTANTIATE_NN(T)                                                                                   \
    template Tensor<T> conv2d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&, const Tensor<T>&);            \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&, const Tensor<T>&);  \
    template PartialConvResult<T> partial_conv2d(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,            \
                                                 const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> bilinear_upsample(const Tensor<T>&, int64_t, int64_t);                                    \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                                        \
    template Tensor<T> instance_norm(const Tensor<T>&, double);                                                  \
    template Tensor<T> channel_scale(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> spatial_gate(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> complement_mask(const Tensor<T>&);                                                        \
    template void require_binary_mask(const char*, const Tensor<T>&);

BAPF_INSTANTIATE_NN(float)
BAPF_INSTANTIATE_NN(double)

}  // namespace bapf
