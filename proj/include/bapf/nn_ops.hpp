#pragma once

#include <cstdint>

#include "bapf/tensor.hpp"

namespace bapf {

/// Geometry of a square-kernel convolution with zero padding.
struct ConvSpec {
    int64_t in_channels = 1;
    int64_t out_channels = 1;
    int64_t kernel = 3;
    int64_t stride = 1;
    int64_t padding = 0;
    bool has_bias = true;

    void validate() const;
    /// floor((in + 2p - k) / s) + 1; throws when < 1.
    int64_t out_extent(int64_t in) const;
    /// (in - 1) * s - 2p + k; throws when < 1.
    int64_t transposed_out_extent(int64_t in) const;

    /// Weight shapes: [out, in, k, k] for conv2d, [in, out, k, k] for conv_transpose2d.
    Shape weight_shape() const { return {out_channels, in_channels, kernel, kernel}; }
    Shape transposed_weight_shape() const { return {in_channels, out_channels, kernel, kernel}; }
};

/// Cross-correlation of x[C,H,W]. `bias` may be undefined when `spec.has_bias` is false.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight, const Tensor<T>& bias = {});

/// Fractionally strided convolution (adjoint of conv2d with the same geometry).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                           const Tensor<T>& bias = {});

template <typename T>
struct PartialConvResult {
    Tensor<T> output;
    Tensor<T> vmask;  // [1,H',W'], 1 = valid
};

/// Partial convolution with a single channel-shared validity mask (1 = known).
///
/// Windows with any valid pixel are renormalized by (window size) / (valid count)
/// and get bias, where the window size counts in-bounds positions. Fully invalid
/// windows produce 0 and stay invalid. Gradients flow to x and the parameters,
/// never through the mask.
template <typename T>
PartialConvResult<T> partial_conv2d(const Tensor<T>& x, const Tensor<T>& vmask, const ConvSpec& spec,
                                    const Tensor<T>& weight, const Tensor<T>& bias = {});

/// Bilinear upsampling with half-pixel centers:
/// src = (dst + 0.5) * in / out - 0.5, clamped to [0, in - 1].
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int64_t out_h, int64_t out_w);

/// Mean over H×W per channel: [C,H,W] -> [C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Per-channel normalization to zero mean / unit variance (no affine part).
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, double eps = 1e-5);

/// x[C,H,W] scaled by s[C] per channel; differentiable in both.
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s);

/// x[C,H,W] + bias[C], optionally gated per pixel by a constant [1,H,W] map.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias, const Tensor<T>& gate = {});

/// x[C,H,W] multiplied per pixel by a constant [1,H,W] map (no gradient to the map).
template <typename T>
Tensor<T> spatial_gate(const Tensor<T>& x, const Tensor<T>& gate);

/// 1 - m, elementwise, as a constant.
template <typename T>
Tensor<T> complement_mask(const Tensor<T>& m);

/// Fails unless every entry is exactly 0 or 1.
template <typename T>
void require_binary_mask(const char* who, const Tensor<T>& m);

}  // namespace bapf
