#pragma once

#include <string>
#include <vector>

#include "bapf/params.hpp"
#include "bapf/tensor.hpp"

namespace bapf {

struct BAConfig {
    int value_window = 3;
    int distance_window = 5;
    double alpha_s = 1.5;
    bool enable_value = true;
    bool enable_distance = true;

    void validate() const;
};

/// Unnormalized isotropic Gaussian over a square window:
/// w(dr, dt) = exp(-(dr^2 + dt^2) / (2 a^2)) / (2 pi a^2).
struct GaussianKernel {
    int window = 0;
    std::vector<double> weights;  // row-major, offset (dr, dt) at (dr + r) * window + (dt + r)

    double at(int dr, int dt) const;
    double total() const;
};

GaussianKernel gaussian_kernel(double alpha_s, int window);

/// Per-pixel Gaussian-weighted average over the distance window, divided by
/// the full window size N (also at borders, where out-of-image taps weigh 0).
template <typename T>
Tensor<T> distance_step(const Tensor<T>& x, const BAConfig& cfg);

/// In-bounds flags of each (position, window offset) pair, shaped like the
/// [H*W, k*k] affinity rows.
std::vector<uint8_t> window_support(int64_t h, int64_t w, int window);

/// logits[i, o] = <a[:, i], a[:, i + o]> over a square window; 0 where i + o
/// falls outside the image. Output [H*W, k*k].
template <typename T>
Tensor<T> local_affinity(const Tensor<T>& a, int window);

/// y[c, i] = sum_o weights[i, o] * x[c, i + o] over in-bounds offsets.
template <typename T>
Tensor<T> local_aggregate(const Tensor<T>& weights, const Tensor<T>& x, int window);

/// Attention weights of the value step, [H*W, k*k]; each row sums to one
/// over its in-bounds window.
template <typename T>
Tensor<T> value_step_weights(const Tensor<T>& x, const BAConfig& cfg);

/// Value-similarity reconstruction: softmax over the value window of
/// sigmoid-feature dot products, applied to the raw features.
template <typename T>
Tensor<T> value_step(const Tensor<T>& x, const BAConfig& cfg);

/// Channel concat of both reconstructions followed by a 1×1 conv (2C -> C).
template <typename T>
Tensor<T> ba_fuse(const Tensor<T>& y_dist, const Tensor<T>& y_val, const Tensor<T>& weight, const Tensor<T>& bias);

/// Registers the fuse conv under `prefix`.fuse. Both steps: [0.5 I | 0.5 I];
/// one step: I; neither: no parameters.
template <typename T>
void init_ba_params(ModelParams<T>& params, const std::string& prefix, int64_t channels, const BAConfig& cfg);

/// Runs the enabled steps; with both disabled the layer is the identity.
template <typename T>
Tensor<T> ba_forward(const Tensor<T>& x, const BAConfig& cfg, const ModelParams<T>& params,
                     const std::string& prefix = "ba");

/// Embedded dot-product non-local block with a residual connection, attending
/// over every position. Only used as an ablation baseline.
template <typename T>
Tensor<T> nonlocal_forward(const Tensor<T>& x, const ModelParams<T>& params, const std::string& prefix = "nl");

/// theta/phi/g project C -> max(1, C/2); the output projection starts at zero
/// so the block begins as the identity.
template <typename T>
void init_nonlocal_params(ModelParams<T>& params, const std::string& prefix, int64_t channels, Rng& rng);

}  // namespace bapf
