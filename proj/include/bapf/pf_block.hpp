#pragma once

#include <string>
#include <vector>

#include "bapf/params.hpp"
#include "bapf/tensor.hpp"

namespace bapf {

/// One encoder level entering or leaving the filling block.
template <typename T>
struct FeatureLevel {
    Tensor<T> feature;  // [C,H,W]
    Tensor<T> vmask;    // [1,H,W], 1 = valid
    int level = 0;      // encoder level index; selects the parameter prefix
};

/// Ordered deepest first; each level doubles the spatial size of the previous one.
template <typename T>
using FeatureStack = std::vector<FeatureLevel<T>>;

/// Hole masks (1 = hole) from the input resolution down: entry 0 is the input
/// mask, entry k its k-fold 2×2 any-hole pooling.
template <typename T>
std::vector<Tensor<T>> build_mask_pyramid(const Tensor<T>& hole_mask, int num_levels);

std::string pf_level_prefix(int level);

template <typename T>
struct PFLevelResult {
    Tensor<T> feature;
    Tensor<T> vmask;        // always all-ones
    Tensor<T> pconv_vmask;  // validity right after the partial conv
    bool degenerate = false;
};

/// Fills one level: F + PConv(F) + hole(F) * proj(upsample(deeper)). At the
/// deepest level (`deeper` undefined) the third term is absent, and any
/// position the partial conv could not reach is zeroed and flagged.
template <typename T>
PFLevelResult<T> pf_fill_level(const Tensor<T>& feature, const Tensor<T>& vmask, const Tensor<T>& deeper,
                               const ModelParams<T>& params, const std::string& prefix);

template <typename T>
struct PFResult {
    FeatureStack<T> levels;
    std::vector<Tensor<T>> pconv_vmasks;
    bool degenerate = false;
};

/// Fills every level deep to shallow, threading each filled map into the next.
template <typename T>
PFResult<T> pf_forward(const FeatureStack<T>& stack, const ModelParams<T>& params);

/// `channels` lists (level, C) deepest first. PConv weights N(0, 0.02) and the
/// projections likewise; all biases zero.
template <typename T>
void init_pf_params(ModelParams<T>& params, const std::vector<std::pair<int, int64_t>>& channels, Rng& rng);

}  // namespace bapf
