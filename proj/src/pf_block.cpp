#include "bapf/pf_block.hpp"

#include "bapf/nn_ops.hpp"
#include "bapf/ops.hpp"

namespace bapf {

template <typename T>
std::vector<Tensor<T>> build_mask_pyramid(const Tensor<T>& hole_mask, int num_levels) {
    if (hole_mask.rank() != 3 || hole_mask.dim(0) != 1) {
        throw std::invalid_argument("mask pyramid: expected [1,H,W], got " + shape_str(hole_mask.shape()));
    }
    if (num_levels < 1) throw std::invalid_argument("mask pyramid: num_levels must be >= 1");
    require_binary_mask("mask pyramid", hole_mask);
    const int64_t f = int64_t{1} << (num_levels - 1);
    if (hole_mask.dim(1) % f != 0 || hole_mask.dim(2) % f != 0) {
        throw std::invalid_argument("mask pyramid: " + shape_str(hole_mask.shape()) + " not divisible by " +
                                    std::to_string(f));
    }
    std::vector<Tensor<T>> out{hole_mask.detach()};
    for (int k = 1; k < num_levels; ++k) {
        const auto& prev = out.back();
        const int64_t h = prev.dim(1) / 2, w = prev.dim(2) / 2, pw = prev.dim(2);
        std::vector<T> v(static_cast<size_t>(h * w));
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const int64_t i = 2 * y * pw + 2 * x;
                const bool hole = prev[i] != T(0) || prev[i + 1] != T(0) || prev[i + pw] != T(0) || prev[i + pw + 1] != T(0);
                v[static_cast<size_t>(y * w + x)] = hole ? T(1) : T(0);
            }
        out.push_back(Tensor<T>({1, h, w}, std::move(v)));
    }
    return out;
}

std::string pf_level_prefix(int level) { return "pf.l" + std::to_string(level); }

namespace {

template <typename T>
bool all_ones(const Tensor<T>& m) {
    for (T v : m.data())
        if (v != T(1)) return false;
    return true;
}

}  // namespace

template <typename T>
PFLevelResult<T> pf_fill_level(const Tensor<T>& feature, const Tensor<T>& vmask, const Tensor<T>& deeper,
                               const ModelParams<T>& params, const std::string& prefix) {
    if (feature.rank() != 3) throw std::invalid_argument("pf level: expected [C,H,W], got " + shape_str(feature.shape()));
    const int64_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
    const ConvSpec pspec{c, c, 3, 1, 1, true};
    auto pc = partial_conv2d(feature, vmask, pspec, params.at(prefix + ".pconv.weight"), params.at(prefix + ".pconv.bias"));

    PFLevelResult<T> r;
    r.pconv_vmask = pc.vmask;
    r.vmask = Tensor<T>::full({1, h, w}, T(1));
    Tensor<T> filled = add(feature, pc.output);
    if (!deeper.defined()) {
        if (!all_ones(pc.vmask)) {
            r.degenerate = true;
            filled = spatial_gate(filled, pc.vmask);
        }
        r.feature = filled;
        return r;
    }
    const auto& pw = params.at(prefix + ".proj.weight");
    if (pw.dim(0) != c || pw.dim(1) != deeper.dim(0)) {
        throw std::invalid_argument("pf level: projection " + shape_str(pw.shape()) + " does not map " +
                                    shape_str(deeper.shape()) + " onto " + shape_str(feature.shape()));
    }
    const ConvSpec proj{deeper.dim(0), c, 1, 1, 0, true};
    const auto up = conv2d(bilinear_upsample(deeper, h, w), proj, pw, params.at(prefix + ".proj.bias"));
    r.feature = add(filled, spatial_gate(up, complement_mask(vmask)));
    return r;
}

template <typename T>
PFResult<T> pf_forward(const FeatureStack<T>& stack, const ModelParams<T>& params) {
    if (stack.empty()) throw std::invalid_argument("pf: empty feature stack");
    PFResult<T> out;
    Tensor<T> deeper;
    for (size_t i = 0; i < stack.size(); ++i) {
        const auto& lv = stack[i];
        if (i > 0 && (lv.feature.dim(1) != 2 * stack[i - 1].feature.dim(1) ||
                      lv.feature.dim(2) != 2 * stack[i - 1].feature.dim(2))) {
            throw std::invalid_argument("pf: level " + std::to_string(lv.level) + " is not twice the size of the level above");
        }
        auto r = pf_fill_level(lv.feature, lv.vmask, deeper, params, pf_level_prefix(lv.level));
        out.degenerate = out.degenerate || r.degenerate;
        out.pconv_vmasks.push_back(r.pconv_vmask);
        out.levels.push_back({r.feature, r.vmask, lv.level});
        deeper = r.feature;
    }
    return out;
}

template <typename T>
void init_pf_params(ModelParams<T>& params, const std::vector<std::pair<int, int64_t>>& channels, Rng& rng) {
    for (size_t i = 0; i < channels.size(); ++i) {
        const auto [level, c] = channels[i];
        const std::string p = pf_level_prefix(level);
        init_conv(params, p + ".pconv", ConvSpec{c, c, 3, 1, 1, true}.weight_shape(), c, rng);
        if (i > 0) init_conv(params, p + ".proj", ConvSpec{channels[i - 1].second, c, 1, 1, 0, true}.weight_shape(), c, rng);
    }
}

#define BAPF_INSTANTIATE_PF(T)                                                                                      \
    template std::vector<Tensor<T>> build_mask_pyramid(const Tensor<T>&, int);                                      \
    template PFLevelResult<T> pf_fill_level(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                            const ModelParams<T>&, const std::string&);                             \
    template PFResult<T> pf_forward(const FeatureStack<T>&, const ModelParams<T>&);                                 \
    template void init_pf_params(ModelParams<T>&, const std::vector<std::pair<int, int64_t>>&, Rng&);

BAPF_INSTANTIATE_PF(float)
BAPF_INSTANTIATE_PF(double)

}  // namespace bapf
