#include <gtest/gtest.h>

#include "bapf/gradcheck.hpp"
#include "bapf/nn_ops.hpp"
#include "bapf/ops.hpp"
#include "bapf/pf_block.hpp"
#include "bapf/rng.hpp"

using namespace bapf;

using TD = Tensor<double>;
using TF = Tensor<float>;

namespace {

template <typename T>
Tensor<T> random_hole_mask(Rng& rng, int64_t size, double p) {
    std::vector<T> v(static_cast<size_t>(size * size));
    for (auto& x : v) x = rng.bernoulli(p) ? T(1) : T(0);
    return Tensor<T>({1, size, size}, std::move(v));
}

// Levels 3, 2, 1 at 2×2, 4×4, 8×8 with channels 2, 3, 2; retries until the
// bottleneck keeps a valid pixel.
template <typename T>
FeatureStack<T> random_stack(Rng& rng, ModelParams<T>& params, bool random_params) {
    std::vector<Tensor<T>> pyr;
    do {
        pyr = build_mask_pyramid(random_hole_mask<T>(rng, 8, rng.uniform(0.0, 0.3)), 3);
    } while (sum(pyr[2]).item() == 4);
    const std::vector<std::pair<int, int64_t>> ch{{3, 2}, {2, 3}, {1, 2}};
    init_pf_params(params, ch, rng);
    if (random_params)
        for (const auto& n : params.names()) params.set(n, rng.normal_tensor<T>(params.at(n).shape(), 0.3));
    FeatureStack<T> s;
    for (int i = 0; i < 3; ++i) {
        const auto& hole = pyr[static_cast<size_t>(2 - i)];
        s.push_back({rng.normal_tensor<T>({ch[i].second, hole.dim(1), hole.dim(2)}), complement_mask(hole), ch[i].first});
    }
    return s;
}

void zero_all(ModelParams<double>& p) {
    for (const auto& n : p.names()) p.set(n, TD::zeros(p.at(n).shape()));
}

}  // namespace

TEST(MaskPyramid, AllZerosStaysZero) {
    const auto pyr = build_mask_pyramid(TF::zeros({1, 8, 8}), 4);
    ASSERT_EQ(pyr.size(), 4u);
    EXPECT_EQ(pyr[3].shape(), (Shape{1, 1, 1}));
    for (const auto& m : pyr)
        for (float v : m.data()) EXPECT_EQ(v, 0.0f);
}

TEST(MaskPyramid, SingleHolePropagates) {
    auto m = TF::zeros({1, 4, 4});
    m.mutable_data()[0] = 1;
    const auto pyr = build_mask_pyramid(m, 3);
    EXPECT_EQ(pyr[1].shape(), (Shape{1, 2, 2}));
    EXPECT_EQ(pyr[1][0], 1.0f);
    EXPECT_EQ(pyr[1][1] + pyr[1][2] + pyr[1][3], 0.0f);
    EXPECT_EQ(pyr[2][0], 1.0f);
}

TEST(MaskPyramid, MatchesAnyHoleOracle) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed, "pyr");
        const auto m = random_hole_mask<float>(rng, 8, 0.5);
        const auto pyr = build_mask_pyramid(m, 4);
        for (int k = 1; k < 4; ++k) {
            const int64_t f = int64_t{1} << k, n = 8 / f;
            for (int64_t y = 0; y < n; ++y)
                for (int64_t x = 0; x < n; ++x) {
                    bool any = false;
                    for (int64_t yy = y * f; yy < (y + 1) * f; ++yy)
                        for (int64_t xx = x * f; xx < (x + 1) * f; ++xx) any = any || m[yy * 8 + xx] == 1.0f;
                    EXPECT_EQ(pyr[static_cast<size_t>(k)][y * n + x], any ? 1.0f : 0.0f);
                }
        }
    }
}

TEST(MaskPyramid, RejectsIndivisibleOrNonBinary) {
    EXPECT_THROW(build_mask_pyramid(TF::zeros({1, 6, 6}), 3), std::invalid_argument);
    EXPECT_THROW(build_mask_pyramid(TF::full({1, 4, 4}, 0.5f), 2), std::invalid_argument);
}

TEST(PfFillLevel, HoleFreeLevelIsFeaturePlusConv) {
    Rng rng(1, "pf-free");
    ModelParams<double> p;
    init_pf_params(p, {{2, 3}, {1, 3}}, rng);
    const TD f = rng.normal_tensor<double>({3, 4, 4});
    const TD deeper = rng.normal_tensor<double>({3, 2, 2});
    const auto r = pf_fill_level(f, TD::full({1, 4, 4}, 1.0), deeper, p, "pf.l1");
    const auto conv = conv2d(f, ConvSpec{3, 3, 3, 1, 1, true}, p.at("pf.l1.pconv.weight"), p.at("pf.l1.pconv.bias"));
    for (int64_t i = 0; i < f.numel(); ++i) EXPECT_NEAR(r.feature[i], f[i] + conv[i], 1e-12);
}

TEST(PfFillLevel, ZeroParamsAreShortConnection) {
    ModelParams<double> p;
    Rng rng(2, "pf-zero");
    init_pf_params(p, {{2, 2}, {1, 2}}, rng);
    zero_all(p);
    const TD f = rng.normal_tensor<double>({2, 4, 4});
    auto hole = random_hole_mask<double>(rng, 4, 0.4);
    const auto r = pf_fill_level(f, complement_mask(hole), rng.normal_tensor<double>({2, 2, 2}), p, "pf.l1");
    for (int64_t i = 0; i < f.numel(); ++i) EXPECT_EQ(r.feature[i], f[i]);
    for (double v : r.vmask.data()) EXPECT_EQ(v, 1.0);
}

TEST(PfFillLevel, DeepestSingleValidPixel) {
    ModelParams<double> p;
    Rng rng(3, "pf-one");
    init_pf_params(p, {{3, 2}}, rng);
    p.set("pf.l3.pconv.weight", TD::full({2, 2, 3, 3}, 1.0));
    // Only (1,0) is valid; hole features are zero as after masking.
    TD f = TD::zeros({2, 2, 2});
    f.mutable_data()[2] = 0.7;
    f.mutable_data()[6] = -0.2;
    const TD vm = TD::from({1, 2, 2}, {0, 0, 1, 0});
    const auto r = pf_fill_level(f, vm, TD{}, p, "pf.l3");
    EXPECT_FALSE(r.degenerate);
    // Every 3×3 window over a 2×2 map has 4 in-bounds cells, one of them valid.
    const double pc = (0.7 - 0.2) * 4.0 / 1.0;
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t i = 0; i < 4; ++i) EXPECT_NEAR(r.feature[c * 4 + i], f[c * 4 + i] + pc, 1e-12);
}

TEST(PfFillLevel, AllHoleBottleneckIsZeroedAndFlagged) {
    ModelParams<double> p;
    Rng rng(4, "pf-deg");
    init_pf_params(p, {{3, 2}}, rng);
    const auto r = pf_fill_level(rng.normal_tensor<double>({2, 2, 2}), TD::zeros({1, 2, 2}), TD{}, p, "pf.l3");
    EXPECT_TRUE(r.degenerate);
    for (double v : r.feature.data()) EXPECT_EQ(v, 0.0);
    for (double v : r.vmask.data()) EXPECT_EQ(v, 1.0);
}

TEST(PfFillLevel, ProjectionMismatchThrows) {
    ModelParams<double> p;
    Rng rng(5, "pf-mis");
    init_pf_params(p, {{2, 3}, {1, 2}}, rng);
    EXPECT_THROW(pf_fill_level(TD::zeros({2, 4, 4}), TD::full({1, 4, 4}, 1.0), TD::zeros({2, 2, 2}), p, "pf.l1"),
                 std::invalid_argument);
}

TEST(PfForward, FillCompleteness) {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed, "pf-complete");
        ModelParams<double> p;
        const auto s = random_stack(rng, p, true);
        const auto r = pf_forward(s, p);
        ASSERT_EQ(r.levels.size(), 3u);
        EXPECT_FALSE(r.degenerate);
        for (size_t i = 0; i < 3; ++i) {
            EXPECT_EQ(r.levels[i].feature.shape(), s[i].feature.shape());
            for (double v : r.levels[i].vmask.data()) EXPECT_EQ(v, 1.0);
        }
    }
}

TEST(PfForward, ZeroParamsLeaveFeaturesUntouched) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed, "pf-identity");
        ModelParams<double> p;
        const auto s = random_stack(rng, p, false);
        zero_all(p);
        const auto r = pf_forward(s, p);
        for (size_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < s[i].feature.numel(); ++j) EXPECT_EQ(r.levels[i].feature[j], s[i].feature[j]);
    }
}

TEST(PfForward, DeeperTermOnlyReachesHoles) {
    Rng rng(6, "pf-gate");
    ModelParams<double> p;
    const auto s = random_stack(rng, p, true);
    const auto a = pf_fill_level(s[1].feature, s[1].vmask, rng.normal_tensor<double>({2, 2, 2}), p, "pf.l2");
    const auto b = pf_fill_level(s[1].feature, s[1].vmask, TD::zeros({2, 2, 2}), p, "pf.l2");
    const int64_t hw = 16;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < hw; ++i)
            if (s[1].vmask[i] == 1.0) {
                EXPECT_EQ(a.feature[c * hw + i], b.feature[c * hw + i]);
            }
}

TEST(PfForward, HoleFreeStackLevelsAreIndependent) {
    Rng rng(7, "pf-free-stack");
    ModelParams<double> p;
    auto s = random_stack(rng, p, true);
    for (auto& lv : s) lv.vmask = TD::full(lv.vmask.shape(), 1.0);
    const auto r = pf_forward(s, p);
    for (size_t i = 0; i < 3; ++i) {
        const auto single = pf_fill_level(s[i].feature, s[i].vmask, i == 0 ? TD{} : TD::zeros(s[i - 1].feature.shape()), p,
                                          pf_level_prefix(s[i].level));
        for (int64_t j = 0; j < s[i].feature.numel(); ++j) EXPECT_EQ(r.levels[i].feature[j], single.feature[j]);
    }
}

TEST(PfForward, GradcheckFeaturesAndParams) {
    for (uint64_t seed : {0, 1, 2}) {
        Rng rng(seed, "pf-gc");
        ModelParams<double> p;
        const auto s = random_stack(rng, p, true);
        auto objective = [&](const FeatureStack<double>& st, const ModelParams<double>& pp) {
            const auto r = pf_forward(st, pp);
            std::vector<TD> flat;
            for (const auto& lv : r.levels) flat.push_back(reshape(lv.feature, {lv.feature.numel()}));
            return random_projection(concat(flat), 11);
        };
        for (size_t i = 0; i < 3; ++i) {
            EXPECT_LE(finite_diff_check(
                          [&](const TD& v) {
                              auto st = s;
                              st[i].feature = v;
                              return objective(st, p);
                          },
                          s[i].feature),
                      1e-4)
                << "level " << i;
        }
        for (const auto& name : p.names()) {
            EXPECT_LE(finite_diff_check(
                          [&](const TD& v) {
                              auto pp = p.clone();
                              pp.set(name, v);
                              return objective(s, pp);
                          },
                          p.at(name).detach()),
                      1e-4)
                << name;
        }
    }
}
