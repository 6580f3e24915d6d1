#include <gtest/gtest.h>

#include <algorithm>

#include "bapf/gradcheck.hpp"
#include "bapf/nn_ops.hpp"
#include "bapf/ops.hpp"
#include "bapf/rng.hpp"

using namespace bapf;

using TD = Tensor<double>;
using TF = Tensor<float>;

namespace {

TF ones(const Shape& s) { return TF::full(s, 1.0f); }

TF random_mask(Rng& rng, int64_t h, int64_t w, double p_valid) {
    std::vector<float> v(static_cast<size_t>(h * w));
    for (auto& x : v) x = rng.bernoulli(p_valid) ? 1.0f : 0.0f;
    return TF({1, h, w}, v);
}

}  // namespace

TEST(Conv2d, OnesKernelCountsOverlap) {
    const ConvSpec spec{1, 1, 3, 1, 1, false};
    const auto y = conv2d(ones({1, 3, 3}), spec, ones({1, 1, 3, 3}));
    EXPECT_EQ(y.shape(), (Shape{1, 3, 3}));
    EXPECT_EQ(y[4], 9.0f);
    EXPECT_EQ(y[0], 4.0f);
    EXPECT_EQ(y[1], 6.0f);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    Rng rng(1, "conv");
    const TF x = rng.normal_tensor<float>({2, 5, 4});
    std::vector<float> w(2 * 2 * 9, 0.0f);
    w[0 * 18 + 0 * 9 + 4] = 1.0f;
    w[1 * 18 + 1 * 9 + 4] = 1.0f;
    const auto y = conv2d(x, ConvSpec{2, 2, 3, 1, 1, false}, TF({2, 2, 3, 3}, w));
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, ChannelMismatchThrows) {
    EXPECT_THROW(conv2d(ones({2, 4, 4}), ConvSpec{3, 1, 3, 1, 1, false}, ones({1, 3, 3, 3})), std::invalid_argument);
}

TEST(Conv2d, StrideTwoShape) {
    const ConvSpec spec{3, 8, 4, 2, 1, true};
    const auto y = conv2d(ones({3, 16, 16}), spec, ones(spec.weight_shape()), ones({8}));
    EXPECT_EQ(y.shape(), (Shape{8, 8, 8}));
}

TEST(Conv2d, Gradcheck) {
    for (uint64_t seed : {0, 1, 2}) {
        Rng rng(seed, "conv-gc");
        const ConvSpec spec{2, 3, 3, 1, 1, true};
        const TD x = rng.normal_tensor<double>({2, 5, 5});
        const TD w = rng.normal_tensor<double>(spec.weight_shape(), 0.5);
        const TD b = rng.normal_tensor<double>({3});
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(conv2d(v, spec, w, b), 1); }, x), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(conv2d(x, spec, v, b), 2); }, w), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(conv2d(x, spec, w, v), 3); }, b), 1e-4);
    }
}

TEST(Conv2d, ComposedWithReluMatchesFiniteDifferences) {
    Rng rng(0, "conv-relu");
    const ConvSpec spec{4, 2, 3, 1, 1, true};
    const TD x = rng.normal_tensor<double>({4, 5, 5});
    const TD w = rng.normal_tensor<double>(spec.weight_shape(), 0.3);
    const TD b = rng.normal_tensor<double>({2});
    EXPECT_LE(finite_diff_check([&](const TD& v) { return sum(relu(conv2d(v, spec, w, b))); }, x), 1e-4);
}

TEST(ConvTranspose2d, ShapeFormula) {
    const ConvSpec spec{1, 1, 4, 2, 1, false};
    EXPECT_EQ(conv_transpose2d(ones({1, 2, 2}), spec, ones(spec.transposed_weight_shape())).shape(), (Shape{1, 4, 4}));
}

TEST(ConvTranspose2d, ImpulseStampsKernel) {
    const ConvSpec spec{1, 1, 4, 2, 1, false};
    std::vector<float> k(16);
    for (int i = 0; i < 16; ++i) k[i] = static_cast<float>(i + 1);
    std::vector<float> x(9, 0.0f);
    x[1 * 3 + 0] = 1.0f;  // impulse at (1, 0)
    const auto y = conv_transpose2d(TF({1, 3, 3}, x), spec, TF({1, 1, 4, 4}, k));
    ASSERT_EQ(y.shape(), (Shape{1, 6, 6}));
    // Stamp's top-left lands at (1*2 - 1, 0*2 - 1) = (1, -1).
    for (int oy = 0; oy < 6; ++oy)
        for (int ox = 0; ox < 6; ++ox) {
            const int ky = oy - 1, kx = ox + 1;
            const float expect = (ky >= 0 && ky < 4 && kx >= 0 && kx < 4) ? k[ky * 4 + kx] : 0.0f;
            EXPECT_EQ(y[oy * 6 + ox], expect) << oy << "," << ox;
        }
}

TEST(ConvTranspose2d, Gradcheck) {
    for (uint64_t seed : {0, 1, 2}) {
        Rng rng(seed, "convt-gc");
        const ConvSpec spec{3, 2, 4, 2, 1, true};
        const TD x = rng.normal_tensor<double>({3, 3, 3});
        const TD w = rng.normal_tensor<double>(spec.transposed_weight_shape(), 0.5);
        const TD b = rng.normal_tensor<double>({2});
        auto f = [&](const TD& xx, const TD& ww, const TD& bb) { return conv_transpose2d(xx, spec, ww, bb); };
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(f(v, w, b), 1); }, x), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(f(x, v, b), 2); }, w), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(f(x, w, v), 3); }, b), 1e-4);
    }
}

TEST(BilinearUpsample, ConstantStaysConstant) {
    const auto y = bilinear_upsample(TF::full({2, 3, 3}, 0.7f), 7, 9);
    for (float v : y.data()) EXPECT_FLOAT_EQ(v, 0.7f);
}

TEST(BilinearUpsample, SinglePixelReplicates) {
    const auto y = bilinear_upsample(TF::full({1, 1, 1}, -2.5f), 4, 4);
    for (float v : y.data()) EXPECT_EQ(v, -2.5f);
}

TEST(BilinearUpsample, HalfPixelConvention) {
    const auto y = bilinear_upsample(TF::from({1, 1, 2}, {0, 1}), 1, 4);
    const std::vector<float> expect{0.0f, 0.25f, 0.75f, 1.0f};
    for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(y[i], expect[i]);
}

TEST(BilinearUpsample, StaysWithinInputRange) {
    Rng rng(11, "bil");
    for (int trial = 0; trial < 20; ++trial) {
        const TF x = rng.normal_tensor<float>({3, 3, 5});
        const auto y = bilinear_upsample(x, 8, 11);
        for (int64_t c = 0; c < 3; ++c) {
            const auto src = x.data().subspan(c * 15, 15);
            const auto [lo, hi] = std::minmax_element(src.begin(), src.end());
            for (int64_t i = 0; i < 88; ++i) {
                EXPECT_GE(y[c * 88 + i], *lo - 1e-6f);
                EXPECT_LE(y[c * 88 + i], *hi + 1e-6f);
            }
        }
    }
}

TEST(BilinearUpsample, DownsamplingRejected) {
    EXPECT_THROW(bilinear_upsample(TF::zeros({1, 4, 4}), 2, 4), std::invalid_argument);
}

TEST(BilinearUpsample, Gradcheck) {
    for (uint64_t seed : {0, 1, 2}) {
        Rng rng(seed, "bil-gc");
        EXPECT_LE(finite_diff_check([](const TD& v) { return random_projection(bilinear_upsample(v, 7, 8), 1); },
                                    rng.normal_tensor<double>({2, 3, 4})),
                  1e-4);
    }
}

TEST(PartialConv2d, AllValidEqualsConv) {
    Rng rng(2, "pconv");
    const ConvSpec spec{3, 4, 3, 1, 1, true};
    const TF x = rng.normal_tensor<float>({3, 6, 6});
    const TF w = rng.normal_tensor<float>(spec.weight_shape());
    const TF b = rng.normal_tensor<float>({4});
    const auto r = partial_conv2d(x, ones({1, 6, 6}), spec, w, b);
    const auto c = conv2d(x, spec, w, b);
    for (int64_t i = 0; i < c.numel(); ++i) EXPECT_NEAR(r.output[i], c[i], 1e-6);
    for (float v : r.vmask.data()) EXPECT_EQ(v, 1.0f);
}

TEST(PartialConv2d, SingleValidPixelIsRenormalized) {
    // One valid pixel of value v in a 3x3 window: sum(w*x*m) = v, scaled by 9/1.
    const float v = 0.37f;
    std::vector<float> x(9, 5.0f), m(9, 0.0f);
    x[4] = v;
    m[4] = 1.0f;
    const ConvSpec spec{1, 1, 3, 1, 0, true};
    const auto r = partial_conv2d(TF({1, 3, 3}, x), TF({1, 3, 3}, m), spec, ones({1, 1, 3, 3}), TF::zeros({1}));
    ASSERT_EQ(r.output.shape(), (Shape{1, 1, 1}));
    EXPECT_FLOAT_EQ(r.output[0], 9.0f * v);
    EXPECT_EQ(r.vmask[0], 1.0f);
}

TEST(PartialConv2d, AllInvalidWindowIsZero) {
    const ConvSpec spec{2, 2, 3, 1, 1, true};
    std::vector<float> m(25, 0.0f);
    m[0] = 1.0f;  // only the top-left corner is known
    const auto r = partial_conv2d(TF::full({2, 5, 5}, 3.0f), TF({1, 5, 5}, m), spec, ones(spec.weight_shape()),
                                  TF::full({2}, 0.5f));
    // Windows centred at distance >= 2 from the corner see nothing.
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t y = 0; y < 5; ++y)
            for (int64_t xo = 0; xo < 5; ++xo) {
                const bool reached = y <= 1 && xo <= 1;
                EXPECT_EQ(r.vmask[y * 5 + xo], reached ? 1.0f : 0.0f);
                if (!reached) {
                    EXPECT_EQ(r.output[(c * 5 + y) * 5 + xo], 0.0f);
                }
            }
}

TEST(PartialConv2d, RepeatedApplicationSaturates) {
    Rng rng(12, "grow");
    const ConvSpec spec{1, 1, 3, 1, 1, false};
    const TF w = ones(spec.weight_shape());
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t h = rng.uniform_int(2, 9), wd = rng.uniform_int(2, 9);
        TF m = random_mask(rng, h, wd, 0.05);
        std::vector<float> mv(m.data().begin(), m.data().end());
        mv[static_cast<size_t>(rng.uniform_int(0, h * wd - 1))] = 1.0f;
        m = TF({1, h, wd}, mv);
        TF x = TF::zeros({1, h, wd});
        auto count = [](const TF& t) { return std::count(t.data().begin(), t.data().end(), 1.0f); };
        int64_t steps = 0;
        while (count(m) < h * wd) {
            const auto before = count(m);
            m = partial_conv2d(x, m, spec, w).vmask;
            ASSERT_GT(count(m), before);
            ++steps;
        }
        EXPECT_LE(steps, h + wd);
    }
}

TEST(PartialConv2d, Gradcheck) {
    for (uint64_t seed : {0, 1, 2}) {
        Rng rng(seed, "pconv-gc");
        const ConvSpec spec{2, 2, 3, 1, 1, true};
        const TD x = rng.normal_tensor<double>({2, 5, 5});
        const TD w = rng.normal_tensor<double>(spec.weight_shape(), 0.5);
        const TD b = rng.normal_tensor<double>({2});
        std::vector<double> mv(25);
        for (auto& v : mv) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const TD m({1, 5, 5}, mv);
        auto f = [&](const TD& xx, const TD& ww, const TD& bb) { return partial_conv2d(xx, m, spec, ww, bb).output; };
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(f(v, w, b), 1); }, x), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(f(x, v, b), 2); }, w), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(f(x, w, v), 3); }, b), 1e-4);
    }
}

TEST(GlobalAvgPool, Means) {
    const auto y = global_avg_pool(TF::from({2, 1, 2}, {1, 3, 4, 4}));
    EXPECT_EQ(y.shape(), (Shape{2}));
    EXPECT_EQ(y[0], 2.0f);
    EXPECT_EQ(y[1], 4.0f);
}

TEST(GlobalAvgPool, Gradcheck) {
    Rng rng(0, "gap");
    EXPECT_LE(finite_diff_check([](const TD& v) { return random_projection(global_avg_pool(v), 1); },
                                rng.normal_tensor<double>({3, 4, 2})),
              1e-4);
}

TEST(InstanceNorm, ZeroMeanUnitVarianceAndGradcheck) {
    Rng rng(5, "in");
    const TD x = rng.normal_tensor<double>({2, 4, 4}, 3.0);
    const auto y = instance_norm(x);
    for (int64_t c = 0; c < 2; ++c) {
        double m = 0, v = 0;
        for (int64_t i = 0; i < 16; ++i) m += y[c * 16 + i];
        for (int64_t i = 0; i < 16; ++i) v += y[c * 16 + i] * y[c * 16 + i];
        EXPECT_NEAR(m / 16, 0.0, 1e-12);
        EXPECT_NEAR(v / 16, 1.0, 1e-5);
    }
    EXPECT_LE(finite_diff_check([](const TD& v) { return random_projection(instance_norm(v), 2); }, x), 1e-4);
}

TEST(ChannelScale, GradcheckBothInputs) {
    Rng rng(6, "cs");
    const TD x = rng.normal_tensor<double>({3, 2, 2});
    const TD s = rng.normal_tensor<double>({3});
    EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(channel_scale(v, s), 1); }, x), 1e-4);
    EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(channel_scale(x, v), 1); }, s), 1e-4);
}

TEST(Masks, BinaryCheck) {
    EXPECT_NO_THROW(require_binary_mask("t", TF::from({3}, {0, 1, 1})));
    EXPECT_THROW(require_binary_mask("t", TF::from({2}, {0, 0.5f})), std::invalid_argument);
}
