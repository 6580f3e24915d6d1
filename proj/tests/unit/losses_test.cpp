#include <gtest/gtest.h>

#include <algorithm>

#include "bapf/gradcheck.hpp"
#include "bapf/losses.hpp"
#include "bapf/ops.hpp"
#include "bapf/rng.hpp"

using namespace bapf;

using TD = Tensor<double>;
using TF = Tensor<float>;

TEST(ReconL1, PointValues) {
    const TF a = TF::from({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(recon_l1(a, a).item(), 0.0f);
    EXPECT_NEAR(recon_l1(add_scalar(a, 0.5), a).item(), 0.5f, 1e-7);
    EXPECT_THROW(recon_l1(a, TF::zeros({4})), std::invalid_argument);
}

TEST(ReconL1, GradientIsSignOverN) {
    TD out = TD::from({4}, {1.0, -2.0, 0.5, 3.0});
    out.set_requires_grad(true);
    const TD target = TD::from({4}, {0.0, 0.0, 0.5, 4.0});
    backward(recon_l1(out, target));
    const std::vector<double> expect{0.25, -0.25, 0.0, -0.25};
    for (int i = 0; i < 4; ++i) EXPECT_EQ(out.grad()[i], expect[static_cast<size_t>(i)]);
}

TEST(Extractor, FrozenAndDeterministic) {
    const SurrogateExtractor<float> a, b;
    for (const auto& [name, t] : a.params().entries()) {
        EXPECT_FALSE(t.requires_grad()) << name;
        const auto& u = b.params().at(name);
        for (int64_t i = 0; i < t.numel(); ++i) ASSERT_EQ(t[i], u[i]);
    }
    const auto f = a.features(TF::zeros({3, 16, 16}));
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f[0].shape(), (Shape{8, 16, 16}));
    EXPECT_EQ(f[1].shape(), (Shape{16, 8, 8}));
    EXPECT_EQ(f[2].shape(), (Shape{32, 4, 4}));
}

TEST(Extractor, ParamsReceiveNoGradient) {
    const SurrogateExtractor<double> ext;
    Rng rng(1, "ext");
    TD out = rng.normal_tensor<double>({3, 8, 8}, 1.0, true);
    backward(perceptual(out, rng.normal_tensor<double>({3, 8, 8}), ext));
    EXPECT_TRUE(out.has_grad());
    for (const auto& [name, t] : ext.params().entries()) EXPECT_FALSE(t.has_grad()) << name;
}

TEST(Perceptual, ZeroOnIdenticalAndNonNegative) {
    const SurrogateExtractor<float> ext;
    Rng rng(2, "prec");
    for (int i = 0; i < 5; ++i) {
        const TF a = rng.uniform_tensor<float>({3, 8, 8}, -1, 1);
        const TF b = rng.uniform_tensor<float>({3, 8, 8}, -1, 1);
        EXPECT_EQ(perceptual(a, a, ext).item(), 0.0f);
        EXPECT_GT(perceptual(a, b, ext).item(), 0.0f);
    }
}

TEST(Gram, HandValues) {
    const auto g = gram(TD::from({2, 1, 1}, {1, 2}));
    EXPECT_EQ(g.shape(), (Shape{2, 2}));
    EXPECT_DOUBLE_EQ(g[0], 0.5);
    EXPECT_DOUBLE_EQ(g[1], 1.0);
    EXPECT_DOUBLE_EQ(g[2], 1.0);
    EXPECT_DOUBLE_EQ(g[3], 2.0);
    const auto z = gram(TD::zeros({3, 2, 2}));
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gram, SymmetricPsd) {
    Rng rng(3, "gram");
    const auto g = gram(rng.normal_tensor<double>({4, 3, 3}));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) EXPECT_EQ(g[i * 4 + j], g[j * 4 + i]);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> v(4);
        for (auto& x : v) x = rng.normal();
        double q = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) q += v[i] * g[i * 4 + j] * v[j];
        EXPECT_GE(q, -1e-12);
    }
}

TEST(Gram, InvariantToSpatialPermutation) {
    Rng rng(4, "perm");
    const TD phi = rng.normal_tensor<double>({3, 4, 4});
    std::vector<int> perm(16);
    for (int i = 0; i < 16; ++i) perm[i] = i;
    for (int i = 15; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    std::vector<double> shuffled(phi.numel());
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) shuffled[c * 16 + i] = phi[c * 16 + perm[i]];
    const auto a = gram(phi);
    const auto b = gram(TD({3, 4, 4}, shuffled));
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Style, ZeroOnIdenticalAndNonNegative) {
    const SurrogateExtractor<float> ext;
    Rng rng(5, "style");
    const TF a = rng.uniform_tensor<float>({3, 8, 8}, -1, 1);
    const TF b = rng.uniform_tensor<float>({3, 8, 8}, -1, 1);
    EXPECT_EQ(style(a, a, ext).item(), 0.0f);
    EXPECT_GT(style(a, b, ext).item(), 0.0f);
}

TEST(Losses, GradcheckAgainstGeneratedImage) {
    const SurrogateExtractor<double> ext;
    for (uint64_t seed : {0, 1, 2}) {
        Rng rng(seed, "loss-gc");
        const TD out = rng.uniform_tensor<double>({3, 8, 8}, -1, 1);
        const TD target = rng.uniform_tensor<double>({3, 8, 8}, -1, 1);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return recon_l1(v, target); }, out), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return perceptual(v, target, ext); }, out), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return style(v, target, ext); }, out), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return random_projection(gram(v), 1); }, out), 1e-4);
        const TD fake = rng.normal_tensor<double>({1, 4, 4});
        const TD real = rng.normal_tensor<double>({1, 4, 4});
        EXPECT_LE(finite_diff_check([&](const TD& v) { return ralsgan(real, v).generator; }, fake), 1e-4);
        EXPECT_LE(finite_diff_check([&](const TD& v) { return ralsgan(v, fake).discriminator; }, real), 1e-4);
    }
}

TEST(Ralsgan, EqualMeansGiveMinusOne) {
    const auto p = ralsgan(TD::full({1, 2, 2}, 0.3), TD::full({1, 2, 2}, 0.3));
    EXPECT_DOUBLE_EQ(p.generator.item(), -1.0);
    EXPECT_DOUBLE_EQ(p.discriminator.item(), -1.0);
}

TEST(Ralsgan, RealOneFakeZero) {
    const auto p = ralsgan(TD::from({1, 1, 2}, {0.5, 1.5}), TD::from({1, 1, 2}, {-1.0, 1.0}));
    EXPECT_DOUBLE_EQ(p.generator.item(), -5.0);
    EXPECT_DOUBLE_EQ(p.discriminator.item(), -1.0);
}

TEST(Ralsgan, SwappingInputsSwapsRoles) {
    Rng rng(6, "swap");
    for (int i = 0; i < 10; ++i) {
        const TD r = rng.normal_tensor<double>({1, 3, 3});
        const TD f = rng.normal_tensor<double>({1, 3, 3});
        EXPECT_NEAR(ralsgan(r, f).generator.item(), ralsgan(f, r).discriminator.item(), 1e-12);
    }
}

TEST(Ralsgan, ObjectivesAreNegatedAndHaveInteriorOptima) {
    auto at = [](double d) {
        return ralsgan_objectives(TD::full({1, 1, 1}, d), TD::zeros({1, 1, 1}));
    };
    EXPECT_DOUBLE_EQ(at(1.0).generator.item(), 5.0);
    EXPECT_DOUBLE_EQ(at(-0.5).generator.item(), 0.5);
    EXPECT_GT(at(-0.4).generator.item(), 0.5);
    EXPECT_GT(at(-0.6).generator.item(), 0.5);
    EXPECT_DOUBLE_EQ(at(0.5).discriminator.item(), 0.5);
    EXPECT_GT(at(0.4).discriminator.item(), 0.5);
    EXPECT_GT(at(0.6).discriminator.item(), 0.5);
}

TEST(TotalObjective, PointValues) {
    const LossWeights w;
    LossTerms<double> t{TD::scalar(1), TD::scalar(1), TD::scalar(1), TD::scalar(0.01)};
    EXPECT_NEAR(total_objective(Stage::Texture, t, w).item(), 3.8, 1e-6);
    EXPECT_NEAR(total_objective(Stage::Structure, LossTerms<double>{TD::scalar(1), TD::scalar(1), {}, {}}, w).item(), 1.2,
                1e-12);
    LossTerms<double> z{TD::scalar(0), TD::scalar(0), TD::scalar(0), TD::scalar(0)};
    EXPECT_EQ(total_objective(Stage::Texture, z, w).item(), 0.0);
    EXPECT_THROW(total_objective(Stage::Texture, LossTerms<double>{TD::scalar(1), TD::scalar(1), {}, {}}, w),
                 std::invalid_argument);
}
