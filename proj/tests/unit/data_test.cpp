#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "bapf/data.hpp"
#include "bapf/rng.hpp"

using namespace bapf;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("bapf_data_test_" + std::to_string(::getpid()))) {
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string dir() const { return path_.string(); }

private:
    fs::path path_;
};

std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RawImage gradient_image(int64_t w, int64_t h) {
    RawImage img{w, h, 3, {}};
    for (int64_t i = 0; i < w * h * 3; ++i) img.pixels.push_back(static_cast<uint8_t>((i * 37) % 256));
    return img;
}

}  // namespace

TEST(PixelMap, EndpointsAndMidpoint) {
    RawImage img{3, 1, 1, {0, 255, 128}};
    const auto t = image_to_tensor(img);
    EXPECT_EQ(t[0], -1.0f);
    EXPECT_EQ(t[1], 1.0f);
    EXPECT_NEAR(t[2], 0.003922f, 1e-6);
    EXPECT_NEAR(t[2], 128 / 127.5 - 1, 1e-7);
    EXPECT_EQ(tensor_to_image(t).pixels, img.pixels);
}

TEST(PixelMap, SaveRoundsHalfUpAndClamps) {
    const auto t = Tensor<float>::from({1, 1, 3}, {-2.0f, 2.0f, 0.0f});
    const auto img = tensor_to_image(t);
    EXPECT_EQ(img.pixels[0], 0);
    EXPECT_EQ(img.pixels[1], 255);
    EXPECT_EQ(img.pixels[2], 128);  // 127.5 rounds up
}

TEST(PngIo, AllByteValuesSurviveTheRoundTrip) {
    RawImage img{256, 1, 1, {}};
    for (int i = 0; i < 256; ++i) img.pixels.push_back(static_cast<uint8_t>(i));
    EXPECT_EQ(tensor_to_image(image_to_tensor(img)).pixels, img.pixels);
}

TEST(PngIo, SaveLoadIsIdempotent) {
    TempDir tmp;
    write_png(tmp.file("a.png"), gradient_image(16, 16));
    const auto s = load_image(tmp.file("a.png"), 16);
    EXPECT_EQ(s.rgb.shape(), (Shape{3, 16, 16}));
    save_image(tmp.file("b.png"), s.rgb);
    EXPECT_EQ(slurp(tmp.file("a.png")), slurp(tmp.file("b.png")));
    const auto again = load_image(tmp.file("b.png"), 16);
    for (int64_t i = 0; i < s.rgb.numel(); ++i) ASSERT_EQ(s.rgb[i], again.rgb[i]);
}

TEST(PngIo, ResizesToRequestedSize) {
    TempDir tmp;
    write_png(tmp.file("a.png"), gradient_image(20, 12));
    const auto s = load_image(tmp.file("a.png"), 32);
    EXPECT_EQ(s.rgb.shape(), (Shape{3, 32, 32}));
    for (float v : s.rgb.data()) {
        EXPECT_GE(v, -1.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(PngIo, Errors) {
    TempDir tmp;
    EXPECT_THROW(load_image(tmp.file("missing.png"), 8), std::runtime_error);
    write_png(tmp.file("gray.png"), RawImage{4, 4, 1, std::vector<uint8_t>(16, 7)});
    EXPECT_THROW(load_image(tmp.file("gray.png"), 4), std::runtime_error);
    std::ofstream(tmp.file("junk.png")) << "not a png";
    EXPECT_THROW(load_image(tmp.file("junk.png"), 4), std::runtime_error);
}

TEST(MaskIo, PngAndPgmRoundTrip) {
    TempDir tmp;
    const auto m = generate_irregular_mask(MaskSpec::parse("20-30", 3), 32);
    save_mask(tmp.file("m.png"), m);
    save_mask(tmp.file("m.pgm"), m);
    for (const auto* name : {"m.png", "m.pgm"}) {
        const auto back = load_mask(tmp.file(name), 32);
        for (int64_t i = 0; i < m.numel(); ++i) ASSERT_EQ(back[i], m[i]) << name;
    }
}

TEST(MaskIo, AsciiPgmWithCommentsAndThreshold) {
    TempDir tmp;
    std::ofstream(tmp.file("m.pgm")) << "P2\n# comment\n2 2\n15\n0 15\n7 8\n";
    const auto m = load_mask(tmp.file("m.pgm"), 2);
    EXPECT_EQ(m[0], 0.0f);
    EXPECT_EQ(m[1], 1.0f);
    EXPECT_EQ(m[2], 0.0f);
    EXPECT_EQ(m[3], 1.0f);
}

TEST(MaskSpec, ParsesOnlyKnownBins) {
    EXPECT_EQ(MaskSpec::parse("0-10", 1).hi_percent, 10);
    EXPECT_EQ(MaskSpec::parse("40-50", 1).lo_percent, 40);
    for (const auto* bad : {"10-30", "50-60", "5-15", "10", "10-20x", "a-b"})
        EXPECT_THROW(MaskSpec::parse(bad, 1), std::invalid_argument) << bad;
}

TEST(MaskRatio, PointValues) {
    EXPECT_EQ(mask_ratio(Tensor<float>::zeros({1, 8, 8})), 0.0);
    EXPECT_EQ(mask_ratio(Tensor<float>::full({1, 8, 8}, 1.0f)), 1.0);
    auto half = Tensor<float>::zeros({1, 8, 8});
    for (int i = 0; i < 32; ++i) half.mutable_data()[static_cast<size_t>(i)] = 1;
    EXPECT_EQ(mask_ratio(half), 0.5);
}

TEST(IrregularMask, EveryBinIsReachedAtDeskAndPaperScale) {
    for (int64_t size : {64, 256})
        for (const auto* bin : {"0-10", "10-20", "20-30", "30-40", "40-50"})
            for (uint64_t seed = 0; seed < 5; ++seed) {
                const auto spec = MaskSpec::parse(bin, seed);
                const auto m = generate_irregular_mask(spec, size);
                EXPECT_TRUE(spec.contains(mask_ratio(m))) << bin << " size " << size;
                for (float v : m.data()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
            }
}

TEST(IrregularMask, Deterministic) {
    const auto spec = MaskSpec::parse("10-20", 42);
    const auto a = generate_irregular_mask(spec, 64);
    const auto b = generate_irregular_mask(spec, 64);
    for (int64_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a[i], b[i]);
    const auto c = generate_irregular_mask(MaskSpec::parse("10-20", 43), 64);
    bool differs = false;
    for (int64_t i = 0; i < a.numel(); ++i) differs = differs || a[i] != c[i];
    EXPECT_TRUE(differs);
}

TEST(StructureTarget, ConstantImageUnchanged) {
    const auto t = structure_target(Tensor<float>::full({3, 12, 12}, 0.3f));
    for (float v : t.data()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(StructureTarget, BoundedByInputRange) {
    Rng rng(1, "st");
    const auto img = rng.uniform_tensor<float>({3, 16, 16}, -1, 1);
    const auto t = structure_target(img);
    for (int64_t c = 0; c < 3; ++c) {
        float lo = 2, hi = -2;
        for (int64_t i = 0; i < 256; ++i) {
            lo = std::min(lo, img[c * 256 + i]);
            hi = std::max(hi, img[c * 256 + i]);
        }
        for (int64_t i = 0; i < 256; ++i) {
            EXPECT_GE(t[c * 256 + i], lo - 1e-6);
            EXPECT_LE(t[c * 256 + i], hi + 1e-6);
        }
    }
}

TEST(StructureTarget, KeepsEdgesAndRemovesNoise) {
    Rng rng(2, "edge");
    const int64_t n = 32;
    std::vector<float> step(static_cast<size_t>(3 * n * n)), noise(step.size());
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) {
                const auto i = static_cast<size_t>((c * n + y) * n + x);
                noise[i] = static_cast<float>(0.02 * rng.normal());
                step[i] = (x < n / 2 ? -0.5f : 0.5f) + noise[i];
            }
    const auto s = structure_target(Tensor<float>({3, n, n}, step));
    auto edge = [&](const std::vector<float>& v) {
        double acc = 0;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < n; ++y)
                acc += v[static_cast<size_t>((c * n + y) * n + n / 2)] - v[static_cast<size_t>((c * n + y) * n + n / 2 - 1)];
        return acc / static_cast<double>(3 * n);
    };
    const std::vector<float> sv(s.data().begin(), s.data().end());
    EXPECT_GE(edge(sv), 0.9 * 1.0);

    auto variance = [](std::span<const float> v) {
        double m = 0, q = 0;
        for (float x : v) m += x;
        m /= static_cast<double>(v.size());
        for (float x : v) q += (x - m) * (x - m);
        return q / static_cast<double>(v.size());
    };
    const auto sn = structure_target(Tensor<float>({3, n, n}, noise));
    EXPECT_LE(variance(sn.data()), 0.2 * variance(noise));
}

TEST(StructureTarget, ExtraIterationBarelyMoves) {
    Rng rng(3, "idem");
    for (int i = 0; i < 4; ++i) {
        const auto img = synthetic_texture(rng, 32);
        const auto a = structure_target(img, 5);
        const auto b = structure_target(img, 6);
        double d = 0;
        for (int64_t j = 0; j < a.numel(); ++j) d += std::abs(a[j] - b[j]);
        EXPECT_LT(d / static_cast<double>(a.numel()), 0.01);
    }
}

TEST(Hflip, MirrorsColumnsAndIsAnInvolution) {
    const auto x = Tensor<float>::from({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    const auto f = hflip(x);
    const std::vector<float> expect{3, 2, 1, 6, 5, 4};
    for (int i = 0; i < 6; ++i) EXPECT_EQ(f[i], expect[static_cast<size_t>(i)]);
    const auto ff = hflip(f);
    for (int i = 0; i < 6; ++i) EXPECT_EQ(ff[i], x[i]);
}

TEST(SyntheticSet, DeterministicTwoColourTextures) {
    TempDir tmp;
    const auto paths = write_synthetic_set(tmp.file("a"), 6, 32, 5);
    write_synthetic_set(tmp.file("b"), 6, 32, 5);
    ASSERT_EQ(paths.size(), 6u);
    EXPECT_EQ(list_pngs(tmp.file("a")), paths);
    for (const auto& p : paths) {
        EXPECT_EQ(slurp(p), slurp(tmp.file("b") + "/" + fs::path(p).filename().string()));
        const auto img = read_png(p, 3);
        std::set<std::tuple<int, int, int>> colours;
        for (size_t i = 0; i < img.pixels.size(); i += 3) colours.insert({img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]});
        EXPECT_EQ(colours.size(), 2u);
    }
}

TEST(ListPngs, SortedAndFiltered) {
    TempDir tmp;
    write_png(tmp.file("b.png"), gradient_image(2, 2));
    write_png(tmp.file("a.PNG"), gradient_image(2, 2));
    std::ofstream(tmp.file("c.txt")) << "x";
    const auto l = list_pngs(tmp.dir());
    ASSERT_EQ(l.size(), 2u);
    EXPECT_EQ(fs::path(l[0]).filename(), "a.PNG");
    EXPECT_THROW(list_pngs(tmp.file("nope")), std::runtime_error);
}
