#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bapf/rng.hpp"
#include "bapf/tensor.hpp"

namespace bapf {

/// Interleaved 8-bit pixels, row-major.
struct RawImage {
    int64_t width = 0;
    int64_t height = 0;
    int channels = 0;  // 1 or 3
    std::vector<uint8_t> pixels;
};

/// Decodes an 8-bit PNG. `channels` 3 requires a color image (alpha is
/// dropped); 1 converts anything to grayscale.
RawImage read_png(const std::string& path, int channels);
void write_png(const std::string& path, const RawImage& img);
/// Binary (P5) or ASCII (P2) graymap with maxval <= 255.
RawImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const RawImage& img);

/// [0,255] -> [-1,1] via p / 127.5 - 1, planar [C,H,W].
Tensor<float> image_to_tensor(const RawImage& img);
/// Inverse map with round-half-up and clamping.
RawImage tensor_to_image(const Tensor<float>& t);

/// Bilinear resize with half-pixel centers; identity when the size already matches.
Tensor<float> resize_bilinear(const Tensor<float>& x, int64_t out_h, int64_t out_w);

struct ImageSample {
    Tensor<float> rgb;  // [3,H,W] in [-1,1]
    std::string path;
};

ImageSample load_image(const std::string& path, int64_t size);
void save_image(const std::string& path, const Tensor<float>& rgb);

/// Reads a PNG or PGM mask (255 = hole, threshold at 128) resized by nearest
/// neighbour to size x size. Returns [1,size,size] in {0,1}.
Tensor<float> load_mask(const std::string& path, int64_t size);
void save_mask(const std::string& path, const Tensor<float>& hole_mask);

/// Hole-to-image area ratio bin in percent, inclusive bounds.
struct MaskSpec {
    int lo_percent = 10;
    int hi_percent = 20;
    uint64_t seed = 0;

    /// Parses "10-20"; allowed bins are 0-10, 10-20, 20-30, 30-40, 40-50.
    static MaskSpec parse(const std::string& bin, uint64_t seed);
    std::string bin() const;
    bool contains(double ratio) const;
};

/// Random-walk brush strokes, resampled until the hole ratio lands in the bin.
/// Throws after 100 failed attempts.
Tensor<float> generate_irregular_mask(const MaskSpec& spec, int64_t size);

double mask_ratio(const Tensor<float>& mask);

/// Edge-preserving smoother used as the structure-stage label: 5 passes of a
/// 5x5 filter with spatial sigma 2 and range sigma 0.1 (in [-1,1] units).
Tensor<float> structure_target(const Tensor<float>& img, int iterations = 5);

Tensor<float> hflip(const Tensor<float>& x);

/// Sorted *.png files of a directory (non-recursive).
std::vector<std::string> list_pngs(const std::string& dir);

/// Striped or checkered two-colour texture, [3,size,size] in [-1,1].
Tensor<float> synthetic_texture(Rng& rng, int64_t size);

/// Writes `count` textures as tex_<index>.png; returns the paths.
std::vector<std::string> write_synthetic_set(const std::string& dir, int count, int64_t size, uint64_t seed);

}  // namespace bapf
