#include "bapf/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace bapf {

namespace fs = std::filesystem;

RawImage read_png(const std::string& path, int channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw std::runtime_error("cannot read PNG '" + path + "': " + image.message);
    }
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw std::runtime_error("PNG '" + path + "' is not 8-bit");
    }
    if (channels == 3 && !(image.format & PNG_FORMAT_FLAG_COLOR)) {
        png_image_free(&image);
        throw std::runtime_error("PNG '" + path + "' is not an RGB image");
    }
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    RawImage out;
    out.width = image.width;
    out.height = image.height;
    out.channels = channels;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        throw std::runtime_error("cannot decode PNG '" + path + "': " + image.message);
    }
    return out;
}

void write_png(const std::string& path, const RawImage& img) {
    if ((img.channels != 1 && img.channels != 3) ||
        img.pixels.size() != static_cast<size_t>(img.width * img.height * img.channels)) {
        throw std::invalid_argument("write_png: inconsistent image buffer");
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
        throw std::runtime_error("cannot write PNG '" + path + "': " + image.message);
    }
}

RawImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open PGM '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw std::runtime_error("'" + path + "' is not a PGM file");
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string line;
            std::getline(in, line);
            in >> std::ws;
        }
        int64_t v = -1;
        in >> v;
        if (!in) throw std::runtime_error("truncated PGM header in '" + path + "'");
        return v;
    };
    RawImage img;
    img.width = next_int();
    img.height = next_int();
    const int64_t maxval = next_int();
    if (img.width < 1 || img.height < 1 || maxval < 1 || maxval > 255) {
        throw std::runtime_error("unsupported PGM geometry or depth in '" + path + "'");
    }
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(img.width * img.height));
    if (magic == "P5") {
        in.get();
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
        if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
            throw std::runtime_error("truncated PGM data in '" + path + "'");
        }
    } else {
        for (auto& p : img.pixels) p = static_cast<uint8_t>(next_int());
    }
    if (maxval != 255)
        for (auto& p : img.pixels) p = static_cast<uint8_t>(std::lround(p * 255.0 / static_cast<double>(maxval)));
    return img;
}

void write_pgm(const std::string& path, const RawImage& img) {
    if (img.channels != 1) throw std::invalid_argument("write_pgm: expected one channel");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write PGM '" + path + "'");
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

Tensor<float> image_to_tensor(const RawImage& img) {
    const int64_t c = img.channels, h = img.height, w = img.width;
    std::vector<float> v(static_cast<size_t>(c * h * w));
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < h * w; ++i)
            v[static_cast<size_t>(ch * h * w + i)] = static_cast<float>(img.pixels[static_cast<size_t>(i * c + ch)] / 127.5 - 1.0);
    return Tensor<float>({c, h, w}, std::move(v));
}

RawImage tensor_to_image(const Tensor<float>& t) {
    if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3)) {
        throw std::invalid_argument("tensor_to_image: expected [1|3,H,W], got " + shape_str(t.shape()));
    }
    RawImage img;
    img.channels = static_cast<int>(t.dim(0));
    img.height = t.dim(1);
    img.width = t.dim(2);
    const int64_t hw = img.height * img.width;
    img.pixels.resize(static_cast<size_t>(hw * img.channels));
    for (int64_t ch = 0; ch < img.channels; ++ch)
        for (int64_t i = 0; i < hw; ++i) {
            const double v = std::floor((static_cast<double>(t[ch * hw + i]) + 1.0) * 127.5 + 0.5);
            img.pixels[static_cast<size_t>(i * img.channels + ch)] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    return img;
}

Tensor<float> resize_bilinear(const Tensor<float>& x, int64_t out_h, int64_t out_w) {
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h == out_h && w == out_w) return x.detach();
    auto coord = [](int64_t d, int64_t in, int64_t out, int64_t& i0, int64_t& i1, double& f) {
        double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        i0 = static_cast<int64_t>(std::floor(s));
        i1 = std::min(i0 + 1, in - 1);
        f = s - static_cast<double>(i0);
    };
    std::vector<float> v(static_cast<size_t>(c * out_h * out_w));
    for (int64_t y = 0; y < out_h; ++y) {
        int64_t y0, y1;
        double fy;
        coord(y, h, out_h, y0, y1, fy);
        for (int64_t xx = 0; xx < out_w; ++xx) {
            int64_t x0, x1;
            double fx;
            coord(xx, w, out_w, x0, x1, fx);
            for (int64_t ch = 0; ch < c; ++ch) {
                const int64_t b = ch * h * w;
                const double top = (1 - fx) * x[b + y0 * w + x0] + fx * x[b + y0 * w + x1];
                const double bot = (1 - fx) * x[b + y1 * w + x0] + fx * x[b + y1 * w + x1];
                v[static_cast<size_t>((ch * out_h + y) * out_w + xx)] = static_cast<float>((1 - fy) * top + fy * bot);
            }
        }
    }
    return Tensor<float>({c, out_h, out_w}, std::move(v));
}

ImageSample load_image(const std::string& path, int64_t size) {
    auto t = image_to_tensor(read_png(path, 3));
    return {resize_bilinear(t, size, size), path};
}

void save_image(const std::string& path, const Tensor<float>& rgb) { write_png(path, tensor_to_image(rgb)); }

Tensor<float> load_mask(const std::string& path, int64_t size) {
    const std::string ext = fs::path(path).extension().string();
    const RawImage img = (ext == ".pgm" || ext == ".PGM") ? read_pgm(path) : read_png(path, 1);
    std::vector<float> v(static_cast<size_t>(size * size));
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            const int64_t sy = y * img.height / size, sx = x * img.width / size;
            v[static_cast<size_t>(y * size + x)] = img.pixels[static_cast<size_t>(sy * img.width + sx)] >= 128 ? 1.0f : 0.0f;
        }
    return Tensor<float>({1, size, size}, std::move(v));
}

void save_mask(const std::string& path, const Tensor<float>& hole_mask) {
    RawImage img;
    img.channels = 1;
    img.height = hole_mask.dim(1);
    img.width = hole_mask.dim(2);
    img.pixels.resize(static_cast<size_t>(img.height * img.width));
    for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = hole_mask[static_cast<int64_t>(i)] != 0.0f ? 255 : 0;
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".pgm")
        write_pgm(path, img);
    else
        write_png(path, img);
}

MaskSpec MaskSpec::parse(const std::string& bin, uint64_t seed) {
    MaskSpec s;
    s.seed = seed;
    char dash = 0;
    std::istringstream is(bin);
    if (!(is >> s.lo_percent >> dash >> s.hi_percent) || dash != '-' || !is.eof() || s.lo_percent % 10 != 0 ||
        s.hi_percent != s.lo_percent + 10 || s.lo_percent < 0 || s.hi_percent > 50) {
        throw std::invalid_argument("mask ratio bin must be one of 0-10,10-20,20-30,30-40,40-50; got '" + bin + "'");
    }
    return s;
}

std::string MaskSpec::bin() const { return std::to_string(lo_percent) + "-" + std::to_string(hi_percent); }

bool MaskSpec::contains(double ratio) const { return ratio >= lo_percent / 100.0 && ratio <= hi_percent / 100.0; }

namespace {

void stamp_disk(std::vector<float>& m, int64_t size, double cy, double cx, int64_t r) {
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy)) - r);
    const int64_t y1 = std::min<int64_t>(size - 1, static_cast<int64_t>(std::ceil(cy)) + r);
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx)) - r);
    const int64_t x1 = std::min<int64_t>(size - 1, static_cast<int64_t>(std::ceil(cx)) + r);
    const double r2 = static_cast<double>(r * r);
    for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            if (dy * dy + dx * dx <= r2) m[static_cast<size_t>(y * size + x)] = 1.0f;
        }
}

// Stroke geometry is in desk-scale pixels at 64 px and scales linearly with size.
std::vector<float> draw_strokes(Rng& rng, int64_t size) {
    std::vector<float> m(static_cast<size_t>(size * size), 0.0f);
    const auto limit = static_cast<double>(size - 1);
    const double scale = static_cast<double>(size) / 64.0;
    const int64_t walks = rng.uniform_int(1, 6);
    for (int64_t wk = 0; wk < walks; ++wk) {
        double y = rng.uniform(0, limit), x = rng.uniform(0, limit);
        double angle = rng.uniform(0, 2 * std::numbers::pi);
        const int64_t steps = rng.uniform_int(10, 60);
        const auto radius = std::max<int64_t>(1, std::lround(static_cast<double>(rng.uniform_int(2, 9)) * scale));
        for (int64_t s = 0; s < steps; ++s) {
            angle += rng.uniform(-std::numbers::pi / 4, std::numbers::pi / 4);
            const double len = rng.uniform(4, 12) * scale;
            const double ny = std::clamp(y + len * std::sin(angle), 0.0, limit);
            const double nx = std::clamp(x + len * std::cos(angle), 0.0, limit);
            const int n = static_cast<int>(std::ceil(len)) + 1;
            for (int k = 0; k <= n; ++k) {
                const double t = static_cast<double>(k) / n;
                stamp_disk(m, size, y + t * (ny - y), x + t * (nx - x), radius);
            }
            y = ny;
            x = nx;
        }
    }
    return m;
}

}  // namespace

Tensor<float> generate_irregular_mask(const MaskSpec& spec, int64_t size) {
    if (size < 1) throw std::invalid_argument("mask size must be positive");
    const Rng base(spec.seed, "irregular-mask/" + spec.bin() + "/" + std::to_string(size));
    for (uint64_t attempt = 0; attempt < 100; ++attempt) {
        Rng rng = base.split(attempt);
        auto m = draw_strokes(rng, size);
        Tensor<float> t({1, size, size}, std::move(m));
        if (spec.contains(mask_ratio(t))) return t;
    }
    throw std::runtime_error("no mask in bin " + spec.bin() + " after 100 attempts (size " + std::to_string(size) + ")");
}

double mask_ratio(const Tensor<float>& mask) {
    double s = 0;
    for (float v : mask.data()) s += v;
    return s / static_cast<double>(mask.numel());
}

Tensor<float> structure_target(const Tensor<float>& img, int iterations) {
    if (img.rank() != 3) throw std::invalid_argument("structure_target: expected [C,H,W]");
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2), hw = h * w;
    constexpr int r = 2;
    constexpr double sigma_s = 2.0, sigma_r = 0.1;
    double spatial[2 * r + 1][2 * r + 1];
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) spatial[dy + r][dx + r] = std::exp(-(dy * dy + dx * dx) / (2 * sigma_s * sigma_s));
    std::vector<double> cur(img.data().begin(), img.data().end()), next(cur.size());
    std::vector<double> acc(static_cast<size_t>(c));
    for (int it = 0; it < iterations; ++it) {
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const int64_t p = y * w + x;
                double wsum = 0;
                std::fill(acc.begin(), acc.end(), 0.0);
                for (int dy = -r; dy <= r; ++dy) {
                    const int64_t yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int64_t xx = x + dx;
                        if (xx < 0 || xx >= w) continue;
                        const int64_t q = yy * w + xx;
                        double d2 = 0;
                        for (int64_t ch = 0; ch < c; ++ch) {
                            const double d = cur[static_cast<size_t>(ch * hw + p)] - cur[static_cast<size_t>(ch * hw + q)];
                            d2 += d * d;
                        }
                        const double wt = spatial[dy + r][dx + r] * std::exp(-d2 / (2 * sigma_r * sigma_r));
                        wsum += wt;
                        for (int64_t ch = 0; ch < c; ++ch)
                            acc[static_cast<size_t>(ch)] += wt * cur[static_cast<size_t>(ch * hw + q)];
                    }
                }
                for (int64_t ch = 0; ch < c; ++ch)
                    next[static_cast<size_t>(ch * hw + p)] = acc[static_cast<size_t>(ch)] / wsum;
            }
        std::swap(cur, next);
    }
    std::vector<float> out(cur.size());
    for (size_t i = 0; i < cur.size(); ++i) out[i] = static_cast<float>(cur[i]);
    return Tensor<float>(img.shape(), std::move(out));
}

Tensor<float> hflip(const Tensor<float>& x) {
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<float> v(static_cast<size_t>(x.numel()));
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) v[static_cast<size_t>((ch * h + y) * w + xx)] = x[(ch * h + y) * w + (w - 1 - xx)];
    return Tensor<float>(x.shape(), std::move(v));
}

std::vector<std::string> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Tensor<float> synthetic_texture(Rng& rng, int64_t size) {
    uint8_t colors[2][3];
    do {
        for (auto& col : colors)
            for (auto& ch : col) ch = static_cast<uint8_t>(rng.uniform_int(0, 255));
    } while (std::abs(int{colors[0][0]} - colors[1][0]) + std::abs(int{colors[0][1]} - colors[1][1]) +
                 std::abs(int{colors[0][2]} - colors[1][2]) <
             120);
    const int64_t kind = rng.uniform_int(0, 3);
    const int64_t period = rng.uniform_int(6, 16);
    const int64_t phase = rng.uniform_int(0, period - 1);
    RawImage img;
    img.width = img.height = size;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(size * size * 3));
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            int64_t u = 0;
            switch (kind) {
                case 0: u = (x + phase) / (period / 2); break;
                case 1: u = (y + phase) / (period / 2); break;
                case 2: u = (x + y + phase) / (period / 2); break;
                default: u = (x + phase) / (period / 2) + (y + phase) / (period / 2); break;
            }
            const auto& col = colors[u % 2];
            for (int ch = 0; ch < 3; ++ch) img.pixels[static_cast<size_t>((y * size + x) * 3 + ch)] = col[ch];
        }
    return image_to_tensor(img);
}

std::vector<std::string> write_synthetic_set(const std::string& dir, int count, int64_t size, uint64_t seed) {
    fs::create_directories(dir);
    const Rng base(seed, "synthetic-set");
    std::vector<std::string> paths;
    for (int i = 0; i < count; ++i) {
        Rng rng = base.split(static_cast<uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof name, "tex_%04d.png", i);
        const auto path = (fs::path(dir) / name).string();
        save_image(path, synthetic_texture(rng, size));
        paths.push_back(path);
    }
    return paths;
}

}  // namespace bapf
