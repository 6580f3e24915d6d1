#include "bapf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace bapf {

namespace {

constexpr char kMagic[4] = {'B', 'A', 'P', 'F'};
constexpr uint8_t kVersion = 1;

template <typename U>
void put(std::ostream& out, U v) {
    char b[sizeof(U)];
    for (size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
    out.write(b, sizeof(U));
}

template <typename U>
U get(std::istream& in, const char* what) {
    unsigned char b[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw std::runtime_error(std::string("checkpoint truncated in ") + what);
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return static_cast<U>(v);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams<float>& params) {
    out.write(kMagic, 4);
    put<uint8_t>(out, kVersion);
    put<uint8_t>(out, static_cast<uint8_t>(params.stage()));
    if (params.size() > std::numeric_limits<uint32_t>::max()) throw std::invalid_argument("too many tensors for a checkpoint");
    put<uint32_t>(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params.entries()) {
        if (name.size() > std::numeric_limits<uint16_t>::max()) throw std::invalid_argument("parameter name too long");
        if (t.rank() > 255) throw std::invalid_argument("tensor rank too large for a checkpoint");
        put<uint16_t>(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<uint8_t>(out, static_cast<uint8_t>(t.rank()));
        for (int64_t d : t.shape()) {
            if (d > std::numeric_limits<uint32_t>::max()) throw std::invalid_argument("tensor extent too large");
            put<uint32_t>(out, static_cast<uint32_t>(d));
        }
        for (float v : t.data()) put<uint32_t>(out, std::bit_cast<uint32_t>(v));
    }
    if (!out) throw std::runtime_error("checkpoint write failed");
}

ModelParams<float> read_checkpoint(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a checkpoint (bad magic)");
    const auto version = get<uint8_t>(in, "header");
    if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto stage = get<uint8_t>(in, "header");
    if (stage > 1) throw std::runtime_error("unknown stage tag " + std::to_string(stage));
    ModelParams<float> params(static_cast<Stage>(stage));
    const auto count = get<uint32_t>(in, "header");
    for (uint32_t k = 0; k < count; ++k) {
        const auto len = get<uint16_t>(in, "name");
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw std::runtime_error("checkpoint truncated in name");
        if (params.contains(name)) throw std::runtime_error("duplicate tensor '" + name + "' in checkpoint");
        const auto rank = get<uint8_t>(in, "shape");
        Shape shape;
        for (uint8_t i = 0; i < rank; ++i) shape.push_back(get<uint32_t>(in, "shape"));
        std::vector<float> values(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : values) v = std::bit_cast<float>(get<uint32_t>(in, "values"));
        params.set(name, Tensor<float>(shape, std::move(values)));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes after checkpoint");
    return params;
}

void save_checkpoint(const std::string& path, const ModelParams<float>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    write_checkpoint(out, params);
}

ModelParams<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    return read_checkpoint(in);
}

}  // namespace bapf
