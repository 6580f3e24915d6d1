#include "bapf/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace bapf {

Adam::Adam(AdamConfig cfg, std::vector<std::string> names) : cfg_(cfg), names_(std::move(names)) {
    if (!(cfg_.lr > 0) || cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1 || !(cfg_.eps > 0)) {
        throw std::invalid_argument("invalid Adam hyperparameters");
    }
}

void Adam::step(ModelParams<float>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& name : names_) {
        auto& p = params.at(name);
        if (!p.has_grad()) continue;
        const auto g = p.grad();
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(g.size(), 0.0);
            v.assign(g.size(), 0.0);
        }
        auto data = p.mutable_data();
        for (size_t i = 0; i < g.size(); ++i) {
            const double gi = g[i];
            m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
            const double update = cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
            data[i] = static_cast<float>(data[i] - update);
        }
    }
}

void Adam::zero_grad(ModelParams<float>& params) const {
    for (const auto& name : names_) params.at(name).zero_grad();
}

namespace {

void put_u64(std::ostream& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64(std::istream& in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw std::runtime_error("optimizer state truncated");
        v |= static_cast<uint64_t>(c & 0xff) << (8 * i);
    }
    return v;
}

}  // namespace

// "BAPO", u64 step, u64 entry count, then per entry: u64 name length, name,
// u64 size, size doubles of m then size doubles of v.
void Adam::save(std::ostream& out) const {
    out.write("BAPO", 4);
    put_u64(out, static_cast<uint64_t>(t_));
    put_u64(out, m_.size());
    for (const auto& [name, m] : m_) {
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, m.size());
        for (double x : m) put_u64(out, std::bit_cast<uint64_t>(x));
        for (double x : v_.at(name)) put_u64(out, std::bit_cast<uint64_t>(x));
    }
    if (!out) throw std::runtime_error("optimizer state write failed");
}

void Adam::load(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "BAPO", 4) != 0) throw std::runtime_error("not an optimizer state file");
    t_ = static_cast<int64_t>(get_u64(in));
    const uint64_t n = get_u64(in);
    m_.clear();
    v_.clear();
    for (uint64_t k = 0; k < n; ++k) {
        std::string name(get_u64(in), '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw std::runtime_error("optimizer state truncated");
        const uint64_t size = get_u64(in);
        auto& m = m_[name];
        auto& v = v_[name];
        m.resize(size);
        v.resize(size);
        for (auto& x : m) x = std::bit_cast<double>(get_u64(in));
        for (auto& x : v) x = std::bit_cast<double>(get_u64(in));
    }
}

}  // namespace bapf
