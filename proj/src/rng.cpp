#include "bapf/rng.hpp"

#include <cmath>
#include <numbers>

namespace bapf {

namespace {

uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

Rng::Rng(uint64_t seed, std::string_view purpose) : key_(mix64(mix64(seed) ^ fnv1a(purpose))) {}

Rng Rng::split(std::string_view purpose) const { return Rng(mix64(key_ ^ fnv1a(purpose))); }

Rng Rng::split(uint64_t index) const { return Rng(mix64(key_ + 0x9e3779b97f4a7c15ULL * (index + 1))); }

uint64_t Rng::next_u64() {
    const uint64_t i = counter_++;
    return mix64(key_ ^ mix64(i * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
}

double Rng::normal() {
    // Box-Muller, one variate per pair of uniforms.
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace bapf
