#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hsd::rng {

using Engine = std::mt19937_64;

// Unbiased draw in [0, n) via rejection sampling. std::uniform_int_distribution
// is implementation-defined, so anything that must reproduce across toolchains
// goes through here.
inline std::uint64_t uniform_u64(Engine& eng, std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Engine& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(eng);
}

// Fisher-Yates with the deterministic draw above.
template <typename T>
void shuffle(std::vector<T>& v, Engine& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_u64(eng, i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer; used to derive independent seeds.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return mix(a ^ mix(b));
}

} // namespace hsd::rng
