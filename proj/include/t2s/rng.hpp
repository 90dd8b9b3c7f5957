#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace t2s {

// Deterministic RNG utilities. The engine is std::mt19937_64 (its output
// stream is fixed by the standard); the distributions are hand-rolled so
// that values are bit-identical across standard-library implementations.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Combine a seed with stream labels into a fresh engine seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(seed ^ 0xd1b54a32d192ed03ULL) + splitmix64(a) * 3 + b);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view label, std::uint64_t b = 0) {
    return mix_seed(seed, hash_str(label), b);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_double(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_double(rng);
}

// Unbiased integer in [0, n) via rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

// Standard normal via Box-Muller (cacheless; two uniforms per draw).
inline double normal(Rng& rng) {
    double u1 = uniform_double(rng);
    double u2 = uniform_double(rng);
    while (u1 <= 0.0) u1 = uniform_double(rng);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

inline double normal(Rng& rng, double mean, double stddev) {
    return mean + stddev * normal(rng);
}

}  // namespace t2s
