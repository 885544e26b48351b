#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dsakv::detail {

// Stateless counter-based draws: every value is a pure function of its key, so the
// generator's output does not depend on evaluation order or threading.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
    shared_key = 1,
    layer_key = 2,
    shared_query = 3,
    layer_query = 4,
    anchor = 5,
    head_weight = 6,
    shared_span_key = 7,
    layer_span_key = 8,
};

constexpr std::uint64_t counter_hash(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b,
                                     std::uint64_t c) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

/// Uniform in (0, 1].
inline double counter_uniform(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return (static_cast<double>(counter_hash(seed, stream, a, b, c) >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two keyed uniforms.
inline double counter_normal(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    const double u1 = counter_uniform(seed, stream, a, b, 2 * c);
    const double u2 = counter_uniform(seed, stream, a, b, 2 * c + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dsakv::detail
