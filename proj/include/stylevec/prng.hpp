#pragma once

#include <cstdint>
#include <string_view>

namespace stylevec {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// 64-bit FNV-1a, used to derive per-tensor stream ids from key names.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Counter-based generator: draw n of stream (seed, stream) is
///   mix64(key + (n + 1) * 0x9e3779b97f4a7c15), key = mix64(seed ^ mix64(stream)).
/// Any draw can be computed independently of the others, and the sequence
/// is fixed across platforms. Gaussians come from the Box-Muller transform,
/// two per pair of uniforms.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept : key_(mix64(seed ^ mix64(stream))) {}

    std::uint64_t next() noexcept { return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double gaussian() noexcept;

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace stylevec
