#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace stylevec {

enum class Dtype : std::uint8_t { F32, F16, BF16 };

constexpr std::size_t byte_width(Dtype dtype) noexcept {
    return dtype == Dtype::F32 ? 4 : 2;
}

std::string_view dtype_name(Dtype dtype) noexcept;
std::optional<Dtype> parse_dtype(std::string_view name) noexcept;

// Scalar conversions. Narrowing uses round-to-nearest-even and saturates to
// infinity on overflow; NaN stays NaN (quiet).

float half_bits_to_float(std::uint16_t bits) noexcept;
std::uint16_t float_to_half_bits(float value) noexcept;

inline float bf16_bits_to_float(std::uint16_t bits) noexcept {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

inline std::uint16_t float_to_bf16_bits(float value) noexcept {
    auto u = std::bit_cast<std::uint32_t>(value);
    if ((u & 0x7fffffffu) > 0x7f800000u) {
        return static_cast<std::uint16_t>((u >> 16) | 0x0040u);
    }
    u += 0x7fffu + ((u >> 16) & 1u);
    return static_cast<std::uint16_t>(u >> 16);
}

/// Rounds an f32 value to the nearest value representable in `dtype`.
float round_to(Dtype dtype, float value) noexcept;

} // namespace stylevec
