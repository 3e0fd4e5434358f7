#include "stylevec/dtype.hpp"

namespace stylevec {

std::string_view dtype_name(Dtype dtype) noexcept {
    switch (dtype) {
    case Dtype::F32: return "F32";
    case Dtype::F16: return "F16";
    case Dtype::BF16: return "BF16";
    }
    return "?";
}

std::optional<Dtype> parse_dtype(std::string_view name) noexcept {
    if (name == "F32") return Dtype::F32;
    if (name == "F16") return Dtype::F16;
    if (name == "BF16") return Dtype::BF16;
    return std::nullopt;
}

float half_bits_to_float(std::uint16_t h) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t out;
    if (exp == 0) {
        if (mant == 0) {
            out = sign;
        } else {
            // subnormal: renormalize
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while ((mant & 0x400u) == 0);
            out = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 0x1f) {
        out = sign | 0x7f800000u | (mant << 13);
    } else {
        out = sign | ((exp + (127 - 15)) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(out);
}

std::uint16_t float_to_half_bits(float value) noexcept {
    const auto u = std::bit_cast<std::uint32_t>(value);
    const auto sign = static_cast<std::uint16_t>((u >> 16) & 0x8000u);
    const std::uint32_t abs = u & 0x7fffffffu;

    if (abs > 0x7f800000u) {
        return static_cast<std::uint16_t>(sign | 0x7e00u | ((abs >> 13) & 0x3ffu));
    }
    if (abs >= 0x477ff000u) {
        // >= 65520 rounds past the largest finite half (65504)
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }
    if (abs < 0x38800000u) {
        // result is subnormal or zero in half precision
        if (abs < 0x33000000u) {
            return sign; // below half of the smallest subnormal
        }
        const std::uint32_t exp = abs >> 23;
        const std::uint32_t mant = (abs & 0x7fffffu) | 0x800000u;
        const std::uint32_t shift = 126 - exp; // 14 + (113 - exp - 1) + 1
        std::uint32_t result = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (result & 1u))) {
            ++result;
        }
        return static_cast<std::uint16_t>(sign | result);
    }
    // normal range: rebias exponent and round the 13 dropped mantissa bits
    std::uint32_t result = ((abs >> 23) - 112) << 10 | ((abs >> 13) & 0x3ffu);
    const std::uint32_t rem = abs & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (result & 1u))) {
        ++result;
    }
    return static_cast<std::uint16_t>(sign | result);
}

float round_to(Dtype dtype, float value) noexcept {
    switch (dtype) {
    case Dtype::F32: return value;
    case Dtype::F16: return half_bits_to_float(float_to_half_bits(value));
    case Dtype::BF16: return bf16_bits_to_float(float_to_bf16_bits(value));
    }
    return value;
}

} // namespace stylevec
