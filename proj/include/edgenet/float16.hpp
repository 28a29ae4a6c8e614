#pragma once

#include <bit>
#include <cstdint>

namespace edgenet {

// IEEE-754 binary16 <-> binary32 conversion.
//
// float16 is a storage format in this codebase: tensors are widened to f32
// before any arithmetic. Conversion rounds to nearest-even and handles
// subnormals, infinities and NaN payloads explicitly so that the mapping is
// identical on every platform regardless of FPU mode.

inline uint16_t f32_to_f16(float f) {
    const uint32_t x = std::bit_cast<uint32_t>(f);
    const uint32_t sign = (x >> 16) & 0x8000u;
    const uint32_t absx = x & 0x7fffffffu;

    if (absx >= 0x7f800000u) {
        if (absx == 0x7f800000u) return static_cast<uint16_t>(sign | 0x7c00u); // inf
        // NaN: keep the top payload bits, force the quiet bit so the result
        // cannot collapse to infinity.
        return static_cast<uint16_t>(sign | 0x7c00u | 0x0200u | ((absx >> 13) & 0x3ffu));
    }

    int32_t e = static_cast<int32_t>(absx >> 23) - 127 + 15;
    uint32_t m = absx & 0x7fffffu;

    if (e >= 31) return static_cast<uint16_t>(sign | 0x7c00u); // overflow -> inf

    if (e <= 0) {
        if (e < -10) return static_cast<uint16_t>(sign); // underflow -> signed zero
        m |= 0x800000u;                                  // make leading 1 explicit
        const uint32_t shift = static_cast<uint32_t>(14 - e);
        uint32_t q = m >> shift;
        const uint32_t rem = m & ((1u << shift) - 1u);
        const uint32_t half = 1u << (shift - 1u);
        if (rem > half || (rem == half && (q & 1u))) ++q;
        return static_cast<uint16_t>(sign | q);
    }

    uint32_t q = (static_cast<uint32_t>(e) << 10) | (m >> 13);
    const uint32_t rem = m & 0x1fffu;
    // Ties to even; a carry out of the mantissa correctly bumps the exponent
    // (and produces inf from values just above the largest finite half).
    if (rem > 0x1000u || (rem == 0x1000u && (q & 1u))) ++q;
    return static_cast<uint16_t>(sign | q);
}

inline float f16_to_f32(uint16_t h) {
    const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
    const uint32_t e = (h >> 10) & 0x1fu;
    uint32_t m = h & 0x3ffu;

    uint32_t bits;
    if (e == 0) {
        if (m == 0) {
            bits = sign;
        } else {
            // Subnormal half: renormalize into the f32 exponent range.
            uint32_t shift = 0;
            while (!(m & 0x400u)) {
                m <<= 1;
                ++shift;
            }
            m &= 0x3ffu;
            bits = sign | ((113u - shift) << 23) | (m << 13);
        }
    } else if (e == 31) {
        bits = sign | 0x7f800000u | (m << 13);
    } else {
        bits = sign | ((e + 112u) << 23) | (m << 13);
    }
    return std::bit_cast<float>(bits);
}

} // namespace edgenet
