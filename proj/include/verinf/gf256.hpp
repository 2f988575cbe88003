#pragma once

#include <cstdint>

// GF(2^8) arithmetic with the AES reduction polynomial x^8+x^4+x^3+x+1
// (0x11B). Addition is XOR; multiplication is carry-less with reduction.

namespace verinf::gf256 {

inline uint8_t mul(uint8_t a, uint8_t b) {
    uint8_t p = 0;
    while (b != 0) {
        if (b & 1) p ^= a;
        uint8_t hi = a & 0x80;
        a = uint8_t(a << 1);
        if (hi) a ^= 0x1B;
        b >>= 1;
    }
    return p;
}

inline uint8_t pow(uint8_t a, unsigned e) {
    uint8_t r = 1;
    while (e != 0) {
        if (e & 1) r = mul(r, a);
        a = mul(a, a);
        e >>= 1;
    }
    return r;
}

// Multiplicative inverse via a^254; a must be nonzero.
inline uint8_t inv(uint8_t a) { return pow(a, 254); }

}  // namespace verinf::gf256
