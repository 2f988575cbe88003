#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace verinf {

using Bytes = std::vector<uint8_t>;
using Hash32 = std::array<uint8_t, 32>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(std::span<const uint8_t> b) {
    return std::string(b.begin(), b.end());
}

// ---- fixed-width integer packing (big-endian; canonical encodings) ----

inline void put_be32(Bytes& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

inline void put_be64(Bytes& out, uint64_t v) {
    put_be32(out, uint32_t(v >> 32));
    put_be32(out, uint32_t(v));
}

inline uint32_t load_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline uint64_t load_be64(const uint8_t* p) {
    return (uint64_t(load_be32(p)) << 32) | load_be32(p + 4);
}

// ---- little-endian packing (detcore canonical output layout) ----

inline void put_le32(Bytes& out, uint32_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 24));
}

inline uint32_t load_le32(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

inline uint32_t f32_bits(float f) {
    uint32_t u;
    std::memcpy(&u, &f, sizeof(u));
    return u;
}

inline float f32_from_bits(uint32_t u) {
    float f;
    std::memcpy(&f, &u, sizeof(f));
    return f;
}

// ---- hex ----

std::string hex_encode(std::span<const uint8_t> data);
std::optional<Bytes> hex_decode(std::string_view hex);
std::string hex32(const Hash32& h);
std::optional<Hash32> hash32_from_hex(std::string_view hex);

// ---- base64 (RFC 4648, with padding) ----

std::string base64_encode(std::span<const uint8_t> data);
std::optional<Bytes> base64_decode(std::string_view text);

}  // namespace verinf
