#pragma once

#include "verinf/bytes.hpp"

namespace verinf {

// SHA-256 digest (libsodium-backed).
Hash32 sha256(std::span<const uint8_t> data);

inline Hash32 sha256(const Bytes& data) {
    return sha256(std::span<const uint8_t>(data.data(), data.size()));
}

}  // namespace verinf
