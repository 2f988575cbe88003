#include "verinf/sha256.hpp"

#include <sodium.h>

#include <mutex>

namespace verinf {

namespace {
void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}
}  // namespace

Hash32 sha256(std::span<const uint8_t> data) {
    ensure_sodium();
    Hash32 out;
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

}  // namespace verinf
