#include "verinf/sign.hpp"

#include <sodium.h>

#include <mutex>
#include <stdexcept>

namespace verinf::sign {

namespace {
void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}
}  // namespace

Ed25519Signer Ed25519Signer::from_seed(const Hash32& seed) {
    ensure_sodium();
    Ed25519Signer s;
    s.public_.resize(crypto_sign_PUBLICKEYBYTES);
    s.secret_.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_seed_keypair(s.public_.data(), s.secret_.data(), seed.data());
    return s;
}

Bytes Ed25519Signer::sign(std::span<const uint8_t> message) const {
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_.data());
    return sig;
}

Bytes Ed25519Signer::public_key() const { return public_; }

bool verify(std::span<const uint8_t> public_key, std::span<const uint8_t> message,
            std::span<const uint8_t> signature) {
    ensure_sodium();
    if (public_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) {
        return false;
    }
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                       public_key.data()) == 0;
}

}  // namespace verinf::sign
