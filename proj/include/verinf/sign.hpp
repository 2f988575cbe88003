#pragma once

#include <memory>

#include "verinf/bytes.hpp"

namespace verinf::sign {

// Detached-signature signer. Ed25519 via libsodium: deterministic signatures,
// so a receipt re-signed over the same body is byte-identical.
class Signer {
public:
    virtual ~Signer() = default;
    virtual Bytes sign(std::span<const uint8_t> message) const = 0;
    virtual Bytes public_key() const = 0;
};

class Ed25519Signer final : public Signer {
public:
    // 32-byte seed; the same seed always yields the same keypair.
    static Ed25519Signer from_seed(const Hash32& seed);

    Bytes sign(std::span<const uint8_t> message) const override;
    Bytes public_key() const override;

private:
    Ed25519Signer() = default;
    Bytes secret_;  // 64-byte expanded secret key
    Bytes public_;
};

bool verify(std::span<const uint8_t> public_key, std::span<const uint8_t> message,
            std::span<const uint8_t> signature);

}  // namespace verinf::sign
