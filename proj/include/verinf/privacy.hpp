#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "verinf/bytes.hpp"
#include "verinf/sign.hpp"

// Threshold KMS, mock enclaves, and hybrid payload encryption.
//
// The application decryption key is split byte-wise with Shamir over GF(256)
// across n shards; any t shares reconstruct it, fewer reveal nothing. Shards
// release shares only to enclaves presenting a fresh, root-signed attestation
// quote over an approved measurement, and only for the active key epoch.
// Reconstruction happens inside an EnclaveContext and is zeroized afterward.

namespace verinf::privacy {

using Nonce = std::array<uint8_t, 16>;

// ---- Shamir sharing over GF(256) ----

struct KeyShare {
    uint8_t shard_id = 0;  // 1..n
    uint8_t x = 0;         // evaluation point, equals shard_id
    Bytes y;               // one share byte per secret byte
    uint32_t epoch = 0;
};

// Random degree-(t-1) polynomials per secret byte, evaluated at x = 1..n.
// Requires 1 <= t <= n <= 255. Throws std::invalid_argument otherwise.
std::vector<KeyShare> split_key(std::span<const uint8_t> secret, uint32_t t, uint32_t n,
                                uint64_t rng_seed, uint32_t epoch = 0);

// Lagrange interpolation at x = 0 across the given shares. Pure field math:
// it does not know the threshold, so callers must enforce share count and
// epoch consistency (reconstruct_in_enclave does).
Bytes interpolate_at_zero(std::span<const KeyShare> shares);

// ---- taint tracking (visibility matrix) ----

enum class AccessRole : uint8_t {
    client,
    operator_node,
    da_store,
    kms_shard,
    enclave,
    verifier,
    watcher,
    external_auditor,
};

enum class DataLabel : uint8_t { plaintext, ciphertext, commitment };

const char* role_name(AccessRole role);

// Records which roles observed which data labels. Plaintext is permitted only
// to client and enclave; everything else is a violation.
class TaintLog {
public:
    void observe(AccessRole role, DataLabel label);
    size_t violations() const { return violations_; }
    size_t observations() const { return entries_.size(); }
    const std::vector<std::pair<AccessRole, DataLabel>>& entries() const { return entries_; }
    void reset();

    static bool plaintext_allowed(AccessRole role) {
        return role == AccessRole::client || role == AccessRole::enclave;
    }

private:
    std::vector<std::pair<AccessRole, DataLabel>> entries_;
    size_t violations_ = 0;
};

// ---- attestation ----

struct AttestationQuote {
    Hash32 measurement{};  // hash of container digest + code version
    Nonce nonce{};
    uint64_t issued_at = 0;  // simulator epoch
    Bytes hw_sig;

    Bytes canonical_body() const;
};

// Stand-in for the hardware vendor: a single signing key all quotes chain to.
class AttestationRoot {
public:
    explicit AttestationRoot(const Hash32& seed);

    AttestationQuote issue(const Hash32& measurement, const Nonce& nonce, uint64_t now) const;
    bool verify_signature(const AttestationQuote& quote) const;
    Bytes public_key() const { return signer_.public_key(); }

private:
    sign::Ed25519Signer signer_;
};

Hash32 measurement_of(const Hash32& container_digest, std::string_view code_version);

// Opaque wire form of a quote (as embedded in receipts).
Bytes encode_quote(const AttestationQuote& quote);
std::optional<AttestationQuote> decode_quote(std::span<const uint8_t> bytes);

// ---- hybrid payload encryption ----

// X25519 sealed box over the framed pair [len req][req][len out][out].
// Tampering with any ciphertext byte makes decryption fail outright.
Bytes encrypt_payload(std::span<const uint8_t> recipient_public_key,
                      std::span<const uint8_t> req_bytes, std::span<const uint8_t> out_bytes);

// ---- key epochs and the shard network ----

enum class EpochStatus : uint8_t { active, retired };

struct DenialReason {
    enum class Kind { signature, identity, freshness, replay, epoch, threshold } kind;
    std::string detail;
};

using ShareResponse = std::variant<KeyShare, DenialReason>;

struct KmsPolicy {
    uint32_t threshold = 2;        // t
    uint32_t shard_count = 3;      // n
    uint64_t freshness_window = 2;  // max quote age in epochs
    std::vector<Hash32> approved_measurements;
};

class EnclaveContext;

// The shard network plus epoch table. Shards are modeled as independently
// addressed slots inside one object; each keeps its own seen-nonce set, so a
// quote nonce can be presented to every shard once.
class Kms {
public:
    Kms(KmsPolicy policy, const AttestationRoot* root, uint64_t rng_seed);

    uint32_t active_epoch() const { return active_epoch_; }
    EpochStatus epoch_status(uint32_t epoch) const;
    bool epoch_known(uint32_t epoch) const { return epochs_.count(epoch) != 0; }
    Bytes epoch_public_key(uint32_t epoch) const;

    // Attestation-gated release from one shard. All checks must pass:
    // root signature, approved measurement, freshness, per-shard nonce
    // single-use, and an active epoch.
    ShareResponse release_share(uint32_t shard_id, const AttestationQuote& quote, uint32_t epoch,
                                uint64_t now);

    // Convenience: request the first `count` shards (what an enclave does
    // during a verification session). Stops at the first denial.
    std::variant<std::vector<KeyShare>, DenialReason> collect_shares(const AttestationQuote& quote,
                                                                     uint32_t epoch, uint64_t now,
                                                                     uint32_t count);

    // Governance-approved rotation: fresh keypair, fresh shares, previous
    // epoch retired. Returns the new epoch id, or nullopt without approval.
    std::optional<uint32_t> rotate_epoch(bool governance_approval);

    const KmsPolicy& policy() const { return policy_; }

private:
    struct Epoch {
        EpochStatus status = EpochStatus::active;
        Bytes public_key;
        std::vector<KeyShare> shares;  // indexed shard_id-1
    };

    void create_epoch();

    KmsPolicy policy_;
    const AttestationRoot* root_;
    uint64_t rng_state_;
    uint32_t active_epoch_ = 0;
    std::map<uint32_t, Epoch> epochs_;
    std::vector<std::set<Nonce>> seen_nonces_;  // per shard
};

// ---- enclave context ----

// A single verification session. The reconstructed key exists only inside
// this object between reconstruct() and zeroize(); the destructor zeroizes.
class EnclaveContext {
public:
    // "Boots" the enclave: computes the quote for this session.
    EnclaveContext(const Hash32& measurement, const AttestationRoot& root, const Nonce& nonce,
                   uint64_t now, TaintLog* taint = nullptr);
    ~EnclaveContext();

    EnclaveContext(const EnclaveContext&) = delete;
    EnclaveContext& operator=(const EnclaveContext&) = delete;

    const AttestationQuote& quote() const { return quote_; }
    const Hash32& measurement() const { return measurement_; }

    // Requires >= expected_threshold shares, all from one epoch, distinct x.
    // Returns empty on success, otherwise a diagnostic.
    std::string reconstruct(std::span<const KeyShare> shares, uint32_t expected_threshold);

    bool has_key() const { return !secret_key_.empty(); }
    uint32_t key_epoch() const { return key_epoch_; }

    // Opens a sealed payload with the reconstructed key. Returns nullopt on
    // authentication failure. Records a plaintext observation for the
    // enclave role on success.
    std::optional<std::pair<Bytes, Bytes>> decrypt_payload(std::span<const uint8_t> ciphertext);

    // Overwrites and discards all key material.
    void zeroize();

private:
    Hash32 measurement_{};
    AttestationQuote quote_{};
    TaintLog* taint_ = nullptr;
    Bytes secret_key_;
    Bytes public_key_;
    uint32_t key_epoch_ = 0;
};

// Decryption attempted by a role outside an enclave context: always recorded
// as a taint observation for that role; succeeds only if the caller actually
// has the secret key bytes (used in adversarial/what-if scenarios).
std::optional<std::pair<Bytes, Bytes>> decrypt_outside_enclave(std::span<const uint8_t> secret_key,
                                                               std::span<const uint8_t> public_key,
                                                               std::span<const uint8_t> ciphertext,
                                                               AccessRole role, TaintLog* taint);

}  // namespace verinf::privacy
