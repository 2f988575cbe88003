#include "verinf/privacy.hpp"

#include <sodium.h>

#include <algorithm>
#include <mutex>
#include <set>
#include <stdexcept>

#include "verinf/codec.hpp"
#include "verinf/gf256.hpp"
#include "verinf/prng.hpp"
#include "verinf/sha256.hpp"

namespace verinf::privacy {

namespace {
void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}
}  // namespace

// ---- Shamir ----

std::vector<KeyShare> split_key(std::span<const uint8_t> secret, uint32_t t, uint32_t n,
                                uint64_t rng_seed, uint32_t epoch) {
    if (t < 1 || t > n) throw std::invalid_argument("split_key: need 1 <= t <= n");
    if (n > 255) throw std::invalid_argument("split_key: n exceeds field capacity");

    detcore::PrngState prng = detcore::PrngState::seeded(rng_seed);
    std::vector<KeyShare> shares(n);
    for (uint32_t s = 0; s < n; ++s) {
        shares[s].shard_id = uint8_t(s + 1);
        shares[s].x = uint8_t(s + 1);
        shares[s].epoch = epoch;
        shares[s].y.resize(secret.size());
    }

    std::vector<uint8_t> coeffs(t);  // coeffs[0] = secret byte, rest random
    for (size_t byte = 0; byte < secret.size(); ++byte) {
        coeffs[0] = secret[byte];
        for (uint32_t d = 1; d < t; ++d) coeffs[d] = uint8_t(prng.next_below(256));
        for (uint32_t s = 0; s < n; ++s) {
            uint8_t x = shares[s].x;
            // Horner evaluation of the degree-(t-1) polynomial at x.
            uint8_t acc = 0;
            for (uint32_t d = t; d-- > 0;) acc = uint8_t(gf256::mul(acc, x) ^ coeffs[d]);
            shares[s].y[byte] = acc;
        }
    }
    return shares;
}

Bytes interpolate_at_zero(std::span<const KeyShare> shares) {
    if (shares.empty()) throw std::invalid_argument("interpolate: no shares");
    size_t len = shares[0].y.size();
    for (const auto& s : shares) {
        if (s.x == 0) throw std::invalid_argument("interpolate: share at x=0");
        if (s.y.size() != len) throw std::invalid_argument("interpolate: length mismatch");
    }
    // lambda_j = prod_{m != j} x_m / (x_m + x_j)   (GF(256): subtraction is XOR)
    std::vector<uint8_t> lambda(shares.size());
    for (size_t j = 0; j < shares.size(); ++j) {
        uint8_t num = 1, den = 1;
        for (size_t m = 0; m < shares.size(); ++m) {
            if (m == j) continue;
            if (shares[m].x == shares[j].x) {
                throw std::invalid_argument("interpolate: duplicate evaluation point");
            }
            num = gf256::mul(num, shares[m].x);
            den = gf256::mul(den, uint8_t(shares[m].x ^ shares[j].x));
        }
        lambda[j] = gf256::mul(num, gf256::inv(den));
    }
    Bytes secret(len, 0);
    for (size_t byte = 0; byte < len; ++byte) {
        uint8_t acc = 0;
        for (size_t j = 0; j < shares.size(); ++j) {
            acc ^= gf256::mul(lambda[j], shares[j].y[byte]);
        }
        secret[byte] = acc;
    }
    return secret;
}

// ---- taint ----

const char* role_name(AccessRole role) {
    switch (role) {
        case AccessRole::client: return "client";
        case AccessRole::operator_node: return "operator";
        case AccessRole::da_store: return "da_store";
        case AccessRole::kms_shard: return "kms_shard";
        case AccessRole::enclave: return "enclave";
        case AccessRole::verifier: return "verifier";
        case AccessRole::watcher: return "watcher";
        case AccessRole::external_auditor: return "external_auditor";
    }
    return "unknown";
}

void TaintLog::observe(AccessRole role, DataLabel label) {
    entries_.emplace_back(role, label);
    if (label == DataLabel::plaintext && !plaintext_allowed(role)) ++violations_;
}

void TaintLog::reset() {
    entries_.clear();
    violations_ = 0;
}

// ---- attestation ----

Bytes AttestationQuote::canonical_body() const {
    codec::Writer w;
    w.hash(measurement);
    w.blob(std::span<const uint8_t>(nonce.data(), nonce.size()));
    w.u64(issued_at);
    return w.take();
}

AttestationRoot::AttestationRoot(const Hash32& seed)
    : signer_(sign::Ed25519Signer::from_seed(seed)) {}

AttestationQuote AttestationRoot::issue(const Hash32& measurement, const Nonce& nonce,
                                        uint64_t now) const {
    AttestationQuote q;
    q.measurement = measurement;
    q.nonce = nonce;
    q.issued_at = now;
    q.hw_sig = signer_.sign(q.canonical_body());
    return q;
}

bool AttestationRoot::verify_signature(const AttestationQuote& quote) const {
    return sign::verify(signer_.public_key(), quote.canonical_body(), quote.hw_sig);
}

Hash32 measurement_of(const Hash32& container_digest, std::string_view code_version) {
    codec::Writer w;
    w.hash(container_digest);
    w.str(code_version);
    return sha256(w.bytes());
}

Bytes encode_quote(const AttestationQuote& quote) {
    codec::Writer w;
    w.hash(quote.measurement);
    w.blob(std::span<const uint8_t>(quote.nonce.data(), quote.nonce.size()));
    w.u64(quote.issued_at);
    w.blob(quote.hw_sig);
    return w.take();
}

std::optional<AttestationQuote> decode_quote(std::span<const uint8_t> bytes) {
    codec::Reader r(bytes);
    auto measurement = r.hash();
    auto nonce = r.blob();
    auto issued_at = r.u64();
    auto sig = r.blob();
    if (!measurement || !nonce || nonce->size() != 16 || !issued_at || !sig || !r.exhausted()) {
        return std::nullopt;
    }
    AttestationQuote q;
    q.measurement = *measurement;
    std::copy(nonce->begin(), nonce->end(), q.nonce.begin());
    q.issued_at = *issued_at;
    q.hw_sig = std::move(*sig);
    return q;
}

// ---- hybrid encryption ----

Bytes encrypt_payload(std::span<const uint8_t> recipient_public_key,
                      std::span<const uint8_t> req_bytes, std::span<const uint8_t> out_bytes) {
    ensure_sodium();
    if (recipient_public_key.size() != crypto_box_PUBLICKEYBYTES) {
        throw std::invalid_argument("encrypt_payload: bad public key size");
    }
    codec::Writer w;
    w.blob(req_bytes);
    w.blob(out_bytes);
    Bytes plain = w.take();
    Bytes cipher(plain.size() + crypto_box_SEALBYTES);
    crypto_box_seal(cipher.data(), plain.data(), plain.size(), recipient_public_key.data());
    return cipher;
}

static std::optional<std::pair<Bytes, Bytes>> open_payload(std::span<const uint8_t> secret_key,
                                                           std::span<const uint8_t> public_key,
                                                           std::span<const uint8_t> ciphertext) {
    ensure_sodium();
    if (secret_key.size() != crypto_box_SECRETKEYBYTES ||
        public_key.size() != crypto_box_PUBLICKEYBYTES ||
        ciphertext.size() < crypto_box_SEALBYTES) {
        return std::nullopt;
    }
    Bytes plain(ciphertext.size() - crypto_box_SEALBYTES);
    if (crypto_box_seal_open(plain.data(), ciphertext.data(), ciphertext.size(), public_key.data(),
                             secret_key.data()) != 0) {
        return std::nullopt;
    }
    codec::Reader r(plain);
    auto req = r.blob();
    auto out = r.blob();
    if (!req || !out || !r.exhausted()) return std::nullopt;
    return std::make_pair(std::move(*req), std::move(*out));
}

// ---- KMS ----

Kms::Kms(KmsPolicy policy, const AttestationRoot* root, uint64_t rng_seed)
    : policy_(std::move(policy)), root_(root), rng_state_(rng_seed) {
    if (policy_.threshold < 1 || policy_.threshold > policy_.shard_count) {
        throw std::invalid_argument("kms: need 1 <= t <= n");
    }
    if (policy_.shard_count > 255) throw std::invalid_argument("kms: n exceeds field capacity");
    ensure_sodium();
    seen_nonces_.resize(policy_.shard_count);
    create_epoch();
}

void Kms::create_epoch() {
    ++active_epoch_;
    Epoch e;

    // Deterministic keypair derived from the KMS seed stream.
    Hash32 seed{};
    detcore::PrngState prng = detcore::PrngState::seeded(detcore::splitmix64(rng_state_));
    for (size_t i = 0; i < 4; ++i) {
        uint64_t word = prng.next_u64();
        for (size_t b = 0; b < 8; ++b) seed[i * 8 + b] = uint8_t(word >> (8 * b));
    }
    Bytes pk(crypto_box_PUBLICKEYBYTES), sk(crypto_box_SECRETKEYBYTES);
    crypto_box_seed_keypair(pk.data(), sk.data(), seed.data());
    e.public_key = pk;
    e.shares = split_key(sk, policy_.threshold, policy_.shard_count, prng.next_u64(), active_epoch_);
    sodium_memzero(sk.data(), sk.size());

    e.status = EpochStatus::active;
    epochs_[active_epoch_] = std::move(e);
}

EpochStatus Kms::epoch_status(uint32_t epoch) const {
    auto it = epochs_.find(epoch);
    if (it == epochs_.end()) throw std::invalid_argument("kms: unknown epoch");
    return it->second.status;
}

Bytes Kms::epoch_public_key(uint32_t epoch) const {
    auto it = epochs_.find(epoch);
    if (it == epochs_.end()) throw std::invalid_argument("kms: unknown epoch");
    return it->second.public_key;
}

ShareResponse Kms::release_share(uint32_t shard_id, const AttestationQuote& quote, uint32_t epoch,
                                 uint64_t now) {
    if (shard_id < 1 || shard_id > policy_.shard_count) {
        return DenialReason{DenialReason::Kind::identity, "unknown shard"};
    }
    if (!root_->verify_signature(quote)) {
        return DenialReason{DenialReason::Kind::signature, "quote signature invalid"};
    }
    bool approved = std::find(policy_.approved_measurements.begin(),
                              policy_.approved_measurements.end(),
                              quote.measurement) != policy_.approved_measurements.end();
    if (!approved) {
        return DenialReason{DenialReason::Kind::identity, "measurement not approved"};
    }
    if (quote.issued_at > now || now - quote.issued_at > policy_.freshness_window) {
        return DenialReason{DenialReason::Kind::freshness, "quote outside freshness window"};
    }
    auto& seen = seen_nonces_[shard_id - 1];
    if (!seen.insert(quote.nonce).second) {
        return DenialReason{DenialReason::Kind::replay, "nonce already used"};
    }
    auto it = epochs_.find(epoch);
    if (it == epochs_.end() || it->second.status != EpochStatus::active) {
        return DenialReason{DenialReason::Kind::epoch, "epoch retired or unknown"};
    }
    return it->second.shares[shard_id - 1];
}

std::variant<std::vector<KeyShare>, DenialReason> Kms::collect_shares(const AttestationQuote& quote,
                                                                      uint32_t epoch, uint64_t now,
                                                                      uint32_t count) {
    if (count > policy_.shard_count) {
        return DenialReason{DenialReason::Kind::threshold, "requested more shards than exist"};
    }
    std::vector<KeyShare> shares;
    shares.reserve(count);
    for (uint32_t shard = 1; shard <= count; ++shard) {
        ShareResponse resp = release_share(shard, quote, epoch, now);
        if (auto* denial = std::get_if<DenialReason>(&resp)) return *denial;
        shares.push_back(std::get<KeyShare>(std::move(resp)));
    }
    return shares;
}

std::optional<uint32_t> Kms::rotate_epoch(bool governance_approval) {
    if (!governance_approval) return std::nullopt;
    epochs_.at(active_epoch_).status = EpochStatus::retired;
    create_epoch();
    return active_epoch_;
}

// ---- enclave context ----

EnclaveContext::EnclaveContext(const Hash32& measurement, const AttestationRoot& root,
                               const Nonce& nonce, uint64_t now, TaintLog* taint)
    : measurement_(measurement), taint_(taint) {
    quote_ = root.issue(measurement, nonce, now);
}

EnclaveContext::~EnclaveContext() { zeroize(); }

std::string EnclaveContext::reconstruct(std::span<const KeyShare> shares,
                                        uint32_t expected_threshold) {
    if (shares.size() < expected_threshold) return "insufficient shares for threshold";
    uint32_t epoch = shares.empty() ? 0 : shares[0].epoch;
    std::set<uint8_t> xs;
    for (const auto& s : shares) {
        if (s.epoch != epoch) return "shares from mixed epochs";
        if (!xs.insert(s.x).second) return "duplicate share";
    }
    Bytes key = interpolate_at_zero(shares);

    ensure_sodium();
    if (key.size() != crypto_box_SECRETKEYBYTES) return "reconstructed key has wrong size";
    Bytes pk(crypto_box_PUBLICKEYBYTES);
    crypto_scalarmult_base(pk.data(), key.data());

    zeroize();
    secret_key_ = std::move(key);
    public_key_ = std::move(pk);
    key_epoch_ = epoch;
    return "";
}

std::optional<std::pair<Bytes, Bytes>> EnclaveContext::decrypt_payload(
    std::span<const uint8_t> ciphertext) {
    if (!has_key()) return std::nullopt;
    auto plain = open_payload(secret_key_, public_key_, ciphertext);
    if (plain && taint_ != nullptr) taint_->observe(AccessRole::enclave, DataLabel::plaintext);
    return plain;
}

void EnclaveContext::zeroize() {
    if (!secret_key_.empty()) sodium_memzero(secret_key_.data(), secret_key_.size());
    secret_key_.clear();
    public_key_.clear();
    key_epoch_ = 0;
}

std::optional<std::pair<Bytes, Bytes>> decrypt_outside_enclave(std::span<const uint8_t> secret_key,
                                                               std::span<const uint8_t> public_key,
                                                               std::span<const uint8_t> ciphertext,
                                                               AccessRole role, TaintLog* taint) {
    auto plain = open_payload(secret_key, public_key, ciphertext);
    if (plain && taint != nullptr) taint->observe(role, DataLabel::plaintext);
    return plain;
}

}  // namespace verinf::privacy
