#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>

#include "verinf/bytes.hpp"
#include "verinf/codec.hpp"
#include "verinf/da.hpp"
#include "verinf/detcore.hpp"
#include "verinf/sha256.hpp"
#include "verinf/sign.hpp"

// Signed receipts binding a request hash, output hash, and execution
// environment to a data-availability record, plus the auditor-side
// reproduce-and-verify procedure.

namespace verinf::receipts {

// Local stand-in for on-chain registration: the approved arch profiles and,
// when non-empty, the registered container digests and model ids. Empty
// container/model sets mean registration is not enforced for that field.
struct Registry {
    detcore::ArchRegistry archs = detcore::ArchRegistry::defaults();
    std::set<Hash32> containers;
    std::set<std::string> models;

    static const Registry& defaults();
};

struct Receipt {
    std::string model_id;
    std::string chain_id;
    Hash32 container_digest{};
    std::string gpu_arch;
    std::string driver_tag;
    detcore::DecodePolicy decode_policy;
    uint64_t seed = 0;
    Hash32 req_hash{};
    Hash32 out_hash{};
    std::optional<Bytes> att_quote;  // opaque encoded quote; present iff the
                                     // operator ran in a (mock) enclave
    uint64_t timestamp = 0;          // simulator epoch, not wall clock
    std::string da_pointer;
    uint32_t key_epoch = 0;
    Bytes sig;

    friend bool operator==(const Receipt&, const Receipt&) = default;
};

// SHA-256 commitment over a canonical encoding.
inline Hash32 hash_commit(std::span<const uint8_t> bytes) { return sha256(bytes); }
inline Hash32 hash_commit(const Bytes& bytes) { return sha256(bytes); }

// Canonical signing body: every field except sig, in declaration order.
Bytes canonical_receipt_body(const Receipt& receipt);

// Full wire form (body plus signature) and the published DA record
// [cipher][receipt].
Bytes encode_receipt(const Receipt& receipt);
std::optional<Receipt> decode_receipt(std::span<const uint8_t> bytes);
Bytes encode_da_record(const Bytes& cipher, const Receipt& receipt);
std::optional<std::pair<Bytes, Receipt>> decode_da_record(std::span<const uint8_t> bytes);

// Builds and signs a receipt for an (exec, out) pair produced by infer().
// req_hash commits to the canonical execution tuple, out_hash to the
// canonical output bytes; environment fields are copied from exec.
Receipt make_receipt(const detcore::ExecutionTuple& exec, const detcore::InferenceOutput& out,
                     const sign::Signer& operator_key, const std::string& chain_id,
                     const std::string& da_pointer, uint32_t key_epoch, uint64_t timestamp,
                     std::optional<Bytes> att_quote = std::nullopt);

// Signature over the canonical body plus the field constraints of the receipt
// schema (approved arch, well-formed policy, registered container/model when
// the registry lists any). On failure, *why names the first failed check.
bool verify_receipt(const Receipt& receipt, std::span<const uint8_t> operator_pubkey,
                    const Registry& registry = Registry::defaults(), std::string* why = nullptr);

// Response metadata returned alongside an inference result.
struct ResponseMetadata {
    std::string system_fingerprint;  // container_digest_hex:gpu_arch:driver_tag
    uint64_t determinism_seed = 0;
    Receipt receipt;
    std::string da_link;

    static ResponseMetadata from_receipt(const Receipt& receipt);
    bool consistent() const;
};

struct Verdict {
    enum class Status { VERIFIED, INVALID };
    Status status = Status::INVALID;
    std::string detail;  // failing step name, or "ok"

    bool verified() const { return status == Status::VERIFIED; }
};

// Decryption capability handed to the reproduction procedure; backed by an
// enclave session in the simulator.
struct KeyAccess {
    std::function<std::optional<std::pair<Bytes, Bytes>>(std::span<const uint8_t> cipher,
                                                         uint32_t epoch)>
        decrypt;
    std::function<bool(uint32_t epoch)> epoch_valid;
};

// The auditor path: fetch the DA record, check inclusion, verify the operator
// signature, check epoch validity, decrypt, re-execute the recorded tuple,
// and compare output hashes. INVALID names the first failing step.
Verdict reproduce_and_verify(const da::Store& store, const ResponseMetadata& meta,
                             const KeyAccess& key_access,
                             std::span<const uint8_t> operator_pubkey,
                             const Registry& registry = Registry::defaults());

// JSON export/import; hashes and signatures hex-encoded, att_quote base64.
std::string receipt_to_json(const Receipt& receipt);
std::optional<Receipt> receipt_from_json(const std::string& text);

}  // namespace verinf::receipts
