#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "verinf/bytes.hpp"

// Merkle-batched data-availability store. One batch per slot; the root over
// the sealed batch is the trust anchor challenges verify inclusion against.
//
// Tree rules (normative for dumps and proofs):
//   leaf hash      H(0x00 || blob)
//   interior hash  H(0x01 || left || right)
//   odd node count: last hash paired with a copy of itself
//   empty batch    root = H(0x00), the empty-leaf sentinel

namespace verinf::da {

struct DaPointer {
    uint64_t slot_id = 0;
    uint32_t leaf_index = 0;

    std::string to_string() const;
    static std::optional<DaPointer> parse(std::string_view text);

    friend auto operator<=>(const DaPointer&, const DaPointer&) = default;
};

struct InclusionProof {
    uint64_t slot_id = 0;
    Hash32 root{};
    // (sibling hash, sibling_is_left) from leaf level upward
    std::vector<std::pair<Hash32, bool>> path;
    Bytes leaf;
};

Hash32 leaf_hash(std::span<const uint8_t> blob);
Hash32 node_hash(const Hash32& left, const Hash32& right);
Hash32 merkle_root(const std::vector<Hash32>& leaf_hashes);

bool verify_inclusion(const InclusionProof& proof, const Hash32& trusted_root);

// Merkle root binding a list of external documents (prompt commitments).
// Empty list yields the sentinel root.
Hash32 commit_prompts(const std::vector<Bytes>& documents);

enum class FetchStatus { ok, not_found, withheld };

struct FetchResult {
    FetchStatus status = FetchStatus::not_found;
    Bytes blob;
    InclusionProof proof;
};

class Store {
public:
    Store() = default;

    // Appends to the open batch of the current slot and returns its pointer.
    // In withholding mode the blob is still committed into the tree but is
    // recorded as censored: fetches will report it withheld.
    DaPointer publish(const Bytes& blob);

    // Pointer the next publish() will return; lets a record embed its own
    // pointer before publication.
    DaPointer next_pointer() const { return {current_slot_, uint32_t(open_batch_.size())}; }

    // Seals the current batch (computes its root) and opens the next slot.
    void advance_slot();
    uint64_t current_slot() const { return current_slot_; }

    FetchResult fetch_with_proof(const DaPointer& pointer) const;
    std::optional<Hash32> root_of(uint64_t slot_id) const;
    bool is_sealed(uint64_t slot_id) const { return sealed_.count(slot_id) != 0; }

    void set_withholding(bool on) { withholding_ = on; }
    void censor(const DaPointer& pointer) { censored_.insert(pointer); }

    // Drops sealed batches older than min_slot_keep (retention beyond the
    // challenge window is the caller's policy).
    void prune_before(uint64_t min_slot_keep);

    // Dump/restore: ordered hex leaves plus root per sealed slot. Restore
    // recomputes and cross-checks every root.
    void dump(std::ostream& out) const;
    static std::optional<Store> restore(std::istream& in);

private:
    struct SealedBatch {
        std::vector<Bytes> leaves;
        std::vector<Hash32> leaf_hashes;
        Hash32 root{};
    };

    uint64_t current_slot_ = 0;
    std::vector<Bytes> open_batch_;
    std::map<uint64_t, SealedBatch> sealed_;
    std::set<DaPointer> censored_;
    bool withholding_ = false;
};

}  // namespace verinf::da
