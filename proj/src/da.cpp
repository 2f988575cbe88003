#include "verinf/da.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "verinf/sha256.hpp"

namespace verinf::da {

std::string DaPointer::to_string() const {
    return std::to_string(slot_id) + ":" + std::to_string(leaf_index);
}

std::optional<DaPointer> DaPointer::parse(std::string_view text) {
    size_t colon = text.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    DaPointer p;
    auto r1 = std::from_chars(text.data(), text.data() + colon, p.slot_id);
    auto r2 = std::from_chars(text.data() + colon + 1, text.data() + text.size(), p.leaf_index);
    if (r1.ec != std::errc{} || r1.ptr != text.data() + colon) return std::nullopt;
    if (r2.ec != std::errc{} || r2.ptr != text.data() + text.size()) return std::nullopt;
    return p;
}

Hash32 leaf_hash(std::span<const uint8_t> blob) {
    Bytes tagged;
    tagged.reserve(blob.size() + 1);
    tagged.push_back(0x00);
    tagged.insert(tagged.end(), blob.begin(), blob.end());
    return sha256(tagged);
}

Hash32 node_hash(const Hash32& left, const Hash32& right) {
    Bytes tagged;
    tagged.reserve(65);
    tagged.push_back(0x01);
    tagged.insert(tagged.end(), left.begin(), left.end());
    tagged.insert(tagged.end(), right.begin(), right.end());
    return sha256(tagged);
}

static Hash32 sentinel_root() { return leaf_hash({}); }

// Odd node counts pair the last hash with a copy of itself.
Hash32 merkle_root(const std::vector<Hash32>& leaf_hashes) {
    if (leaf_hashes.empty()) return sentinel_root();
    std::vector<Hash32> level = leaf_hashes;
    while (level.size() > 1) {
        std::vector<Hash32> next;
        next.reserve((level.size() + 1) / 2);
        for (size_t i = 0; i < level.size(); i += 2) {
            const Hash32& left = level[i];
            const Hash32& right = (i + 1 < level.size()) ? level[i + 1] : level[i];
            next.push_back(node_hash(left, right));
        }
        level = std::move(next);
    }
    return level[0];
}

bool verify_inclusion(const InclusionProof& proof, const Hash32& trusted_root) {
    Hash32 acc = leaf_hash(proof.leaf);
    for (const auto& [sibling, sibling_is_left] : proof.path) {
        acc = sibling_is_left ? node_hash(sibling, acc) : node_hash(acc, sibling);
    }
    return acc == trusted_root && proof.root == trusted_root;
}

Hash32 commit_prompts(const std::vector<Bytes>& documents) {
    std::vector<Hash32> hashes;
    hashes.reserve(documents.size());
    for (const auto& d : documents) hashes.push_back(leaf_hash(d));
    return merkle_root(hashes);
}

// Audit path for leaf `index`, mirroring merkle_root's duplication rule: the
// lone tail node of an odd level takes itself as right-hand sibling.
static std::vector<std::pair<Hash32, bool>> build_path(const std::vector<Hash32>& leaf_hashes,
                                                       uint32_t index) {
    std::vector<std::pair<Hash32, bool>> path;
    std::vector<Hash32> level = leaf_hashes;
    size_t pos = index;
    while (level.size() > 1) {
        size_t sib = (pos % 2 == 0) ? pos + 1 : pos - 1;
        if (sib >= level.size()) sib = pos;
        path.emplace_back(level[sib], sib < pos);
        std::vector<Hash32> next;
        next.reserve((level.size() + 1) / 2);
        for (size_t i = 0; i < level.size(); i += 2) {
            const Hash32& left = level[i];
            const Hash32& right = (i + 1 < level.size()) ? level[i + 1] : level[i];
            next.push_back(node_hash(left, right));
        }
        level = std::move(next);
        pos /= 2;
    }
    return path;
}

DaPointer Store::publish(const Bytes& blob) {
    DaPointer pointer{current_slot_, uint32_t(open_batch_.size())};
    open_batch_.push_back(blob);
    if (withholding_) censored_.insert(pointer);
    return pointer;
}

void Store::advance_slot() {
    SealedBatch batch;
    batch.leaves = std::move(open_batch_);
    open_batch_.clear();
    batch.leaf_hashes.reserve(batch.leaves.size());
    for (const auto& leaf : batch.leaves) batch.leaf_hashes.push_back(leaf_hash(leaf));
    batch.root = merkle_root(batch.leaf_hashes);
    sealed_[current_slot_] = std::move(batch);
    ++current_slot_;
}

FetchResult Store::fetch_with_proof(const DaPointer& pointer) const {
    FetchResult result;
    auto it = sealed_.find(pointer.slot_id);
    if (it == sealed_.end() || pointer.leaf_index >= it->second.leaves.size()) {
        result.status = FetchStatus::not_found;
        return result;
    }
    if (censored_.count(pointer) != 0) {
        result.status = FetchStatus::withheld;
        return result;
    }
    const SealedBatch& batch = it->second;
    result.status = FetchStatus::ok;
    result.blob = batch.leaves[pointer.leaf_index];
    result.proof.slot_id = pointer.slot_id;
    result.proof.root = batch.root;
    result.proof.leaf = result.blob;
    result.proof.path = build_path(batch.leaf_hashes, pointer.leaf_index);
    return result;
}

std::optional<Hash32> Store::root_of(uint64_t slot_id) const {
    auto it = sealed_.find(slot_id);
    if (it == sealed_.end()) return std::nullopt;
    return it->second.root;
}

void Store::prune_before(uint64_t min_slot_keep) {
    sealed_.erase(sealed_.begin(), sealed_.lower_bound(min_slot_keep));
}

void Store::dump(std::ostream& out) const {
    for (const auto& [slot, batch] : sealed_) {
        out << "slot " << slot << "\n";
        for (const auto& leaf : batch.leaves) out << "leaf " << hex_encode(leaf) << "\n";
        out << "root " << hex32(batch.root) << "\n";
    }
}

std::optional<Store> Store::restore(std::istream& in) {
    Store store;
    std::string line;
    std::optional<uint64_t> slot;
    std::vector<Bytes> leaves;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag, value;
        ls >> tag >> value;
        if (tag == "slot") {
            if (slot) return std::nullopt;  // previous slot never closed
            uint64_t id = 0;
            auto r = std::from_chars(value.data(), value.data() + value.size(), id);
            if (r.ec != std::errc{}) return std::nullopt;
            slot = id;
            leaves.clear();
        } else if (tag == "leaf") {
            if (!slot) return std::nullopt;
            auto blob = hex_decode(value);
            if (!blob) return std::nullopt;
            leaves.push_back(std::move(*blob));
        } else if (tag == "root") {
            if (!slot) return std::nullopt;
            auto expected = hash32_from_hex(value);
            if (!expected) return std::nullopt;
            SealedBatch batch;
            batch.leaves = std::move(leaves);
            leaves.clear();
            batch.leaf_hashes.reserve(batch.leaves.size());
            for (const auto& leaf : batch.leaves) batch.leaf_hashes.push_back(leaf_hash(leaf));
            batch.root = merkle_root(batch.leaf_hashes);
            if (batch.root != *expected) return std::nullopt;
            store.sealed_[*slot] = std::move(batch);
            store.current_slot_ = std::max(store.current_slot_, *slot + 1);
            slot.reset();
        } else {
            return std::nullopt;
        }
    }
    if (slot) return std::nullopt;  // slot without closing root line
    return store;
}

}  // namespace verinf::da
