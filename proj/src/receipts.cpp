#include "verinf/receipts.hpp"

#include <json.hpp>

namespace verinf::receipts {

const Registry& Registry::defaults() {
    static const Registry reg{};
    return reg;
}

Bytes canonical_receipt_body(const Receipt& receipt) {
    codec::Writer w;
    w.str(receipt.model_id);
    w.str(receipt.chain_id);
    w.hash(receipt.container_digest);
    w.str(receipt.gpu_arch);
    w.str(receipt.driver_tag);
    codec::encode_policy(w, receipt.decode_policy);
    w.u64(receipt.seed);
    w.hash(receipt.req_hash);
    w.hash(receipt.out_hash);
    w.u8(receipt.att_quote.has_value() ? 1 : 0);
    if (receipt.att_quote) w.blob(*receipt.att_quote);
    w.u64(receipt.timestamp);
    w.str(receipt.da_pointer);
    w.u32(receipt.key_epoch);
    return w.take();
}

Bytes encode_receipt(const Receipt& receipt) {
    codec::Writer w;
    w.blob(canonical_receipt_body(receipt));
    w.blob(receipt.sig);
    return w.take();
}

static std::optional<Receipt> decode_receipt_body(std::span<const uint8_t> body) {
    codec::Reader r(body);
    Receipt rc;
    auto model_id = r.str();
    auto chain_id = r.str();
    auto digest = r.hash();
    auto arch = r.str();
    auto driver = r.str();
    auto policy = codec::decode_policy(r);
    auto seed = r.u64();
    auto req_hash = r.hash();
    auto out_hash = r.hash();
    auto has_quote = r.u8();
    if (!model_id || !chain_id || !digest || !arch || !driver || !policy || !seed || !req_hash ||
        !out_hash || !has_quote) {
        return std::nullopt;
    }
    if (*has_quote != 0) {
        auto quote = r.blob();
        if (!quote) return std::nullopt;
        rc.att_quote = std::move(*quote);
    }
    auto timestamp = r.u64();
    auto pointer = r.str();
    auto epoch = r.u32();
    if (!timestamp || !pointer || !epoch || !r.exhausted()) return std::nullopt;
    rc.model_id = std::move(*model_id);
    rc.chain_id = std::move(*chain_id);
    rc.container_digest = *digest;
    rc.gpu_arch = std::move(*arch);
    rc.driver_tag = std::move(*driver);
    rc.decode_policy = *policy;
    rc.seed = *seed;
    rc.req_hash = *req_hash;
    rc.out_hash = *out_hash;
    rc.timestamp = *timestamp;
    rc.da_pointer = std::move(*pointer);
    rc.key_epoch = *epoch;
    return rc;
}

std::optional<Receipt> decode_receipt(std::span<const uint8_t> bytes) {
    codec::Reader r(bytes);
    auto body = r.blob();
    auto sig = r.blob();
    if (!body || !sig || !r.exhausted()) return std::nullopt;
    auto rc = decode_receipt_body(*body);
    if (!rc) return std::nullopt;
    rc->sig = std::move(*sig);
    return rc;
}

Bytes encode_da_record(const Bytes& cipher, const Receipt& receipt) {
    codec::Writer w;
    w.blob(cipher);
    w.blob(encode_receipt(receipt));
    return w.take();
}

std::optional<std::pair<Bytes, Receipt>> decode_da_record(std::span<const uint8_t> bytes) {
    codec::Reader r(bytes);
    auto cipher = r.blob();
    auto receipt_bytes = r.blob();
    if (!cipher || !receipt_bytes || !r.exhausted()) return std::nullopt;
    auto receipt = decode_receipt(*receipt_bytes);
    if (!receipt) return std::nullopt;
    return std::make_pair(std::move(*cipher), std::move(*receipt));
}

Receipt make_receipt(const detcore::ExecutionTuple& exec, const detcore::InferenceOutput& out,
                     const sign::Signer& operator_key, const std::string& chain_id,
                     const std::string& da_pointer, uint32_t key_epoch, uint64_t timestamp,
                     std::optional<Bytes> att_quote) {
    Receipt rc;
    rc.model_id = exec.model_id;
    rc.chain_id = chain_id;
    rc.container_digest = exec.container_digest;
    rc.gpu_arch = exec.arch;
    rc.driver_tag = exec.driver_tag;
    rc.decode_policy = exec.decode_policy;
    rc.seed = exec.seed;
    rc.req_hash = hash_commit(codec::encode_execution_tuple(exec));
    rc.out_hash = hash_commit(out.canonical_bytes);
    rc.att_quote = std::move(att_quote);
    rc.timestamp = timestamp;
    rc.da_pointer = da_pointer;
    rc.key_epoch = key_epoch;
    rc.sig = operator_key.sign(canonical_receipt_body(rc));
    return rc;
}

static bool fail(std::string* why, const char* reason) {
    if (why != nullptr) *why = reason;
    return false;
}

bool verify_receipt(const Receipt& receipt, std::span<const uint8_t> operator_pubkey,
                    const Registry& registry, std::string* why) {
    if (!registry.archs.contains(receipt.gpu_arch)) return fail(why, "gpu_arch not in approved set");
    if (!receipt.decode_policy.validate().empty()) return fail(why, "malformed decode_policy");
    if (!registry.containers.empty() && registry.containers.count(receipt.container_digest) == 0) {
        return fail(why, "container_digest not registered");
    }
    if (!registry.models.empty() && registry.models.count(receipt.model_id) == 0) {
        return fail(why, "model_id not registered");
    }
    if (!sign::verify(operator_pubkey, canonical_receipt_body(receipt), receipt.sig)) {
        return fail(why, "signature invalid");
    }
    if (why != nullptr) *why = "";
    return true;
}

ResponseMetadata ResponseMetadata::from_receipt(const Receipt& receipt) {
    ResponseMetadata meta;
    meta.system_fingerprint =
        hex32(receipt.container_digest) + ":" + receipt.gpu_arch + ":" + receipt.driver_tag;
    meta.determinism_seed = receipt.seed;
    meta.receipt = receipt;
    meta.da_link = receipt.da_pointer;
    return meta;
}

bool ResponseMetadata::consistent() const {
    return system_fingerprint == hex32(receipt.container_digest) + ":" + receipt.gpu_arch + ":" +
                                     receipt.driver_tag &&
           determinism_seed == receipt.seed && da_link == receipt.da_pointer;
}

static Verdict invalid(const char* step) {
    return Verdict{Verdict::Status::INVALID, step};
}

Verdict reproduce_and_verify(const da::Store& store, const ResponseMetadata& meta,
                             const KeyAccess& key_access,
                             std::span<const uint8_t> operator_pubkey, const Registry& registry) {
    if (!meta.consistent()) return invalid("metadata-consistency");

    auto pointer = da::DaPointer::parse(meta.da_link);
    if (!pointer) return invalid("da-pointer");

    da::FetchResult fetched = store.fetch_with_proof(*pointer);
    if (fetched.status == da::FetchStatus::withheld) return invalid("da-availability");
    if (fetched.status != da::FetchStatus::ok) return invalid("fetch");

    auto root = store.root_of(pointer->slot_id);
    if (!root || !da::verify_inclusion(fetched.proof, *root)) return invalid("inclusion-proof");

    auto record = decode_da_record(fetched.blob);
    if (!record) return invalid("record-decode");
    const auto& [cipher, receipt] = *record;
    if (receipt != meta.receipt) return invalid("receipt-mismatch");

    std::string why;
    if (!verify_receipt(receipt, operator_pubkey, registry, &why)) {
        return Verdict{Verdict::Status::INVALID, "receipt-verify: " + why};
    }

    if (!key_access.epoch_valid || !key_access.epoch_valid(receipt.key_epoch)) {
        return invalid("epoch-validity");
    }

    auto plain = key_access.decrypt(cipher, receipt.key_epoch);
    if (!plain) return invalid("decrypt");
    const auto& [req_bytes, out_bytes] = *plain;

    if (hash_commit(req_bytes) != receipt.req_hash) return invalid("request-hash");
    if (hash_commit(out_bytes) != receipt.out_hash) return invalid("cipher-binding");

    auto exec = codec::decode_execution_tuple(req_bytes);
    if (!exec) return invalid("request-decode");

    detcore::InferenceOutput reproduced;
    try {
        reproduced = detcore::infer(*exec, registry.archs);
    } catch (const std::exception&) {
        return invalid("re-execute");
    }
    if (hash_commit(reproduced.canonical_bytes) != receipt.out_hash) return invalid("output-hash");

    return Verdict{Verdict::Status::VERIFIED, "ok"};
}

// ---- JSON ----

std::string receipt_to_json(const Receipt& receipt) {
    nlohmann::ordered_json j;
    j["model_id"] = receipt.model_id;
    j["chain_id"] = receipt.chain_id;
    j["container_digest"] = hex32(receipt.container_digest);
    j["gpu_arch"] = receipt.gpu_arch;
    j["driver_tag"] = receipt.driver_tag;
    j["decode_policy"] = codec::policy_to_string(receipt.decode_policy);
    j["seed"] = receipt.seed;
    j["req_hash"] = hex32(receipt.req_hash);
    j["out_hash"] = hex32(receipt.out_hash);
    if (receipt.att_quote) j["att_quote"] = base64_encode(*receipt.att_quote);
    j["sig"] = hex_encode(receipt.sig);
    j["da_pointer"] = receipt.da_pointer;
    j["epoch"] = receipt.key_epoch;
    j["timestamp"] = receipt.timestamp;
    return j.dump(2);
}

std::optional<Receipt> receipt_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    try {
        Receipt rc;
        rc.model_id = j.at("model_id").get<std::string>();
        rc.chain_id = j.at("chain_id").get<std::string>();
        auto digest = hash32_from_hex(j.at("container_digest").get<std::string>());
        rc.gpu_arch = j.at("gpu_arch").get<std::string>();
        rc.driver_tag = j.at("driver_tag").get<std::string>();
        auto policy = codec::policy_from_string(j.at("decode_policy").get<std::string>());
        rc.seed = j.at("seed").get<uint64_t>();
        auto req_hash = hash32_from_hex(j.at("req_hash").get<std::string>());
        auto out_hash = hash32_from_hex(j.at("out_hash").get<std::string>());
        auto sig = hex_decode(j.at("sig").get<std::string>());
        rc.da_pointer = j.at("da_pointer").get<std::string>();
        rc.key_epoch = j.at("epoch").get<uint32_t>();
        rc.timestamp = j.value("timestamp", uint64_t{0});
        if (!digest || !policy || !req_hash || !out_hash || !sig) return std::nullopt;
        rc.container_digest = *digest;
        rc.decode_policy = *policy;
        rc.req_hash = *req_hash;
        rc.out_hash = *out_hash;
        rc.sig = std::move(*sig);
        if (j.contains("att_quote")) {
            auto quote = base64_decode(j.at("att_quote").get<std::string>());
            if (!quote) return std::nullopt;
            rc.att_quote = std::move(*quote);
        }
        return rc;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

}  // namespace verinf::receipts
