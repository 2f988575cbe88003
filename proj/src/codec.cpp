#include "verinf/codec.hpp"

#include <cstdio>
#include <cstdlib>

namespace verinf::codec {

void Writer::str(std::string_view s) {
    u32(uint32_t(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void Writer::blob(std::span<const uint8_t> b) {
    u32(uint32_t(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
}

std::optional<uint8_t> Reader::u8() {
    if (!need(1)) return std::nullopt;
    return data_[pos_++];
}

std::optional<uint32_t> Reader::u32() {
    if (!need(4)) return std::nullopt;
    uint32_t v = load_be32(data_.data() + pos_);
    pos_ += 4;
    return v;
}

std::optional<uint64_t> Reader::u64() {
    if (!need(8)) return std::nullopt;
    uint64_t v = load_be64(data_.data() + pos_);
    pos_ += 8;
    return v;
}

std::optional<float> Reader::f32() {
    auto bits = u32();
    if (!bits) return std::nullopt;
    return f32_from_bits(*bits);
}

std::optional<std::string> Reader::str() {
    auto len = u32();
    if (!len || !need(*len)) return std::nullopt;
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), *len);
    pos_ += *len;
    return s;
}

std::optional<Bytes> Reader::blob() {
    auto len = u32();
    if (!len || !need(*len)) return std::nullopt;
    Bytes b(data_.begin() + pos_, data_.begin() + pos_ + *len);
    pos_ += *len;
    return b;
}

std::optional<Hash32> Reader::hash() {
    if (!need(32)) return std::nullopt;
    Hash32 h;
    std::memcpy(h.data(), data_.data() + pos_, 32);
    pos_ += 32;
    return h;
}

void encode_policy(Writer& w, const detcore::DecodePolicy& policy) {
    w.u8(uint8_t(policy.kind));
    w.u8(policy.k.has_value() ? 1 : 0);
    w.u32(policy.k.value_or(0));
    w.u8(policy.p.has_value() ? 1 : 0);
    w.f32(policy.p.value_or(0.0f));
    w.u32(policy.max_tokens);
}

std::optional<detcore::DecodePolicy> decode_policy(Reader& r) {
    auto kind = r.u8();
    auto has_k = r.u8();
    auto k = r.u32();
    auto has_p = r.u8();
    auto p = r.f32();
    auto max_tokens = r.u32();
    if (!kind || !has_k || !k || !has_p || !p || !max_tokens) return std::nullopt;
    if (*kind > uint8_t(detcore::DecodeKind::nucleus)) return std::nullopt;
    detcore::DecodePolicy policy;
    policy.kind = detcore::DecodeKind(*kind);
    if (*has_k) policy.k = *k;
    if (*has_p) policy.p = *p;
    policy.max_tokens = *max_tokens;
    return policy;
}

Bytes encode_execution_tuple(const detcore::ExecutionTuple& exec) {
    Writer w;
    w.str(exec.model_id);
    w.hash(exec.container_digest);
    w.str(exec.arch);
    w.str(exec.driver_tag);
    encode_policy(w, exec.decode_policy);
    w.u64(exec.seed);
    w.u32(uint32_t(exec.prompt.size()));
    for (uint32_t t : exec.prompt) w.u32(t);
    return w.take();
}

std::optional<detcore::ExecutionTuple> decode_execution_tuple(std::span<const uint8_t> bytes) {
    Reader r(bytes);
    detcore::ExecutionTuple exec;
    auto model_id = r.str();
    auto digest = r.hash();
    auto arch = r.str();
    auto driver = r.str();
    auto policy = decode_policy(r);
    auto seed = r.u64();
    auto count = r.u32();
    if (!model_id || !digest || !arch || !driver || !policy || !seed || !count) return std::nullopt;
    exec.model_id = std::move(*model_id);
    exec.container_digest = *digest;
    exec.arch = std::move(*arch);
    exec.driver_tag = std::move(*driver);
    exec.decode_policy = *policy;
    exec.seed = *seed;
    exec.prompt.reserve(*count);
    for (uint32_t i = 0; i < *count; ++i) {
        auto t = r.u32();
        if (!t) return std::nullopt;
        exec.prompt.push_back(*t);
    }
    if (!r.exhausted()) return std::nullopt;
    return exec;
}

std::string policy_to_string(const detcore::DecodePolicy& policy) {
    char buf[96];
    switch (policy.kind) {
        case detcore::DecodeKind::greedy:
            std::snprintf(buf, sizeof(buf), "greedy,max_tokens=%u", policy.max_tokens);
            break;
        case detcore::DecodeKind::top_k:
            std::snprintf(buf, sizeof(buf), "top_k,k=%u,max_tokens=%u", policy.k.value_or(0),
                          policy.max_tokens);
            break;
        case detcore::DecodeKind::nucleus:
            // %.9g round-trips any float32 exactly
            std::snprintf(buf, sizeof(buf), "nucleus,p=%.9g,max_tokens=%u",
                          double(policy.p.value_or(0.0f)), policy.max_tokens);
            break;
    }
    return buf;
}

std::optional<detcore::DecodePolicy> policy_from_string(std::string_view text) {
    auto next_field = [&]() -> std::optional<std::string_view> {
        if (text.empty()) return std::nullopt;
        size_t comma = text.find(',');
        std::string_view field = text.substr(0, comma);
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        return field;
    };
    auto kind_field = next_field();
    if (!kind_field) return std::nullopt;

    detcore::DecodePolicy policy;
    if (*kind_field == "greedy") {
        policy.kind = detcore::DecodeKind::greedy;
    } else if (*kind_field == "top_k") {
        policy.kind = detcore::DecodeKind::top_k;
    } else if (*kind_field == "nucleus") {
        policy.kind = detcore::DecodeKind::nucleus;
    } else {
        return std::nullopt;
    }

    bool have_max = false;
    while (auto field = next_field()) {
        size_t eq = field->find('=');
        if (eq == std::string_view::npos) return std::nullopt;
        std::string_view key = field->substr(0, eq);
        std::string value(field->substr(eq + 1));
        if (value.empty()) return std::nullopt;
        char* end = nullptr;
        if (key == "k") {
            policy.k = uint32_t(std::strtoul(value.c_str(), &end, 10));
        } else if (key == "p") {
            policy.p = std::strtof(value.c_str(), &end);
        } else if (key == "max_tokens") {
            policy.max_tokens = uint32_t(std::strtoul(value.c_str(), &end, 10));
            have_max = true;
        } else {
            return std::nullopt;
        }
        if (end == nullptr || *end != '\0') return std::nullopt;
    }
    if (!have_max || !policy.validate().empty()) return std::nullopt;
    return policy;
}

}  // namespace verinf::codec
