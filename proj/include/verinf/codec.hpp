#pragma once

#include <optional>
#include <string>

#include "verinf/bytes.hpp"
#include "verinf/detcore.hpp"

// Canonical record encoding: fixed field order, big-endian fixed-width
// integers, length-prefixed variable fields. Injective by construction, and
// decode(encode(r)) == r for every well-formed record. This is the byte form
// that request hashes and receipt signatures commit to.

namespace verinf::codec {

class Writer {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v) { put_be32(buf_, v); }
    void u64(uint64_t v) { put_be64(buf_, v); }
    void f32(float v) { put_be32(buf_, f32_bits(v)); }
    void str(std::string_view s);
    void blob(std::span<const uint8_t> b);
    void hash(const Hash32& h) { buf_.insert(buf_.end(), h.begin(), h.end()); }

    Bytes take() { return std::move(buf_); }
    const Bytes& bytes() const { return buf_; }

private:
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(std::span<const uint8_t> data) : data_(data) {}

    std::optional<uint8_t> u8();
    std::optional<uint32_t> u32();
    std::optional<uint64_t> u64();
    std::optional<float> f32();
    std::optional<std::string> str();
    std::optional<Bytes> blob();
    std::optional<Hash32> hash();

    bool exhausted() const { return pos_ == data_.size(); }

private:
    bool need(size_t n) const { return pos_ + n <= data_.size(); }

    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

void encode_policy(Writer& w, const detcore::DecodePolicy& policy);
std::optional<detcore::DecodePolicy> decode_policy(Reader& r);

Bytes encode_execution_tuple(const detcore::ExecutionTuple& exec);
std::optional<detcore::ExecutionTuple> decode_execution_tuple(std::span<const uint8_t> bytes);

// Display form used in receipts and JSON, e.g. "greedy,max_tokens=8",
// "top_k,k=40,max_tokens=8", "nucleus,p=0.9,max_tokens=8". The p value is
// printed with enough digits to round-trip the exact 32-bit float.
std::string policy_to_string(const detcore::DecodePolicy& policy);
std::optional<detcore::DecodePolicy> policy_from_string(std::string_view text);

}  // namespace verinf::codec
