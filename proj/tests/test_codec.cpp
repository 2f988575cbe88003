#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "verinf/codec.hpp"
#include "verinf/prng.hpp"
#include "verinf/sha256.hpp"

using namespace verinf;
using namespace verinf::codec;

namespace {

detcore::ExecutionTuple random_exec(detcore::PrngState& rng) {
    detcore::ExecutionTuple exec;
    exec.model_id = "m" + std::to_string(rng.next_below(1000));
    Hash32 digest = sha256(to_bytes(std::to_string(rng.next_u64())));
    exec.container_digest = digest;
    exec.arch = rng.next_below(2) == 0 ? "archA" : "archB";
    exec.driver_tag = "drv-" + std::to_string(rng.next_below(10));
    switch (rng.next_below(3)) {
        case 0: exec.decode_policy = detcore::DecodePolicy::greedy(uint32_t(rng.next_below(16))); break;
        case 1:
            exec.decode_policy = detcore::DecodePolicy::top_k(1 + uint32_t(rng.next_below(32)),
                                                              uint32_t(rng.next_below(16)));
            break;
        default:
            exec.decode_policy = detcore::DecodePolicy::nucleus(
                0.05f + 0.9f * rng.next_unit_f32(), uint32_t(rng.next_below(16)));
    }
    exec.seed = rng.next_u64();
    exec.prompt.resize(rng.next_below(12));
    for (auto& t : exec.prompt) t = uint32_t(rng.next_u64());
    return exec;
}

}  // namespace

TEST_CASE("hex and base64 round-trip") {
    Bytes data{0x00, 0x01, 0xAB, 0xFF, 0x7E};
    CHECK(hex_encode(data) == "0001abff7e");
    CHECK(*hex_decode("0001abff7e") == data);
    CHECK(!hex_decode("xyz"));
    CHECK(!hex_decode("abc"));  // odd length

    CHECK(base64_encode(to_bytes("any carnal pleasure.")) == "YW55IGNhcm5hbCBwbGVhc3VyZS4=");
    detcore::PrngState rng = detcore::PrngState::seeded(8);
    for (int i = 0; i < 200; ++i) {
        Bytes b(rng.next_below(40));
        for (auto& c : b) c = uint8_t(rng.next_below(256));
        auto round = base64_decode(base64_encode(b));
        REQUIRE(round);
        REQUIRE(*round == b);
    }
    CHECK(!base64_decode("a"));
    CHECK(!base64_decode("ab=c"));
}

TEST_CASE("canonical encoding: equal records, equal bytes") {
    detcore::PrngState rng = detcore::PrngState::seeded(55);
    detcore::ExecutionTuple a = random_exec(rng);
    detcore::ExecutionTuple b = a;
    CHECK(encode_execution_tuple(a) == encode_execution_tuple(b));
}

TEST_CASE("canonical encoding: single-field changes change bytes") {
    detcore::PrngState rng = detcore::PrngState::seeded(56);
    detcore::ExecutionTuple base = random_exec(rng);
    Bytes reference = encode_execution_tuple(base);

    auto changed = base;
    changed.model_id += "x";
    CHECK(encode_execution_tuple(changed) != reference);

    changed = base;
    changed.seed ^= 1;
    CHECK(encode_execution_tuple(changed) != reference);

    changed = base;
    changed.prompt.push_back(0);
    CHECK(encode_execution_tuple(changed) != reference);

    changed = base;
    changed.arch = changed.arch == "archA" ? "archB" : "archA";
    CHECK(encode_execution_tuple(changed) != reference);
}

TEST_CASE("canonical encoding: decode(encode(r)) == r over random records") {
    detcore::PrngState rng = detcore::PrngState::seeded(57);
    for (int i = 0; i < 1000; ++i) {
        detcore::ExecutionTuple exec = random_exec(rng);
        auto round = decode_execution_tuple(encode_execution_tuple(exec));
        REQUIRE(round);
        REQUIRE(*round == exec);
    }
}

TEST_CASE("canonical encoding: truncated or padded bytes rejected") {
    detcore::PrngState rng = detcore::PrngState::seeded(58);
    Bytes good = encode_execution_tuple(random_exec(rng));
    Bytes truncated(good.begin(), good.end() - 1);
    CHECK(!decode_execution_tuple(truncated));
    Bytes padded = good;
    padded.push_back(0);
    CHECK(!decode_execution_tuple(padded));
}

TEST_CASE("policy display strings round-trip") {
    auto check_roundtrip = [](const detcore::DecodePolicy& p) {
        auto parsed = policy_from_string(policy_to_string(p));
        REQUIRE(parsed);
        REQUIRE(*parsed == p);
    };
    check_roundtrip(detcore::DecodePolicy::greedy(8));
    check_roundtrip(detcore::DecodePolicy::top_k(40, 16));
    check_roundtrip(detcore::DecodePolicy::nucleus(0.9f, 4));
    check_roundtrip(detcore::DecodePolicy::nucleus(0.333333343f, 1));

    CHECK(policy_to_string(detcore::DecodePolicy::greedy(8)) == "greedy,max_tokens=8");
    CHECK(policy_to_string(detcore::DecodePolicy::top_k(40, 8)) == "top_k,k=40,max_tokens=8");

    CHECK(!policy_from_string("banana,max_tokens=4"));
    CHECK(!policy_from_string("greedy"));          // missing max_tokens
    CHECK(!policy_from_string("top_k,max_tokens=4"));  // missing k
    CHECK(!policy_from_string("greedy,k=2,max_tokens=4"));
}
