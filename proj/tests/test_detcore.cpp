#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "verinf/detcore.hpp"
#include "verinf/sha256.hpp"

using namespace verinf;
using namespace verinf::detcore;
using testutil::bits_equal;
using testutil::ulp_distance;

namespace {

const ArchProfile kTree{"tree", ReductionOrder::canonical_tree, FmaEmulation::split};
const ArchProfile kSeq{"seq", ReductionOrder::sequential, FmaEmulation::split};
const ArchProfile kSeqFused{"seqf", ReductionOrder::sequential, FmaEmulation::fused};

ExecutionTuple sample_exec(uint64_t seed, const std::string& arch, uint32_t prompt_len,
                           uint32_t max_tokens) {
    ExecutionTuple exec;
    exec.model_id = "model-" + std::to_string(seed % 5);
    exec.container_digest = sha256(to_bytes("container"));
    exec.arch = arch;
    exec.driver_tag = "drv-1";
    exec.decode_policy = DecodePolicy::top_k(4, max_tokens);
    exec.seed = seed;
    PrngState rng = PrngState::seeded(seed ^ 0xABCD);
    exec.prompt.resize(prompt_len);
    for (auto& t : exec.prompt) t = uint32_t(rng.next_below(ToyModel::kVocab));
    return exec;
}

}  // namespace

TEST_CASE("prng: xoshiro256++ reference outputs") {
    // Frozen from an independent implementation of splitmix64-seeded
    // xoshiro256++ (seeds 42 and 0).
    PrngState p = PrngState::seeded(42);
    CHECK(p.next_u64() == 0xd0764d4f4476689fULL);
    CHECK(p.next_u64() == 0x519e4174576f3791ULL);
    CHECK(p.next_u64() == 0xfbe07cfb0c24ed8cULL);
    CHECK(p.next_u64() == 0xb37d9f600cd835b8ULL);

    PrngState z = PrngState::seeded(0);
    CHECK(z.next_u64() == 0x53175d61490b23dfULL);
    CHECK(z.next_u64() == 0x61da6f3dc380d507ULL);
}

TEST_CASE("prng: equal seeds give equal streams, unit floats in range") {
    PrngState a = PrngState::seeded(7);
    PrngState b = PrngState::seeded(7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    PrngState c = PrngState::seeded(9);
    for (int i = 0; i < 1000; ++i) {
        float u = c.next_unit_f32();
        CHECK(u >= 0.0f);
        CHECK(u < 1.0f);
        float s = c.next_symmetric_f32();
        CHECK(s >= -1.0f);
        CHECK(s < 1.0f);
    }
}

TEST_CASE("canonical_reduce: empty and singleton") {
    CHECK(canonical_reduce({}, kTree) == 0.0f);
    CHECK(canonical_reduce({}, kSeq) == 0.0f);
    for (float x : {1.5f, -2.25f, 1e-30f, 3.4e38f}) {
        std::vector<float> v{x};
        CHECK(bits_equal(canonical_reduce(v, kTree), x));
        CHECK(bits_equal(canonical_reduce(v, kSeq), x));
    }
}

TEST_CASE("canonical_reduce: tree vs sequential rounding witness") {
    // Hand-evaluated in 32-bit arithmetic:
    //   tree       (1e8 + 1) + (-1e8 + 1) = 1e8 + (-1e8) = 0
    //   sequential ((1e8 + 1) - 1e8) + 1  = 0 + 1         = 1
    std::vector<float> v{1e8f, 1.0f, -1e8f, 1.0f};
    float tree = canonical_reduce(v, kTree);
    float seq = canonical_reduce(v, kSeq);
    CHECK(tree == 0.0f);
    CHECK(seq == 1.0f);
    CHECK(!bits_equal(tree, seq));
}

TEST_CASE("canonical_reduce: identical profiles always agree") {
    PrngState rng = PrngState::seeded(11);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 1 + rng.next_below(33);
        std::vector<float> v(n);
        for (auto& x : v) x = std::ldexp(rng.next_symmetric_f32(), int(rng.next_below(9)) - 4);
        ArchProfile copy_tree = kTree;
        ArchProfile copy_seq = kSeq;
        CHECK(bits_equal(canonical_reduce(v, kTree), canonical_reduce(v, copy_tree)));
        CHECK(bits_equal(canonical_reduce(v, kSeq), canonical_reduce(v, copy_seq)));
    }
}

TEST_CASE("canonical_reduce: non-finite rejected") {
    std::vector<float> nan_v{1.0f, std::nanf("")};
    std::vector<float> inf_v{1.0f, INFINITY};
    CHECK_THROWS_AS(canonical_reduce(nan_v, kTree), std::invalid_argument);
    CHECK_THROWS_AS(canonical_reduce(inf_v, kSeq), std::invalid_argument);
}

TEST_CASE("det_matvec: identity is exact") {
    PrngState rng = PrngState::seeded(3);
    const size_t n = 8;
    std::vector<float> eye(n * n, 0.0f);
    for (size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0f;
    std::vector<float> v(n);
    for (auto& x : v) x = rng.next_symmetric_f32() * 100.0f;
    for (const auto& profile : {kTree, kSeq, kSeqFused}) {
        auto out = det_matvec(eye, n, n, v, profile);
        for (size_t i = 0; i < n; ++i) CHECK(bits_equal(out[i], v[i]));
    }
}

TEST_CASE("det_matvec: ones row reduces exactly like canonical_reduce") {
    std::vector<float> ones(4, 1.0f);
    std::vector<float> v{1e8f, 1.0f, -1e8f, 1.0f};
    for (const auto& profile : {kTree, kSeq, kSeqFused}) {
        auto out = det_matvec(ones, 1, 4, v, profile);
        CHECK(bits_equal(out[0], canonical_reduce(v, profile)));
    }
}

TEST_CASE("det_matvec: repeated runs are bit-identical") {
    PrngState rng = PrngState::seeded(17);
    std::vector<float> m(64), v(8);
    for (auto& x : m) x = std::ldexp(rng.next_symmetric_f32(), int(rng.next_below(7)) - 3);
    for (auto& x : v) x = std::ldexp(rng.next_symmetric_f32(), int(rng.next_below(7)) - 3);
    for (const auto& profile : {kTree, kSeq, kSeqFused}) {
        auto first = det_matvec(m, 8, 8, v, profile);
        for (int run = 0; run < 1000; ++run) {
            auto again = det_matvec(m, 8, 8, v, profile);
            REQUIRE(again.size() == first.size());
            for (size_t i = 0; i < first.size(); ++i) REQUIRE(bits_equal(again[i], first[i]));
        }
    }
}

TEST_CASE("det_matvec: dimension mismatch rejected") {
    std::vector<float> m(6, 1.0f), v(4, 1.0f);
    CHECK_THROWS_AS(det_matvec(m, 2, 3, v, kTree), std::invalid_argument);
}

TEST_CASE("det_softmax: symmetry, singleton, extended-precision oracle") {
    std::vector<float> equal{2.5f, 2.5f, 2.5f, 2.5f};
    auto probs = det_softmax(equal);
    for (float p : probs) CHECK(ulp_distance(p, 0.25f) <= 1);

    std::vector<float> single{0.0f};
    CHECK(det_softmax(single) == std::vector<float>{1.0f});

    std::vector<float> logits{1.0f, 2.0f, 3.0f};
    auto out = det_softmax(logits);
    // 64-bit reference softmax
    double m = 3.0;
    double e0 = std::exp(1.0 - m), e1 = std::exp(2.0 - m), e2 = std::exp(3.0 - m);
    double s = e0 + e1 + e2;
    CHECK(ulp_distance(out[0], float(e0 / s)) <= 2);
    CHECK(ulp_distance(out[1], float(e1 / s)) <= 2);
    CHECK(ulp_distance(out[2], float(e2 / s)) <= 2);
}

TEST_CASE("det_softmax: outputs in [0,1], sum within 4 ulps of 1") {
    PrngState rng = PrngState::seeded(23);
    for (int trial = 0; trial < 500; ++trial) {
        size_t n = 1 + rng.next_below(64);
        std::vector<float> logits(n);
        for (auto& x : logits) x = rng.next_symmetric_f32() * 30.0f;
        auto probs = det_softmax(logits);
        double sum = 0.0;
        for (float p : probs) {
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
            sum += double(p);
        }
        CHECK(ulp_distance(float(sum), 1.0f) <= 4);
    }
}

TEST_CASE("det_softmax: empty rejected") {
    CHECK_THROWS_AS(det_softmax({}), std::invalid_argument);
}

TEST_CASE("decode: greedy argmax and smallest-index tie-break") {
    std::vector<float> p1{0.1f, 0.9f};
    CHECK(decode_with_draw(p1, DecodePolicy::greedy(1), 0.0f) == 1);
    std::vector<float> p2{0.5f, 0.5f};
    CHECK(decode_with_draw(p2, DecodePolicy::greedy(1), 0.0f) == 0);
}

TEST_CASE("decode: cumulative rule, hand-worked") {
    // cumulative 0.5 < 0.6 <= 0.8 -> token 1
    std::vector<float> probs{0.5f, 0.3f, 0.2f};
    CHECK(decode_with_draw(probs, DecodePolicy::top_k(3, 1), 0.6f) == 1);
    CHECK(decode_with_draw(probs, DecodePolicy::top_k(3, 1), 0.4f) == 0);
    CHECK(decode_with_draw(probs, DecodePolicy::top_k(3, 1), 0.95f) == 2);
    // r = 0.5 hits the first inclusive boundary
    CHECK(decode_with_draw(probs, DecodePolicy::top_k(3, 1), 0.5f) == 0);
}

TEST_CASE("decode: top_k truncation and renormalization") {
    std::vector<float> probs{0.05f, 0.5f, 0.2f, 0.25f};
    // k=1 keeps only the argmax regardless of draw
    for (float r : {0.0f, 0.5f, 0.999f}) {
        CHECK(decode_with_draw(probs, DecodePolicy::top_k(1, 1), r) == 1);
    }
    // k=2 keeps {1, 3}; renormalized mass 0.5/0.75 ~ 0.667
    CHECK(decode_with_draw(probs, DecodePolicy::top_k(2, 1), 0.5f) == 1);
    CHECK(decode_with_draw(probs, DecodePolicy::top_k(2, 1), 0.9f) == 3);
}

TEST_CASE("decode: nucleus keeps smallest prefix reaching p") {
    std::vector<float> probs{0.6f, 0.3f, 0.1f};
    // p=0.5: nucleus is {0} only
    for (float r : {0.1f, 0.9f}) {
        CHECK(decode_with_draw(probs, DecodePolicy::nucleus(0.5f, 1), r) == 0);
    }
    // p=0.85: nucleus is {0,1}
    CHECK(decode_with_draw(probs, DecodePolicy::nucleus(0.85f, 1), 0.9f) == 1);
    // p=1.0: full distribution
    CHECK(decode_with_draw(probs, DecodePolicy::nucleus(1.0f, 1), 0.99f) == 2);
}

TEST_CASE("decode: zero mass after truncation rejected") {
    std::vector<float> zeros{0.0f, 0.0f, 0.0f};
    CHECK_THROWS_AS(decode_with_draw(zeros, DecodePolicy::top_k(2, 1), 0.5f),
                    std::invalid_argument);
}

TEST_CASE("decode: policy validation") {
    DecodePolicy bad_top_k;
    bad_top_k.kind = DecodeKind::top_k;  // k missing
    CHECK(!bad_top_k.validate().empty());
    DecodePolicy bad_nucleus;
    bad_nucleus.kind = DecodeKind::nucleus;
    bad_nucleus.p = 1.5f;
    CHECK(!bad_nucleus.validate().empty());
    DecodePolicy greedy_with_k = DecodePolicy::greedy(4);
    greedy_with_k.k = 2;
    CHECK(!greedy_with_k.validate().empty());
    CHECK(DecodePolicy::top_k(40, 8).validate().empty());
}

TEST_CASE("decode_step: generator advances exactly once per token, any policy") {
    std::vector<float> probs{0.25f, 0.25f, 0.25f, 0.25f};
    for (const auto& policy :
         {DecodePolicy::greedy(1), DecodePolicy::top_k(2, 1), DecodePolicy::nucleus(0.9f, 1)}) {
        PrngState prng = PrngState::seeded(99);
        PrngState reference = PrngState::seeded(99);
        for (int steps = 1; steps <= 16; ++steps) {
            auto step = decode_step(probs, policy, prng);
            prng = step.prng;
            reference.next_u64();
            REQUIRE(prng.state() == reference.state());
        }
    }
}

TEST_CASE("infer: repeated runs byte-identical, hash match") {
    ExecutionTuple exec = sample_exec(1234, "archA", 8, 6);
    auto first = infer(exec);
    for (int i = 0; i < 20; ++i) {
        auto again = infer(exec);
        REQUIRE(again.canonical_bytes == first.canonical_bytes);
        REQUIRE(sha256(again.canonical_bytes) == sha256(first.canonical_bytes));
    }
}

TEST_CASE("infer: distinct reduction profiles diverge on a nontrivial prompt") {
    ExecutionTuple a = sample_exec(777, "archA", 10, 6);
    ExecutionTuple b = a;
    b.arch = "archB";
    auto out_a = infer(a);
    auto out_b = infer(b);
    CHECK(out_a.canonical_bytes != out_b.canonical_bytes);
}

TEST_CASE("infer: max_tokens = 0 gives empty output") {
    ExecutionTuple exec = sample_exec(5, "archA", 4, 6);
    exec.decode_policy = DecodePolicy::greedy(0);
    auto out = infer(exec);
    CHECK(out.tokens.empty());
    CHECK(out.logits_trace.empty());
    auto decoded = decode_canonical_output(out.canonical_bytes);
    REQUIRE(decoded);
    CHECK(decoded->tokens.empty());
}

TEST_CASE("infer: malformed inputs rejected") {
    ExecutionTuple exec = sample_exec(5, "archZ", 4, 4);
    CHECK_THROWS_AS(infer(exec), std::invalid_argument);

    exec = sample_exec(5, "archA", 4, 4);
    exec.decode_policy.kind = DecodeKind::nucleus;  // p missing
    exec.decode_policy.k.reset();
    exec.decode_policy.p.reset();
    CHECK_THROWS_AS(infer(exec), std::invalid_argument);

    exec = sample_exec(5, "archA", 4, 4);
    exec.prompt[0] = ToyModel::kVocab + 3;
    CHECK_THROWS_AS(infer(exec), std::invalid_argument);
}

TEST_CASE("infer: canonical bytes round-trip and idempotent re-encode") {
    ExecutionTuple exec = sample_exec(31337, "archB", 6, 5);
    auto out = infer(exec);
    auto decoded = decode_canonical_output(out.canonical_bytes);
    REQUIRE(decoded);
    CHECK(decoded->tokens == out.tokens);
    REQUIRE(decoded->logits_trace.size() == out.logits_trace.size());
    for (size_t s = 0; s < out.logits_trace.size(); ++s) {
        REQUIRE(decoded->logits_trace[s].size() == out.logits_trace[s].size());
        for (size_t i = 0; i < out.logits_trace[s].size(); ++i) {
            CHECK(bits_equal(decoded->logits_trace[s][i], out.logits_trace[s][i]));
        }
    }
    CHECK(encode_canonical_output(decoded->tokens, decoded->logits_trace) == out.canonical_bytes);
}

TEST_CASE("infer: determinism over randomized tuples") {
    PrngState rng = PrngState::seeded(2024);
    for (int trial = 0; trial < 60; ++trial) {
        ExecutionTuple exec =
            sample_exec(rng.next_u64(), trial % 2 == 0 ? "archA" : "archB",
                        2 + uint32_t(rng.next_below(8)), 1 + uint32_t(rng.next_below(5)));
        auto first = infer(exec);
        auto second = infer(exec);
        auto third = infer(exec);
        REQUIRE(first.canonical_bytes == second.canonical_bytes);
        REQUIRE(first.canonical_bytes == third.canonical_bytes);
    }
}

TEST_CASE("infer_batch: per-prompt bytes identical across batch groupings") {
    PrngState rng = PrngState::seeded(404);
    std::vector<ExecutionTuple> execs;
    for (int i = 0; i < 24; ++i) {
        execs.push_back(sample_exec(rng.next_u64(), i % 2 == 0 ? "archA" : "archB",
                                    3 + uint32_t(rng.next_below(6)),
                                    1 + uint32_t(rng.next_below(6))));
    }
    std::vector<Bytes> singles;
    for (const auto& exec : execs) singles.push_back(infer(exec).canonical_bytes);

    for (size_t batch : {size_t(1), size_t(4), size_t(8), size_t(6), size_t(10)}) {
        auto results = infer_batch(execs, batch);
        REQUIRE(results.size() == execs.size());
        for (size_t i = 0; i < execs.size(); ++i) {
            REQUIRE(results[i].canonical_bytes == singles[i]);
        }
    }
}
