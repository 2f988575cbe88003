#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "verinf/protocol.hpp"
#include "verinf/sha256.hpp"

using namespace verinf;
using namespace verinf::protocol;

namespace {

struct TestWorld {
    da::Store store;
    privacy::AttestationRoot root{sha256(to_bytes("test-att-root"))};
    Hash32 container = sha256(to_bytes("container-test"));
    std::unique_ptr<privacy::Kms> kms;
    privacy::TaintLog taint;
    std::unique_ptr<Engine> engine;
    std::vector<Event> events;

    explicit TestWorld(ProtocolParams params = {}, uint32_t honest_verifiers = 3,
                       uint32_t colluding_uphold = 0, uint32_t colluding_reject = 0,
                       uint32_t offline = 0) {
        privacy::KmsPolicy kms_policy;
        kms_policy.threshold = 2;
        kms_policy.shard_count = 3;
        kms_policy.approved_measurements = {
            privacy::measurement_of(container, kEnclaveCodeVersion)};
        kms = std::make_unique<privacy::Kms>(kms_policy, &root, 77);

        receipts::Registry registry;
        registry.containers = {container};

        EngineConfig config;
        config.params = params;
        engine = std::make_unique<Engine>(config, &store, kms.get(), &root, &taint, registry,
                                          [this](const Event& ev) { events.push_back(ev); });
        uint32_t v = 0;
        for (uint32_t i = 0; i < honest_verifiers; ++i, ++v) {
            engine->register_verifier("ver-" + std::to_string(v), 100, VerifierBehavior::honest);
        }
        for (uint32_t i = 0; i < colluding_uphold; ++i, ++v) {
            engine->register_verifier("ver-" + std::to_string(v), 100,
                                      VerifierBehavior::colluding_uphold);
        }
        for (uint32_t i = 0; i < colluding_reject; ++i, ++v) {
            engine->register_verifier("ver-" + std::to_string(v), 100,
                                      VerifierBehavior::colluding_reject);
        }
        for (uint32_t i = 0; i < offline; ++i, ++v) {
            engine->register_verifier("ver-" + std::to_string(v), 100, VerifierBehavior::offline);
        }
    }

    detcore::ExecutionTuple make_exec(uint64_t seed) {
        detcore::ExecutionTuple exec;
        exec.model_id = "model-t";
        exec.container_digest = container;
        exec.arch = "archA";
        exec.driver_tag = "drv-1";
        exec.decode_policy = detcore::DecodePolicy::top_k(4, 3);
        exec.seed = seed;
        detcore::PrngState rng = detcore::PrngState::seeded(seed);
        exec.prompt.resize(5);
        for (auto& t : exec.prompt) t = uint32_t(rng.next_below(detcore::ToyModel::kVocab));
        return exec;
    }
};

}  // namespace

TEST_CASE("params validation") {
    ProtocolParams p;
    CHECK(p.validate().empty());
    p.tau = 0.0;
    CHECK(!p.validate().empty());
    p = {};
    p.alpha = 0.7;
    p.beta = 0.4;
    CHECK(!p.validate().empty());
    p = {};
    p.s_slash = 0;
    CHECK(!p.validate().empty());
}

TEST_CASE("decide_outcome: inclusive threshold") {
    CHECK(decide_outcome(2, 3, 2.0 / 3.0) == ChallengeVerdict::Outcome::upheld);
    CHECK(decide_outcome(1, 3, 2.0 / 3.0) == ChallengeVerdict::Outcome::slashed);
    CHECK(decide_outcome(6, 9, 2.0 / 3.0) == ChallengeVerdict::Outcome::upheld);
    CHECK(decide_outcome(5, 9, 2.0 / 3.0) == ChallengeVerdict::Outcome::slashed);
}

TEST_CASE("decide_outcome: exhaustive 3..9 against a rational oracle") {
    for (size_t size = 3; size <= 9; ++size) {
        for (size_t ones = 0; ones <= size; ++ones) {
            bool oracle_upheld = 3 * ones >= 2 * size;  // tally >= 2/3 exactly
            auto outcome = decide_outcome(ones, size, 2.0 / 3.0);
            REQUIRE((outcome == ChallengeVerdict::Outcome::upheld) == oracle_upheld);
        }
    }
}

TEST_CASE("sample_committee: deterministic, stake-weighted, validated") {
    std::vector<uint64_t> stakes{10, 20, 30, 40};
    auto a = sample_committee(stakes, 2, 99);
    auto b = sample_committee(stakes, 2, 99);
    CHECK(a == b);
    auto c = sample_committee(stakes, 2, 100);
    CHECK(a != c);  // different seed, different draw (holds for these values)

    std::vector<uint64_t> solo{0, 100, 0};
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto pick = sample_committee(solo, 1, seed);
        REQUIRE(pick == std::vector<size_t>{1});
    }

    CHECK_THROWS_AS(sample_committee({}, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(sample_committee(stakes, 5, 0), std::invalid_argument);
}

TEST_CASE("sample_committee: equal stakes give uniform inclusion within 3 sigma") {
    const size_t population = 10, size = 3, draws = 100000;
    std::vector<uint64_t> stakes(population, 50);
    std::vector<size_t> counts(population, 0);
    for (size_t d = 0; d < draws; ++d) {
        for (size_t idx : sample_committee(stakes, size, d)) ++counts[idx];
    }
    double expected = double(draws) * size / population;
    double sigma = std::sqrt(double(draws) * (double(size) / population) *
                             (1.0 - double(size) / population));
    for (size_t i = 0; i < population; ++i) {
        INFO("verifier ", i, " count ", counts[i]);
        CHECK(std::fabs(double(counts[i]) - expected) <= 3.0 * sigma);
    }
}

TEST_CASE("submit: honest operator produces a pending, verifying submission") {
    TestWorld w;
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    uint64_t id = w.engine->submit("op-h", w.make_exec(5), 0);
    w.store.advance_slot();
    const Submission& sub = w.engine->submission(id);
    CHECK(sub.status == SubmissionStatus::pending);
    CHECK(!sub.fault_injected);
    std::string why;
    CHECK(receipts::verify_receipt(sub.receipt, w.engine->operator_pubkey("op-h"),
                                   w.engine->registry(), &why));
    CHECK(sub.receipt.att_quote.has_value());
    // receipt commits to the honest output
    auto honest = detcore::infer(sub.exec);
    CHECK(sub.receipt.out_hash == receipts::hash_commit(honest.canonical_bytes));
}

TEST_CASE("submit: falsifying operator commits to a different out_hash") {
    TestWorld w;
    w.engine->register_operator("op-f", 1000, OperatorBehavior::falsify_output, 2);
    uint64_t id = w.engine->submit("op-f", w.make_exec(6), 0);
    const Submission& sub = w.engine->submission(id);
    CHECK(sub.fault_injected);
    auto honest = detcore::infer(sub.exec);
    CHECK(sub.receipt.out_hash != receipts::hash_commit(honest.canonical_bytes));
    // but the receipt signature itself is valid
    CHECK(receipts::verify_receipt(sub.receipt, w.engine->operator_pubkey("op-f"),
                                   w.engine->registry()));
}

TEST_CASE("submit: zero stake and unapproved environments rejected") {
    TestWorld w;
    w.engine->register_operator("op-z", 0, OperatorBehavior::honest, 3);
    CHECK_THROWS_AS(w.engine->submit("op-z", w.make_exec(7), 0), std::invalid_argument);
    CHECK_THROWS_AS(w.engine->submit("nobody", w.make_exec(7), 0), std::invalid_argument);

    w.engine->register_operator("op-a", 100, OperatorBehavior::honest, 4);
    auto bad_arch = w.make_exec(8);
    bad_arch.arch = "archZ";
    CHECK_THROWS_AS(w.engine->submit("op-a", bad_arch, 0), std::invalid_argument);
    auto bad_container = w.make_exec(9);
    bad_container.container_digest = sha256(to_bytes("unregistered"));
    CHECK_THROWS_AS(w.engine->submit("op-a", bad_container, 0), std::invalid_argument);
}

TEST_CASE("light audit: honest matches, falsified mismatches, withheld unavailable") {
    TestWorld w;
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    w.engine->register_operator("op-f", 1000, OperatorBehavior::falsify_output, 2);
    w.engine->register_operator("op-w", 1000, OperatorBehavior::withhold_da, 3);
    uint64_t honest = w.engine->submit("op-h", w.make_exec(10), 0);
    uint64_t falsified = w.engine->submit("op-f", w.make_exec(11), 0);
    uint64_t withheld = w.engine->submit("op-w", w.make_exec(12), 0);
    w.store.advance_slot();

    auto reports = w.engine->light_audit(honest, {"ver-0", "ver-1"}, 0);
    REQUIRE(reports.size() == 2);
    for (const auto& r : reports) CHECK(r.result == AuditReport::Result::match);

    reports = w.engine->light_audit(falsified, {"ver-0"}, 0);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].result == AuditReport::Result::mismatch);
    CHECK(reports[0].detail == "output-mismatch");

    reports = w.engine->light_audit(withheld, {"ver-0"}, 0);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].result == AuditReport::Result::unavailable);

    // audits never move stake
    CHECK(w.engine->stake_of("op-f") == 1000);
    CHECK(w.engine->stake_of("ver-0") == 100);
}

TEST_CASE("full challenge: honest operator upheld with unanimous votes") {
    TestWorld w;
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    uint64_t id = w.engine->submit("op-h", w.make_exec(20), 0);
    w.store.advance_slot();
    auto verdict = w.engine->full_challenge(id, "challenger", 1);
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::upheld);
    CHECK(verdict.tally == 1.0);
    for (const auto& vote : verdict.committee) CHECK(vote.vote);
    CHECK(verdict.majority_output_hash == w.engine->submission(id).receipt.out_hash);
    CHECK(w.engine->submission(id).status == SubmissionStatus::finalized);
    CHECK(w.engine->stake_of("op-h") == 1000);
}

TEST_CASE("full challenge: votes are identical across honest verifiers") {
    TestWorld w(ProtocolParams{}, 3);
    w.engine->register_operator("op-f", 1000, OperatorBehavior::falsify_output, 9);
    uint64_t id = w.engine->submit("op-f", w.make_exec(21), 0);
    w.store.advance_slot();
    auto verdict = w.engine->full_challenge(id, "challenger", 1);
    REQUIRE(verdict.committee.size() == 3);
    for (const auto& vote : verdict.committee) {
        CHECK(vote.vote == verdict.committee[0].vote);
        CHECK(vote.reexec_hash == verdict.committee[0].reexec_hash);
    }
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::slashed);
    CHECK(verdict.majority_output_hash != w.engine->submission(id).receipt.out_hash);
}

TEST_CASE("full challenge: tally 2/3 upholds at tau=2/3 (votes 1,1,0)") {
    TestWorld w(ProtocolParams{}, 2, 0, 1, 0);  // 2 honest + 1 colluding_reject
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    uint64_t id = w.engine->submit("op-h", w.make_exec(22), 0);
    w.store.advance_slot();
    auto verdict = w.engine->full_challenge(id, "challenger", 1);
    size_t ones = 0;
    for (const auto& vote : verdict.committee) ones += vote.vote ? 1 : 0;
    CHECK(ones == 2);
    CHECK(verdict.tally == doctest::Approx(2.0 / 3.0));
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::upheld);
    CHECK(w.engine->stake_of("op-h") == 1000);
}

TEST_CASE("full challenge: colluding minority cannot shield fraud") {
    TestWorld w(ProtocolParams{}, 2, 1, 0, 0);  // 2 honest + 1 colluding_uphold
    w.engine->register_operator("op-f", 1000, OperatorBehavior::falsify_output, 5);
    uint64_t id = w.engine->submit("op-f", w.make_exec(23), 0);
    w.store.advance_slot();
    auto verdict = w.engine->full_challenge(id, "challenger", 1);
    CHECK(verdict.tally == doctest::Approx(1.0 / 3.0));
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::slashed);
}

TEST_CASE("full challenge: abstentions count against upholding") {
    TestWorld w(ProtocolParams{}, 1, 0, 0, 2);  // 1 honest + 2 offline
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    uint64_t id = w.engine->submit("op-h", w.make_exec(24), 0);
    w.store.advance_slot();
    auto verdict = w.engine->full_challenge(id, "challenger", 1);
    CHECK(verdict.tally == doctest::Approx(1.0 / 3.0));
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::slashed);  // conservative rule
}

TEST_CASE("full challenge: replayed receipt detected via request binding") {
    TestWorld w;
    w.engine->register_operator("op-r", 1000, OperatorBehavior::replay_stale_receipt, 6);
    uint64_t first = w.engine->submit("op-r", w.make_exec(30), 0);
    w.store.advance_slot();
    CHECK(!w.engine->submission(first).fault_injected);  // first request executed honestly
    uint64_t second = w.engine->submit("op-r", w.make_exec(31), 1);
    w.store.advance_slot();
    const Submission& replayed = w.engine->submission(second);
    CHECK(replayed.fault_injected);
    CHECK(replayed.receipt.req_hash !=
          receipts::hash_commit(codec::encode_execution_tuple(replayed.exec)));
    auto verdict = w.engine->full_challenge(second, "challenger", 1);
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::slashed);
}

TEST_CASE("full challenge: withheld DA record is an availability fault against the operator") {
    TestWorld w;
    w.engine->register_operator("op-w", 1000, OperatorBehavior::withhold_da, 7);
    uint64_t id = w.engine->submit("op-w", w.make_exec(32), 0);
    w.store.advance_slot();
    auto verdict = w.engine->full_challenge(id, "challenger", 1);
    CHECK(verdict.availability_fault);
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::slashed);
    CHECK(w.engine->stake_of("op-w") == 900);
}

TEST_CASE("full challenge: window expiry and terminal status rejected") {
    ProtocolParams params;
    params.delta = 2;
    TestWorld w(params);
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    uint64_t id = w.engine->submit("op-h", w.make_exec(40), 0);
    w.store.advance_slot();
    CHECK_THROWS_AS(w.engine->full_challenge(id, "challenger", 3), std::invalid_argument);
    // challenge inside the window still fine at now == published_at + delta
    auto verdict = w.engine->full_challenge(id, "challenger", 2);
    CHECK(verdict.outcome == ChallengeVerdict::Outcome::upheld);
    CHECK_THROWS_AS(w.engine->full_challenge(id, "challenger", 2), std::invalid_argument);
}

TEST_CASE("slash distribution: 100 at alpha=0.2, beta=0.3 -> 20/30/50") {
    ProtocolParams params;  // defaults: alpha .2, beta .3, s_slash 100
    TestWorld w(params);
    w.engine->register_operator("op-f", 1000, OperatorBehavior::falsify_output, 8);
    uint64_t id = w.engine->submit("op-f", w.make_exec(50), 0);
    w.store.advance_slot();
    uint64_t before = w.engine->stake_plus_burned();
    w.engine->full_challenge(id, "challenger", 1);
    const auto& dist = *w.engine->last_slash();
    CHECK(dist.total == 100);
    CHECK(dist.challenger_reward == 20);
    uint64_t committee_total = 0;
    for (const auto& [_, amount] : dist.committee_rewards) committee_total += amount;
    CHECK(committee_total == 30);
    CHECK(dist.burned == 50);
    CHECK(!dist.capped);
    CHECK(w.engine->stake_of("op-f") == 900);
    CHECK(w.engine->stake_of("challenger") == 20);
    CHECK(w.engine->stake_plus_burned() == before);
}

TEST_CASE("slash distribution: alpha=beta=0 burns everything") {
    ProtocolParams params;
    params.alpha = 0.0;
    params.beta = 0.0;
    TestWorld w(params);
    w.engine->register_operator("op-f", 500, OperatorBehavior::falsify_output, 9);
    uint64_t id = w.engine->submit("op-f", w.make_exec(51), 0);
    w.store.advance_slot();
    w.engine->full_challenge(id, "challenger", 1);
    const auto& dist = *w.engine->last_slash();
    CHECK(dist.challenger_reward == 0);
    CHECK(dist.committee_rewards.empty());
    CHECK(dist.burned == 100);
}

TEST_CASE("slash distribution: insufficient stake caps and flags") {
    ProtocolParams params;
    params.s_slash = 100;
    TestWorld w(params);
    w.engine->register_operator("op-f", 60, OperatorBehavior::falsify_output, 10);
    uint64_t id = w.engine->submit("op-f", w.make_exec(52), 0);
    w.store.advance_slot();
    uint64_t before = w.engine->stake_plus_burned();
    w.engine->full_challenge(id, "challenger", 1);
    const auto& dist = *w.engine->last_slash();
    CHECK(dist.total == 60);
    CHECK(dist.capped);
    CHECK(w.engine->stake_of("op-f") == 0);
    CHECK(w.engine->stake_plus_burned() == before);
}

TEST_CASE("slash conservation over randomized parameters") {
    detcore::PrngState rng = detcore::PrngState::seeded(1717);
    for (int trial = 0; trial < 10; ++trial) {
        ProtocolParams params;
        params.alpha = double(rng.next_below(50)) / 100.0;
        params.beta = double(rng.next_below(100 - uint64_t(params.alpha * 100))) / 100.0;
        params.s_slash = 1 + rng.next_below(500);
        TestWorld w(params);
        w.engine->register_operator("op-f", 1 + rng.next_below(1000),
                                    OperatorBehavior::falsify_output, rng.next_u64());
        uint64_t id = w.engine->submit("op-f", w.make_exec(rng.next_u64()), 0);
        w.store.advance_slot();
        uint64_t before = w.engine->stake_plus_burned();
        w.engine->full_challenge(id, "challenger", 1);
        const auto& dist = *w.engine->last_slash();
        uint64_t committee_total = 0;
        for (const auto& [_, amount] : dist.committee_rewards) committee_total += amount;
        REQUIRE(dist.challenger_reward + committee_total + dist.burned == dist.total);
        REQUIRE(w.engine->stake_plus_burned() == before);
    }
}

TEST_CASE("finalize_expired: windows close, upheld challenges finalize early") {
    ProtocolParams params;
    params.delta = 2;
    TestWorld w(params);
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    uint64_t early = w.engine->submit("op-h", w.make_exec(60), 0);
    w.store.advance_slot();
    CHECK(w.engine->finalize_expired(1).empty());
    CHECK(w.engine->finalize_expired(2).empty());  // published_at + delta == now: still open
    auto done = w.engine->finalize_expired(3);
    REQUIRE(done.size() == 1);
    CHECK(done[0] == early);
    CHECK(w.engine->submission(early).status == SubmissionStatus::finalized);
    // repeated finalization is a no-op
    CHECK(w.engine->finalize_expired(10).empty());
}

TEST_CASE("finalize_expired: delta=0 finalizes at the next tick") {
    ProtocolParams params;
    params.delta = 0;
    TestWorld w(params);
    w.engine->register_operator("op-h", 1000, OperatorBehavior::honest, 1);
    uint64_t id = w.engine->submit("op-h", w.make_exec(61), 0);
    w.store.advance_slot();
    auto done = w.engine->finalize_expired(1);
    REQUIRE(done.size() == 1);
    CHECK(done[0] == id);
}

TEST_CASE("status machine: slashed submissions never leave slashed") {
    TestWorld w;
    w.engine->register_operator("op-f", 1000, OperatorBehavior::falsify_output, 11);
    uint64_t id = w.engine->submit("op-f", w.make_exec(62), 0);
    w.store.advance_slot();
    w.engine->full_challenge(id, "challenger", 1);
    CHECK(w.engine->submission(id).status == SubmissionStatus::slashed);
    CHECK(w.engine->finalize_expired(100).empty());
    CHECK(w.engine->submission(id).status == SubmissionStatus::slashed);
}

TEST_CASE("events: submission and challenge emit the expected kinds") {
    TestWorld w;
    w.engine->register_operator("op-f", 1000, OperatorBehavior::falsify_output, 12);
    uint64_t id = w.engine->submit("op-f", w.make_exec(63), 0);
    w.store.advance_slot();
    w.engine->full_challenge(id, "challenger", 1);
    w.engine->finalize_expired(9);
    std::vector<std::string> kinds;
    for (const auto& ev : w.events) kinds.push_back(ev.kind);
    auto has = [&](const char* k) {
        return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
    };
    CHECK(has("submit"));
    CHECK(has("publish"));
    CHECK(has("challenge"));
    CHECK(has("vote"));
    CHECK(has("slash"));
}
