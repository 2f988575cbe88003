#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "verinf/da.hpp"
#include "verinf/detcore.hpp"
#include "verinf/privacy.hpp"
#include "verinf/receipts.hpp"

// The optimistic protocol state machine: operator submission, challenge
// window management, light audits, stake-weighted committee sampling,
// byte-equality voting, finalization, and slashing.

namespace verinf::protocol {

inline constexpr std::string_view kEnclaveCodeVersion = "enclave-v1";

struct ProtocolParams {
    uint64_t delta = 2;      // challenge window in epochs
    double tau = 2.0 / 3.0;  // uphold-vote threshold fraction (inclusive)
    uint32_t committee_size = 3;
    uint32_t light_audit_size = 2;
    double alpha = 0.2;     // challenger reward fraction of the slash
    double beta = 0.3;      // committee reward fraction of the slash
    uint64_t s_slash = 100;  // slash amount in stake units

    // Empty on success, otherwise the first violated constraint.
    std::string validate() const;
};

enum class OperatorBehavior : uint8_t {
    honest,
    falsify_output,        // corrupt output bytes before hashing and encryption
    substitute_container,  // run different weights than the committed container
    replay_stale_receipt,  // republish the previous record for a new request
    withhold_da,           // publish, then censor the DA record
};

enum class VerifierBehavior : uint8_t {
    honest,
    colluding_uphold,  // votes 1 regardless of re-execution
    colluding_reject,  // votes 0 regardless of re-execution
    offline,           // abstains; counts against upholding
};

const char* operator_behavior_name(OperatorBehavior b);
const char* verifier_behavior_name(VerifierBehavior b);
std::optional<OperatorBehavior> operator_behavior_from(std::string_view name);
std::optional<VerifierBehavior> verifier_behavior_from(std::string_view name);

enum class SubmissionStatus : uint8_t { pending, finalized, slashed };

struct Submission {
    uint64_t id = 0;
    std::string operator_id;
    detcore::ExecutionTuple exec;  // the request this submission claims to answer
    Bytes cipher;
    receipts::Receipt receipt;
    da::DaPointer da_pointer;
    uint64_t published_at = 0;
    SubmissionStatus status = SubmissionStatus::pending;
    // Ground truth for metrics and oracles only; protocol decisions never
    // read it.
    bool fault_injected = false;
};

struct VoteRecord {
    std::string verifier_id;
    uint64_t stake = 0;
    bool vote = false;
    bool responded = true;  // false = abstained (offline)
    Hash32 reexec_hash{};   // zero when the member did not re-execute
};

struct ChallengeVerdict {
    enum class Outcome : uint8_t { upheld, slashed };

    uint64_t submission_id = 0;
    std::string challenger_id;
    std::vector<VoteRecord> committee;
    double tally = 0.0;  // fraction of committee voting to uphold
    Outcome outcome = Outcome::upheld;
    Hash32 majority_output_hash{};
    bool availability_fault = false;  // DA record unavailable during challenge
};

struct AuditReport {
    enum class Result : uint8_t { match, mismatch, unavailable };
    std::string auditor_id;
    Result result = Result::match;
    std::string detail;
};

struct SlashDistribution {
    uint64_t total = 0;  // actual slashed amount (capped at available stake)
    uint64_t challenger_reward = 0;
    std::vector<std::pair<std::string, uint64_t>> committee_rewards;
    uint64_t burned = 0;
    bool capped = false;
};

// Outcome rule shared by the engine and the acceptance oracle: upheld iff the
// fraction of uphold votes over the full committee is >= tau (inclusive, so
// exactly 2/3 upholds at tau = 2/3).
ChallengeVerdict::Outcome decide_outcome(size_t uphold_votes, size_t committee_size, double tau);

// Stake-weighted sampling without replacement: each draw picks index i with
// probability stake_i over the remaining total. Deterministic for a given
// seed. If the remaining total stake is zero, remaining slots fill in index
// order. Throws if committee_size exceeds the population or the population is
// empty.
std::vector<size_t> sample_committee(std::span<const uint64_t> stakes, uint32_t committee_size,
                                     uint64_t randomness_seed);

struct Event {
    uint64_t epoch = 0;
    std::string kind;
    nlohmann::ordered_json fields;
};
using EventSink = std::function<void(const Event&)>;

// Wires one protocol instance to its environment. All pointers must outlive
// the engine. The engine is driven single-threaded by the harness clock.
struct EngineConfig {
    ProtocolParams params;
    std::string chain_id = "sim-chain-1";
    bool operator_enclave = true;  // run operator inference inside a mock
                                   // enclave and attach its quote
};

class Engine {
public:
    Engine(EngineConfig config, da::Store* store, privacy::Kms* kms,
           const privacy::AttestationRoot* attestation_root, privacy::TaintLog* taint,
           receipts::Registry registry, EventSink sink = nullptr);

    void register_operator(const std::string& id, uint64_t stake, OperatorBehavior behavior,
                           uint64_t key_seed);
    void register_verifier(const std::string& id, uint64_t stake, VerifierBehavior behavior);
    Bytes operator_pubkey(const std::string& id) const;

    // Alg.-1 submission path; applies the operator's strategy. Throws
    // std::invalid_argument for unregistered/zero-stake operators or an
    // unapproved environment (rejected pre-publication).
    uint64_t submit(const std::string& operator_id, const detcore::ExecutionTuple& exec,
                    uint64_t now);

    // Off-protocol probabilistic re-execution; no stake changes.
    std::vector<AuditReport> light_audit(uint64_t submission_id,
                                         const std::vector<std::string>& auditor_ids, uint64_t now);

    // Full challenge: committee sampling, attested re-execution, byte-equality
    // voting, slashing on a failed tally. Throws if the submission is not
    // pending or the window has expired.
    ChallengeVerdict full_challenge(uint64_t submission_id, const std::string& challenger_id,
                                    uint64_t now);

    std::vector<uint64_t> finalize_expired(uint64_t now);

    const Submission& submission(uint64_t id) const;
    const std::map<uint64_t, Submission>& submissions() const { return submissions_; }
    const std::optional<SlashDistribution>& last_slash() const { return last_slash_; }

    uint64_t stake_of(const std::string& id) const;
    uint64_t burned() const { return burned_; }
    // Total stake across all accounts plus cumulative burn; constant over a
    // run (checked after every slash).
    uint64_t stake_plus_burned() const;

    const receipts::Registry& registry() const { return registry_; }
    const std::vector<std::string>& verifier_ids() const { return verifier_order_; }

private:
    struct OperatorState {
        uint64_t key_seed = 0;
        OperatorBehavior behavior = OperatorBehavior::honest;
        uint64_t submission_count = 0;
        std::optional<uint64_t> last_submission;  // for replay_stale_receipt
    };
    struct VerifierState {
        VerifierBehavior behavior = VerifierBehavior::honest;
    };

    void emit(uint64_t epoch, std::string kind, nlohmann::ordered_json fields);
    void check_environment(const detcore::ExecutionTuple& exec) const;
    sign::Ed25519Signer operator_signer(const std::string& id) const;
    privacy::Nonce session_nonce();

    // Opens an enclave session for the submission's container, collects t
    // shares, reconstructs, and decrypts. Empty failure string on success.
    struct SessionPlain {
        std::string failure;
        Bytes req_bytes;
        Bytes out_bytes;
    };
    SessionPlain enclave_decrypt(const Submission& sub, uint64_t now);

    SlashDistribution apply_slash(const std::string& operator_id, const std::string& challenger_id,
                                  const std::vector<VoteRecord>& committee, uint64_t now);

    EngineConfig config_;
    da::Store* store_;
    privacy::Kms* kms_;
    const privacy::AttestationRoot* attestation_root_;
    privacy::TaintLog* taint_;
    receipts::Registry registry_;
    EventSink sink_;

    std::map<std::string, uint64_t> stakes_;
    std::map<std::string, OperatorState> operators_;
    std::map<std::string, VerifierState> verifiers_;
    std::vector<std::string> verifier_order_;
    std::map<uint64_t, Submission> submissions_;
    uint64_t next_submission_id_ = 1;
    uint64_t burned_ = 0;
    uint64_t initial_total_ = 0;
    uint64_t session_counter_ = 0;
    std::optional<SlashDistribution> last_slash_;
};

}  // namespace verinf::protocol
