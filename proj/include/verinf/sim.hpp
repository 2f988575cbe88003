#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "verinf/econ.hpp"
#include "verinf/protocol.hpp"

// Deterministic discrete-event scenario runner: wires detcore, receipts, DA,
// privacy, and the protocol engine into multi-epoch simulations. A run is a
// pure function of its config; identical configs produce byte-identical
// event logs.

namespace verinf::sim {

struct ActorSpec {
    uint64_t stake = 100;
    std::string behavior = "honest";
};

struct WorkloadSpec {
    uint32_t requests_per_epoch = 4;
    uint32_t prompt_len_min = 4;
    uint32_t prompt_len_max = 8;
    uint32_t max_tokens = 4;
    std::vector<std::string> policies = {"greedy", "top_k", "nucleus"};
    std::string arch = "archA";
};

struct KmsSpec {
    uint32_t threshold = 2;
    uint32_t shards = 3;
    uint64_t freshness_window = 2;
};

// Scenario-level adversary probes (beyond operator/verifier behavior tags).
inline constexpr const char* kAdversaryTags[] = {
    "falsify_output",       "substitute_container",      "replay_stale_receipt",
    "withhold_da",          "colluding_verifiers",       "stale_quote_kms",
    "non_attested_share_request",
};

struct ScenarioConfig {
    uint64_t seed = 1;
    uint64_t epochs = 4;
    std::vector<ActorSpec> operators = {ActorSpec{1000, "honest"}};
    std::vector<ActorSpec> verifiers = {ActorSpec{100, "honest"}, ActorSpec{100, "honest"},
                                        ActorSpec{100, "honest"}};
    uint32_t clients = 2;
    WorkloadSpec workload;
    protocol::ProtocolParams params;
    econ::EconParams econ;  // pi_c drives user-initiated challenges
    double light_audit_rate = 0.1;
    std::vector<std::string> adversaries;
    bool operator_enclave = true;
    // Stress scenarios may violate the honest-supermajority committee bound;
    // soundness metrics are then not guaranteed.
    bool stress = false;
    KmsSpec kms;
    std::vector<std::string> models = {"model-a"};

    // Field-level diagnostics; empty when the config is valid.
    std::vector<std::string> validate() const;

    nlohmann::ordered_json to_json() const;
    static std::optional<ScenarioConfig> from_json(const nlohmann::json& j,
                                                   std::vector<std::string>* diagnostics = nullptr);
};

struct RunMetrics {
    uint64_t submissions = 0;
    uint64_t challenges = 0;
    uint64_t light_audits = 0;
    uint64_t frauds_injected = 0;
    uint64_t frauds_challenged = 0;
    uint64_t frauds_detected = 0;
    uint64_t false_slashes = 0;
    uint64_t availability_failures = 0;
    uint64_t plaintext_exposures = 0;
    uint64_t share_denials = 0;
    uint64_t finalized = 0;
    uint64_t burned = 0;
    std::map<std::string, uint64_t> final_stakes;

    nlohmann::ordered_json to_json() const;
};

struct RunResult {
    RunMetrics metrics;
    std::vector<std::string> event_log;  // one JSON object per line

    std::string event_log_text() const;
};

RunResult run_scenario(const ScenarioConfig& config);

struct ReplayReport {
    bool ok = false;
    size_t first_divergence_line = 0;  // 1-based; 0 when logs match
    std::string detail;
    uint64_t receipts_verified = 0;
    uint64_t proofs_verified = 0;
};

// Re-runs the scenario, compares event logs byte-for-byte, and re-verifies
// every receipt signature and DA inclusion proof the rerun produced.
ReplayReport replay_verify(const std::string& event_log_text, const ScenarioConfig& config);

}  // namespace verinf::sim
