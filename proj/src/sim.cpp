#include "verinf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "verinf/codec.hpp"
#include "verinf/prng.hpp"
#include "verinf/sha256.hpp"

namespace verinf::sim {

// ---- config ----

std::vector<std::string> ScenarioConfig::validate() const {
    std::vector<std::string> issues;
    if (epochs == 0) issues.push_back("epochs: must be positive");
    if (operators.empty()) issues.push_back("operators: at least one required");
    if (verifiers.empty()) issues.push_back("verifiers: at least one required");
    if (clients == 0) issues.push_back("clients: at least one required");
    if (models.empty()) issues.push_back("models: at least one required");
    if (workload.prompt_len_min > workload.prompt_len_max) {
        issues.push_back("workload.prompt_len_min: exceeds prompt_len_max");
    }
    if (workload.policies.empty()) issues.push_back("workload.policies: at least one required");
    for (const auto& p : workload.policies) {
        if (p != "greedy" && p != "top_k" && p != "nucleus") {
            issues.push_back("workload.policies: unknown kind '" + p + "'");
        }
    }
    if (auto err = params.validate(); !err.empty()) issues.push_back("params: " + err);
    if (auto err = econ.validate(); !err.empty()) issues.push_back("econ: " + err);
    if (light_audit_rate < 0.0 || light_audit_rate > 1.0) {
        issues.push_back("light_audit_rate: must be in [0,1]");
    }
    if (kms.threshold < 1 || kms.threshold > kms.shards) {
        issues.push_back("kms: need 1 <= threshold <= shards");
    }
    if (params.committee_size > verifiers.size()) {
        issues.push_back("params.committee_size: exceeds verifier population");
    }
    if (params.light_audit_size > verifiers.size()) {
        issues.push_back("params.light_audit_size: exceeds verifier population");
    }
    if (params.delta == 0) {
        issues.push_back("params.delta: 0 permits immediate finalization (allowed, degenerate)");
    }

    for (const auto& op : operators) {
        if (!protocol::operator_behavior_from(op.behavior)) {
            issues.push_back("operators.behavior: unknown tag '" + op.behavior + "'");
        }
    }
    size_t non_honest_verifiers = 0;
    for (const auto& v : verifiers) {
        auto b = protocol::verifier_behavior_from(v.behavior);
        if (!b) {
            issues.push_back("verifiers.behavior: unknown tag '" + v.behavior + "'");
        } else if (*b != protocol::VerifierBehavior::honest) {
            ++non_honest_verifiers;
        }
    }
    // Every sampled committee keeps an honest fraction >= tau only when the
    // total count of non-honest verifiers fits in the (1 - tau) slack.
    size_t slack = size_t(std::floor((1.0 - params.tau) * double(params.committee_size)));
    if (!stress && non_honest_verifiers > slack) {
        issues.push_back("verifiers: " + std::to_string(non_honest_verifiers) +
                         " non-honest exceeds committee slack " + std::to_string(slack) +
                         " (set stress=true to permit)");
    }
    for (const auto& tag : adversaries) {
        bool known = false;
        for (const char* t : kAdversaryTags) known = known || tag == t;
        if (!known) issues.push_back("adversaries: unknown tag '" + tag + "'");
    }
    return issues;
}

nlohmann::ordered_json ScenarioConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["epochs"] = epochs;
    auto actors = [](const std::vector<ActorSpec>& specs) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& a : specs) arr.push_back({{"stake", a.stake}, {"behavior", a.behavior}});
        return arr;
    };
    j["operators"] = actors(operators);
    j["verifiers"] = actors(verifiers);
    j["clients"] = clients;
    j["workload"] = {{"requests_per_epoch", workload.requests_per_epoch},
                     {"prompt_len_min", workload.prompt_len_min},
                     {"prompt_len_max", workload.prompt_len_max},
                     {"max_tokens", workload.max_tokens},
                     {"policies", workload.policies},
                     {"arch", workload.arch}};
    j["params"] = {{"delta", params.delta},
                   {"tau", params.tau},
                   {"committee_size", params.committee_size},
                   {"light_audit_size", params.light_audit_size},
                   {"alpha", params.alpha},
                   {"beta", params.beta},
                   {"s_slash", params.s_slash}};
    j["econ"] = {{"pi_c", econ.pi_c},
                 {"G", econ.g},
                 {"S_slash", econ.s_slash},
                 {"alpha", econ.alpha},
                 {"beta", econ.beta}};
    j["light_audit_rate"] = light_audit_rate;
    j["adversaries"] = adversaries;
    j["operator_enclave"] = operator_enclave;
    j["stress"] = stress;
    j["kms"] = {{"threshold", kms.threshold},
                {"shards", kms.shards},
                {"freshness_window", kms.freshness_window}};
    j["models"] = models;
    return j;
}

std::optional<ScenarioConfig> ScenarioConfig::from_json(const nlohmann::json& j,
                                                        std::vector<std::string>* diagnostics) {
    auto report = [&](const std::string& msg) {
        if (diagnostics != nullptr) diagnostics->push_back(msg);
    };
    if (!j.is_object()) {
        report("config: not a JSON object");
        return std::nullopt;
    }
    ScenarioConfig cfg;
    try {
        cfg.seed = j.value("seed", cfg.seed);
        cfg.epochs = j.value("epochs", cfg.epochs);
        auto parse_actors = [&](const char* key, std::vector<ActorSpec>& out) {
            if (!j.contains(key)) return;
            out.clear();
            for (const auto& a : j.at(key)) {
                ActorSpec spec;
                spec.stake = a.value("stake", spec.stake);
                spec.behavior = a.value("behavior", spec.behavior);
                out.push_back(std::move(spec));
            }
        };
        parse_actors("operators", cfg.operators);
        parse_actors("verifiers", cfg.verifiers);
        cfg.clients = j.value("clients", cfg.clients);
        if (j.contains("workload")) {
            const auto& w = j.at("workload");
            cfg.workload.requests_per_epoch =
                w.value("requests_per_epoch", cfg.workload.requests_per_epoch);
            cfg.workload.prompt_len_min = w.value("prompt_len_min", cfg.workload.prompt_len_min);
            cfg.workload.prompt_len_max = w.value("prompt_len_max", cfg.workload.prompt_len_max);
            cfg.workload.max_tokens = w.value("max_tokens", cfg.workload.max_tokens);
            if (w.contains("policies")) {
                cfg.workload.policies = w.at("policies").get<std::vector<std::string>>();
            }
            cfg.workload.arch = w.value("arch", cfg.workload.arch);
        }
        if (j.contains("params")) {
            const auto& p = j.at("params");
            cfg.params.delta = p.value("delta", cfg.params.delta);
            cfg.params.tau = p.value("tau", cfg.params.tau);
            cfg.params.committee_size = p.value("committee_size", cfg.params.committee_size);
            cfg.params.light_audit_size = p.value("light_audit_size", cfg.params.light_audit_size);
            cfg.params.alpha = p.value("alpha", cfg.params.alpha);
            cfg.params.beta = p.value("beta", cfg.params.beta);
            cfg.params.s_slash = p.value("s_slash", cfg.params.s_slash);
        }
        if (j.contains("econ")) {
            const auto& e = j.at("econ");
            cfg.econ.pi_c = e.value("pi_c", cfg.econ.pi_c);
            cfg.econ.g = e.value("G", cfg.econ.g);
            cfg.econ.s_slash = e.value("S_slash", cfg.econ.s_slash);
            cfg.econ.alpha = e.value("alpha", cfg.econ.alpha);
            cfg.econ.beta = e.value("beta", cfg.econ.beta);
        }
        cfg.light_audit_rate = j.value("light_audit_rate", cfg.light_audit_rate);
        if (j.contains("adversaries")) {
            cfg.adversaries = j.at("adversaries").get<std::vector<std::string>>();
        }
        cfg.operator_enclave = j.value("operator_enclave", cfg.operator_enclave);
        cfg.stress = j.value("stress", cfg.stress);
        if (j.contains("kms")) {
            const auto& k = j.at("kms");
            cfg.kms.threshold = k.value("threshold", cfg.kms.threshold);
            cfg.kms.shards = k.value("shards", cfg.kms.shards);
            cfg.kms.freshness_window = k.value("freshness_window", cfg.kms.freshness_window);
        }
        if (j.contains("models")) cfg.models = j.at("models").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        report(std::string("config: ") + e.what());
        return std::nullopt;
    }
    auto issues = cfg.validate();
    bool fatal = false;
    for (const auto& issue : issues) {
        report(issue);
        if (issue.find("(allowed, degenerate)") == std::string::npos) fatal = true;
    }
    if (fatal) return std::nullopt;
    return cfg;
}

nlohmann::ordered_json RunMetrics::to_json() const {
    nlohmann::ordered_json j;
    j["submissions"] = submissions;
    j["challenges"] = challenges;
    j["light_audits"] = light_audits;
    j["frauds_injected"] = frauds_injected;
    j["frauds_challenged"] = frauds_challenged;
    j["frauds_detected"] = frauds_detected;
    j["false_slashes"] = false_slashes;
    j["availability_failures"] = availability_failures;
    j["plaintext_exposures"] = plaintext_exposures;
    j["share_denials"] = share_denials;
    j["finalized"] = finalized;
    j["burned"] = burned;
    j["final_stakes"] = final_stakes;
    return j;
}

std::string RunResult::event_log_text() const {
    std::string out;
    for (const auto& line : event_log) {
        out += line;
        out += '\n';
    }
    return out;
}

// ---- world ----

namespace {

Hash32 container_of(const std::string& model_id) {
    return sha256(to_bytes("container:" + model_id));
}

struct World {
    da::Store store;
    std::unique_ptr<privacy::AttestationRoot> attestation_root;
    std::unique_ptr<privacy::Kms> kms;
    privacy::TaintLog taint;
    std::unique_ptr<protocol::Engine> engine;
    std::vector<std::string> operator_ids;
    std::vector<std::string> verifier_ids;
    std::vector<std::string> event_log;
};

std::unique_ptr<World> build_world(const ScenarioConfig& config) {
    auto world = std::make_unique<World>();
    world->attestation_root = std::make_unique<privacy::AttestationRoot>(
        sha256(to_bytes("attestation-root:" + std::to_string(config.seed))));

    privacy::KmsPolicy kms_policy;
    kms_policy.threshold = config.kms.threshold;
    kms_policy.shard_count = config.kms.shards;
    kms_policy.freshness_window = config.kms.freshness_window;
    receipts::Registry registry;
    for (const auto& model : config.models) {
        Hash32 digest = container_of(model);
        registry.containers.insert(digest);
        registry.models.insert(model);
        kms_policy.approved_measurements.push_back(
            privacy::measurement_of(digest, protocol::kEnclaveCodeVersion));
    }
    world->kms = std::make_unique<privacy::Kms>(kms_policy, world->attestation_root.get(),
                                                detcore::mix_seed(config.seed, 0x6b6d73));

    protocol::EngineConfig engine_config;
    engine_config.params = config.params;
    engine_config.operator_enclave = config.operator_enclave;
    World* w = world.get();
    world->engine = std::make_unique<protocol::Engine>(
        engine_config, &world->store, world->kms.get(), world->attestation_root.get(),
        &world->taint, registry, [w](const protocol::Event& ev) {
            nlohmann::ordered_json line;
            line["epoch"] = ev.epoch;
            line["event"] = ev.kind;
            for (const auto& [key, value] : ev.fields.items()) line[key] = value;
            w->event_log.push_back(line.dump());
        });

    for (size_t i = 0; i < config.operators.size(); ++i) {
        std::string id = "op-" + std::to_string(i);
        auto behavior = protocol::operator_behavior_from(config.operators[i].behavior);
        world->engine->register_operator(id, config.operators[i].stake, *behavior,
                                         detcore::mix_seed(config.seed, 0x10000 + i));
        world->operator_ids.push_back(std::move(id));
    }
    for (size_t i = 0; i < config.verifiers.size(); ++i) {
        std::string id = "ver-" + std::to_string(i);
        auto behavior = protocol::verifier_behavior_from(config.verifiers[i].behavior);
        world->engine->register_verifier(id, config.verifiers[i].stake, *behavior);
        world->verifier_ids.push_back(std::move(id));
    }
    return world;
}

detcore::DecodePolicy make_policy(const std::string& kind, uint32_t max_tokens) {
    if (kind == "top_k") return detcore::DecodePolicy::top_k(4, max_tokens);
    if (kind == "nucleus") return detcore::DecodePolicy::nucleus(0.9f, max_tokens);
    return detcore::DecodePolicy::greedy(max_tokens);
}

struct RunState {
    RunMetrics metrics;
    std::set<uint64_t> challenged;  // submissions already fully challenged
};

void emit_harness_event(World& world, uint64_t epoch, const std::string& kind,
                        nlohmann::ordered_json fields) {
    nlohmann::ordered_json line;
    line["epoch"] = epoch;
    line["event"] = kind;
    for (const auto& [key, value] : fields.items()) line[key] = value;
    world.event_log.push_back(line.dump());
}

void run_full_challenge(const ScenarioConfig& config, World& world, RunState& state, uint64_t sub_id,
                        const std::string& challenger, uint64_t epoch) {
    const protocol::Submission& before = world.engine->submission(sub_id);
    if (before.status != protocol::SubmissionStatus::pending) return;
    if (!state.challenged.insert(sub_id).second) return;

    bool fault = before.fault_injected;
    ++state.metrics.challenges;
    if (fault) ++state.metrics.frauds_challenged;

    protocol::ChallengeVerdict verdict = world.engine->full_challenge(sub_id, challenger, epoch);
    if (verdict.availability_fault) ++state.metrics.availability_failures;
    bool slashed = verdict.outcome == protocol::ChallengeVerdict::Outcome::slashed;
    if (slashed && fault) ++state.metrics.frauds_detected;
    if (slashed && !fault) ++state.metrics.false_slashes;

    // Out-of-band oracle: a verdict contradicting ground truth means the
    // committee was overpowered; the fork-choice backstop (out of scope)
    // would engage here, so only a terminal log event is recorded.
    if ((slashed && !fault) || (!slashed && fault)) {
        emit_harness_event(world, epoch, "fork_alert",
                           {{"submission", sub_id},
                            {"reason", slashed ? "honest-operator-slashed" : "fraud-upheld"}});
    }
    (void)config;
}

void run_adversary_probes(const ScenarioConfig& config, World& world, RunState& state,
                          uint64_t epoch) {
    bool stale = std::find(config.adversaries.begin(), config.adversaries.end(),
                           "stale_quote_kms") != config.adversaries.end();
    bool non_attested = std::find(config.adversaries.begin(), config.adversaries.end(),
                                  "non_attested_share_request") != config.adversaries.end();
    if (stale && epoch > config.kms.freshness_window) {
        // Quote minted at epoch 0 presented beyond the freshness window.
        Hash32 digest = container_of(config.models.front());
        Hash32 measurement = privacy::measurement_of(digest, protocol::kEnclaveCodeVersion);
        privacy::Nonce nonce{};
        Hash32 nh = sha256(to_bytes("stale-nonce:" + std::to_string(epoch)));
        std::copy_n(nh.begin(), nonce.size(), nonce.begin());
        privacy::AttestationQuote quote = world.attestation_root->issue(measurement, nonce, 0);
        auto resp = world.kms->release_share(1, quote, world.kms->active_epoch(), epoch);
        if (std::holds_alternative<privacy::DenialReason>(resp)) {
            ++state.metrics.share_denials;
            emit_harness_event(world, epoch, "share_denial",
                               {{"reason", std::get<privacy::DenialReason>(resp).detail},
                                {"probe", "stale_quote_kms"}});
        }
    }
    if (non_attested) {
        // Request with a quote not signed by the attestation root.
        Hash32 digest = container_of(config.models.front());
        privacy::AttestationQuote quote;
        quote.measurement = privacy::measurement_of(digest, protocol::kEnclaveCodeVersion);
        Hash32 nh = sha256(to_bytes("rogue-nonce:" + std::to_string(epoch)));
        std::copy_n(nh.begin(), quote.nonce.size(), quote.nonce.begin());
        quote.issued_at = epoch;
        quote.hw_sig = Bytes(64, 0xAB);
        auto resp = world.kms->release_share(1, quote, world.kms->active_epoch(), epoch);
        if (std::holds_alternative<privacy::DenialReason>(resp)) {
            ++state.metrics.share_denials;
            emit_harness_event(world, epoch, "share_denial",
                               {{"reason", std::get<privacy::DenialReason>(resp).detail},
                                {"probe", "non_attested_share_request"}});
        }
    }
}

struct InternalRun {
    RunResult result;
    std::unique_ptr<World> world;
};

InternalRun run_scenario_internal(const ScenarioConfig& config) {
    auto issues = config.validate();
    for (const auto& issue : issues) {
        if (issue.find("(allowed, degenerate)") == std::string::npos) {
            throw std::invalid_argument("scenario config: " + issue);
        }
    }

    auto world = build_world(config);
    RunState state;
    detcore::PrngState rng = detcore::PrngState::seeded(detcore::mix_seed(config.seed, 0x73696d));

    for (uint64_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<uint64_t> new_submissions;

        // clients submit
        for (uint32_t r = 0; r < config.workload.requests_per_epoch; ++r) {
            const std::string& model = config.models[rng.next_below(config.models.size())];

            detcore::ExecutionTuple exec;
            exec.model_id = model;
            exec.container_digest = container_of(model);
            exec.arch = config.workload.arch;
            exec.driver_tag = "drv-1";
            const std::string& kind =
                config.workload.policies[rng.next_below(config.workload.policies.size())];
            exec.decode_policy = make_policy(kind, config.workload.max_tokens);
            exec.seed = rng.next_u64();
            uint32_t len = config.workload.prompt_len_min +
                           uint32_t(rng.next_below(config.workload.prompt_len_max -
                                                   config.workload.prompt_len_min + 1));
            exec.prompt.resize(len);
            for (auto& t : exec.prompt) t = uint32_t(rng.next_below(detcore::ToyModel::kVocab));

            world->taint.observe(privacy::AccessRole::client, privacy::DataLabel::plaintext);
            const std::string& op =
                world->operator_ids[rng.next_below(world->operator_ids.size())];
            uint64_t id = world->engine->submit(op, exec, epoch);
            new_submissions.push_back(id);
            ++state.metrics.submissions;
            if (world->engine->submission(id).fault_injected) ++state.metrics.frauds_injected;
        }

        // seal this epoch's DA batch so same-epoch challenges can fetch proofs
        world->store.advance_slot();

        // watchers run light audits at the configured rate
        for (uint64_t id : new_submissions) {
            if (double(rng.next_unit_f32()) >= config.light_audit_rate) continue;
            std::vector<std::string> auditors;
            std::set<size_t> picked;
            uint32_t want =
                std::min<uint32_t>(config.params.light_audit_size,
                                   uint32_t(world->verifier_ids.size()));
            while (auditors.size() < want) {
                size_t idx = size_t(rng.next_below(world->verifier_ids.size()));
                if (picked.insert(idx).second) auditors.push_back(world->verifier_ids[idx]);
            }
            auto reports = world->engine->light_audit(id, auditors, epoch);
            ++state.metrics.light_audits;
            bool flagged = false;
            for (const auto& rep : reports) flagged |= rep.result != protocol::AuditReport::Result::match;
            if (flagged) run_full_challenge(config, *world, state, id, "watch-0", epoch);
        }

        // user-initiated challenges at rate pi_c
        for (uint64_t id : new_submissions) {
            if (double(rng.next_unit_f32()) < config.econ.pi_c) {
                std::string challenger = "client-" + std::to_string(rng.next_below(config.clients));
                run_full_challenge(config, *world, state, id, challenger, epoch);
            }
        }

        run_adversary_probes(config, *world, state, epoch);

        state.metrics.finalized += world->engine->finalize_expired(epoch).size();
    }

    // drain: let remaining windows expire
    for (uint64_t extra = 0; extra <= config.params.delta + 1; ++extra) {
        state.metrics.finalized +=
            world->engine->finalize_expired(config.epochs + extra).size();
    }

    state.metrics.plaintext_exposures = world->taint.violations();
    state.metrics.burned = world->engine->burned();
    for (const auto& id : world->operator_ids) {
        state.metrics.final_stakes[id] = world->engine->stake_of(id);
    }
    for (const auto& id : world->verifier_ids) {
        state.metrics.final_stakes[id] = world->engine->stake_of(id);
    }

    InternalRun run;
    run.result.metrics = std::move(state.metrics);
    run.result.event_log = world->event_log;
    run.world = std::move(world);
    return run;
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config) {
    return run_scenario_internal(config).result;
}

ReplayReport replay_verify(const std::string& event_log_text, const ScenarioConfig& config) {
    ReplayReport report;
    InternalRun rerun = run_scenario_internal(config);

    std::vector<std::string> given;
    std::istringstream in(event_log_text);
    std::string line;
    while (std::getline(in, line)) given.push_back(line);

    const auto& fresh = rerun.result.event_log;
    size_t common = std::min(given.size(), fresh.size());
    for (size_t i = 0; i < common; ++i) {
        if (given[i] != fresh[i]) {
            report.first_divergence_line = i + 1;
            report.detail = "line " + std::to_string(i + 1) + " differs: got '" + given[i] +
                            "', expected '" + fresh[i] + "'";
            return report;
        }
    }
    if (given.size() != fresh.size()) {
        report.first_divergence_line = common + 1;
        report.detail = "log length mismatch: got " + std::to_string(given.size()) + " lines, expected " +
                        std::to_string(fresh.size());
        return report;
    }

    // Structural re-verification of everything the rerun published.
    for (const auto& [id, sub] : rerun.world->engine->submissions()) {
        Bytes pubkey = rerun.world->engine->operator_pubkey(sub.operator_id);
        std::string why;
        if (!receipts::verify_receipt(sub.receipt, pubkey, rerun.world->engine->registry(), &why)) {
            report.detail = "submission " + std::to_string(id) + ": receipt failed: " + why;
            return report;
        }
        ++report.receipts_verified;
        da::FetchResult fetched = rerun.world->store.fetch_with_proof(sub.da_pointer);
        if (fetched.status == da::FetchStatus::withheld) continue;  // censored by scenario
        auto root = rerun.world->store.root_of(sub.da_pointer.slot_id);
        if (fetched.status != da::FetchStatus::ok || !root ||
            !da::verify_inclusion(fetched.proof, *root)) {
            report.detail = "submission " + std::to_string(id) + ": inclusion proof failed";
            return report;
        }
        ++report.proofs_verified;
    }

    report.ok = true;
    report.detail = "ok";
    return report;
}

}  // namespace verinf::sim
