#include "verinf/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "verinf/prng.hpp"

namespace verinf::protocol {

std::string ProtocolParams::validate() const {
    if (!(tau > 0.0) || tau > 1.0) return "tau must be in (0,1]";
    if (committee_size == 0) return "committee_size must be positive";
    if (light_audit_size == 0) return "light_audit_size must be positive";
    if (alpha < 0.0 || beta < 0.0 || alpha + beta > 1.0) return "need alpha,beta >= 0 and alpha+beta <= 1";
    if (s_slash == 0) return "s_slash must be positive";
    return "";
}

const char* operator_behavior_name(OperatorBehavior b) {
    switch (b) {
        case OperatorBehavior::honest: return "honest";
        case OperatorBehavior::falsify_output: return "falsify_output";
        case OperatorBehavior::substitute_container: return "substitute_container";
        case OperatorBehavior::replay_stale_receipt: return "replay_stale_receipt";
        case OperatorBehavior::withhold_da: return "withhold_da";
    }
    return "unknown";
}

const char* verifier_behavior_name(VerifierBehavior b) {
    switch (b) {
        case VerifierBehavior::honest: return "honest";
        case VerifierBehavior::colluding_uphold: return "colluding_uphold";
        case VerifierBehavior::colluding_reject: return "colluding_reject";
        case VerifierBehavior::offline: return "offline";
    }
    return "unknown";
}

std::optional<OperatorBehavior> operator_behavior_from(std::string_view name) {
    for (auto b : {OperatorBehavior::honest, OperatorBehavior::falsify_output,
                   OperatorBehavior::substitute_container, OperatorBehavior::replay_stale_receipt,
                   OperatorBehavior::withhold_da}) {
        if (name == operator_behavior_name(b)) return b;
    }
    return std::nullopt;
}

std::optional<VerifierBehavior> verifier_behavior_from(std::string_view name) {
    for (auto b : {VerifierBehavior::honest, VerifierBehavior::colluding_uphold,
                   VerifierBehavior::colluding_reject, VerifierBehavior::offline}) {
        if (name == verifier_behavior_name(b)) return b;
    }
    return std::nullopt;
}

ChallengeVerdict::Outcome decide_outcome(size_t uphold_votes, size_t committee_size, double tau) {
    double tally = committee_size == 0 ? 0.0 : double(uphold_votes) / double(committee_size);
    return tally >= tau ? ChallengeVerdict::Outcome::upheld : ChallengeVerdict::Outcome::slashed;
}

std::vector<size_t> sample_committee(std::span<const uint64_t> stakes, uint32_t committee_size,
                                     uint64_t randomness_seed) {
    if (stakes.empty()) throw std::invalid_argument("sample_committee: empty verifier set");
    if (committee_size > stakes.size()) {
        throw std::invalid_argument("sample_committee: committee larger than population");
    }
    detcore::PrngState prng = detcore::PrngState::seeded(randomness_seed);
    std::vector<size_t> remaining(stakes.size());
    for (size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;
    std::vector<size_t> chosen;
    chosen.reserve(committee_size);
    while (chosen.size() < committee_size) {
        uint64_t total = 0;
        for (size_t idx : remaining) total += stakes[idx];
        size_t pick_pos = 0;
        if (total == 0) {
            // all remaining weightless: fill in index order
            pick_pos = 0;
        } else {
            uint64_t r = prng.next_below(total);
            uint64_t acc = 0;
            for (size_t p = 0; p < remaining.size(); ++p) {
                acc += stakes[remaining[p]];
                if (r < acc) {
                    pick_pos = p;
                    break;
                }
            }
        }
        chosen.push_back(remaining[pick_pos]);
        remaining.erase(remaining.begin() + pick_pos);
    }
    return chosen;
}

Engine::Engine(EngineConfig config, da::Store* store, privacy::Kms* kms,
               const privacy::AttestationRoot* attestation_root, privacy::TaintLog* taint,
               receipts::Registry registry, EventSink sink)
    : config_(std::move(config)),
      store_(store),
      kms_(kms),
      attestation_root_(attestation_root),
      taint_(taint),
      registry_(std::move(registry)),
      sink_(std::move(sink)) {
    if (auto err = config_.params.validate(); !err.empty()) {
        throw std::invalid_argument("protocol params: " + err);
    }
}

void Engine::emit(uint64_t epoch, std::string kind, nlohmann::ordered_json fields) {
    if (sink_) sink_(Event{epoch, std::move(kind), std::move(fields)});
}

void Engine::register_operator(const std::string& id, uint64_t stake, OperatorBehavior behavior,
                               uint64_t key_seed) {
    stakes_[id] = stake;
    operators_[id] = OperatorState{key_seed, behavior, 0, std::nullopt};
    initial_total_ += stake;
}

void Engine::register_verifier(const std::string& id, uint64_t stake, VerifierBehavior behavior) {
    stakes_[id] = stake;
    verifiers_[id] = VerifierState{behavior};
    verifier_order_.push_back(id);
    initial_total_ += stake;
}

sign::Ed25519Signer Engine::operator_signer(const std::string& id) const {
    const auto& op = operators_.at(id);
    Hash32 seed{};
    uint64_t x = op.key_seed;
    for (size_t i = 0; i < 4; ++i) {
        uint64_t word = detcore::splitmix64(x);
        for (size_t b = 0; b < 8; ++b) seed[i * 8 + b] = uint8_t(word >> (8 * b));
    }
    return sign::Ed25519Signer::from_seed(seed);
}

Bytes Engine::operator_pubkey(const std::string& id) const {
    return operator_signer(id).public_key();
}

void Engine::check_environment(const detcore::ExecutionTuple& exec) const {
    if (!registry_.archs.contains(exec.arch)) {
        throw std::invalid_argument("submit: arch not in approved registry");
    }
    if (!registry_.containers.empty() && registry_.containers.count(exec.container_digest) == 0) {
        throw std::invalid_argument("submit: container digest not registered");
    }
    if (!registry_.models.empty() && registry_.models.count(exec.model_id) == 0) {
        throw std::invalid_argument("submit: model not registered");
    }
}

privacy::Nonce Engine::session_nonce() {
    codec::Writer w;
    w.str("session-nonce");
    w.u64(session_counter_++);
    Hash32 h = sha256(w.bytes());
    privacy::Nonce nonce{};
    std::copy_n(h.begin(), nonce.size(), nonce.begin());
    return nonce;
}

uint64_t Engine::submit(const std::string& operator_id, const detcore::ExecutionTuple& exec,
                        uint64_t now) {
    auto op_it = operators_.find(operator_id);
    if (op_it == operators_.end()) throw std::invalid_argument("submit: operator not registered");
    if (stakes_.at(operator_id) == 0) throw std::invalid_argument("submit: operator has zero stake");
    check_environment(exec);
    OperatorState& op = op_it->second;

    // Honest execution result for this request. Falsifying strategies derive
    // their published bytes from it; the strategy stream is a deterministic
    // function of (operator key seed, submission count).
    detcore::PrngState strategy_rng =
        detcore::PrngState::seeded(detcore::mix_seed(op.key_seed, op.submission_count));

    Bytes req_bytes = codec::encode_execution_tuple(exec);
    bool fault = false;
    Bytes out_bytes;

    switch (op.behavior) {
        case OperatorBehavior::honest:
        case OperatorBehavior::withhold_da: {
            out_bytes = detcore::infer(exec, registry_.archs).canonical_bytes;
            fault = op.behavior == OperatorBehavior::withhold_da;
            break;
        }
        case OperatorBehavior::falsify_output: {
            out_bytes = detcore::infer(exec, registry_.archs).canonical_bytes;
            // flip one byte somewhere in the logits region
            size_t pos = out_bytes.empty() ? 0 : strategy_rng.next_below(out_bytes.size());
            if (!out_bytes.empty()) out_bytes[pos] ^= uint8_t(1 + strategy_rng.next_below(255));
            fault = true;
            break;
        }
        case OperatorBehavior::substitute_container: {
            detcore::ExecutionTuple actual = exec;
            actual.model_id += "#substituted";
            out_bytes = detcore::infer(actual, registry_.archs).canonical_bytes;
            fault = true;
            break;
        }
        case OperatorBehavior::replay_stale_receipt: {
            if (op.last_submission) {
                const Submission& prev = submissions_.at(*op.last_submission);
                da::DaPointer pointer = store_->publish(encode_da_record(prev.cipher, prev.receipt));
                Submission sub;
                sub.id = next_submission_id_++;
                sub.operator_id = operator_id;
                sub.exec = exec;
                sub.cipher = prev.cipher;
                sub.receipt = prev.receipt;  // stale: req_hash binds the old request
                sub.da_pointer = pointer;
                sub.published_at = now;
                sub.fault_injected = true;
                op.last_submission = sub.id;
                ++op.submission_count;
                uint64_t id = sub.id;
                emit(now, "submit",
                     {{"submission", id},
                      {"operator", operator_id},
                      {"req_hash", hex32(receipts::hash_commit(req_bytes))},
                      {"replayed", true}});
                emit(now, "publish",
                     {{"submission", id},
                      {"da_pointer", pointer.to_string()},
                      {"out_hash", hex32(sub.receipt.out_hash)}});
                submissions_[id] = std::move(sub);
                return id;
            }
            out_bytes = detcore::infer(exec, registry_.archs).canonical_bytes;  // first request: nothing to replay
            break;
        }
    }

    // Operator-side plaintext handling happens inside a mock enclave when
    // configured; otherwise the operator role itself touches plaintext and
    // the taint log will record the exposure.
    std::optional<Bytes> att_quote;
    if (taint_ != nullptr) {
        if (config_.operator_enclave) {
            taint_->observe(privacy::AccessRole::enclave, privacy::DataLabel::plaintext);
        } else {
            taint_->observe(privacy::AccessRole::operator_node, privacy::DataLabel::plaintext);
        }
    }
    if (config_.operator_enclave) {
        Hash32 measurement = privacy::measurement_of(exec.container_digest, kEnclaveCodeVersion);
        privacy::EnclaveContext enclave(measurement, *attestation_root_, session_nonce(), now,
                                        taint_);
        att_quote = privacy::encode_quote(enclave.quote());
    }

    uint32_t epoch = kms_->active_epoch();
    Bytes cipher = privacy::encrypt_payload(kms_->epoch_public_key(epoch), req_bytes, out_bytes);
    if (taint_ != nullptr) {
        taint_->observe(privacy::AccessRole::operator_node, privacy::DataLabel::ciphertext);
        taint_->observe(privacy::AccessRole::da_store, privacy::DataLabel::ciphertext);
    }

    da::DaPointer pointer = store_->next_pointer();
    sign::Ed25519Signer signer = operator_signer(operator_id);
    detcore::InferenceOutput published;
    published.canonical_bytes = out_bytes;
    receipts::Receipt receipt =
        receipts::make_receipt(exec, published, signer, config_.chain_id, pointer.to_string(),
                               epoch, now, std::move(att_quote));

    da::DaPointer actual = store_->publish(encode_da_record(cipher, receipt));
    if (actual != pointer) throw std::logic_error("submit: pointer prediction mismatch");
    if (op.behavior == OperatorBehavior::withhold_da) store_->censor(pointer);
    if (taint_ != nullptr) taint_->observe(privacy::AccessRole::da_store, privacy::DataLabel::commitment);

    Submission sub;
    sub.id = next_submission_id_++;
    sub.operator_id = operator_id;
    sub.exec = exec;
    sub.cipher = std::move(cipher);
    sub.receipt = std::move(receipt);
    sub.da_pointer = pointer;
    sub.published_at = now;
    sub.fault_injected = fault;
    op.last_submission = sub.id;
    ++op.submission_count;

    uint64_t id = sub.id;
    emit(now, "submit",
         {{"submission", id},
          {"operator", operator_id},
          {"req_hash", hex32(sub.receipt.req_hash)},
          {"behavior", operator_behavior_name(op.behavior)}});
    emit(now, "publish",
         {{"submission", id},
          {"da_pointer", pointer.to_string()},
          {"out_hash", hex32(sub.receipt.out_hash)}});
    submissions_[id] = std::move(sub);
    return id;
}

Engine::SessionPlain Engine::enclave_decrypt(const Submission& sub, uint64_t now) {
    da::FetchResult fetched = store_->fetch_with_proof(sub.da_pointer);
    if (fetched.status == da::FetchStatus::withheld) return {"da-availability", {}, {}};
    if (fetched.status != da::FetchStatus::ok) return {"fetch", {}, {}};
    auto root = store_->root_of(sub.da_pointer.slot_id);
    if (!root || !da::verify_inclusion(fetched.proof, *root)) return {"inclusion-proof", {}, {}};
    auto record = receipts::decode_da_record(fetched.blob);
    if (!record) return {"record-decode", {}, {}};
    const auto& [cipher, receipt] = *record;

    Hash32 measurement =
        privacy::measurement_of(receipt.container_digest, kEnclaveCodeVersion);
    privacy::EnclaveContext enclave(measurement, *attestation_root_, session_nonce(), now, taint_);
    auto shares = kms_->collect_shares(enclave.quote(), receipt.key_epoch, now,
                                       kms_->policy().threshold);
    if (auto* denial = std::get_if<privacy::DenialReason>(&shares)) {
        return {"share-release: " + denial->detail, {}, {}};
    }
    if (auto err = enclave.reconstruct(std::get<std::vector<privacy::KeyShare>>(shares),
                                       kms_->policy().threshold);
        !err.empty()) {
        return {"key-reconstruction: " + err, {}, {}};
    }
    auto plain = enclave.decrypt_payload(cipher);
    enclave.zeroize();
    if (!plain) return {"decrypt", {}, {}};
    return {"", std::move(plain->first), std::move(plain->second)};
}

std::vector<AuditReport> Engine::light_audit(uint64_t submission_id,
                                             const std::vector<std::string>& auditor_ids,
                                             uint64_t now) {
    const Submission& sub = submission(submission_id);
    std::vector<AuditReport> reports;
    reports.reserve(auditor_ids.size());
    for (const auto& auditor : auditor_ids) {
        AuditReport report;
        report.auditor_id = auditor;
        SessionPlain plain = enclave_decrypt(sub, now);
        if (!plain.failure.empty()) {
            report.result = plain.failure == "da-availability" ? AuditReport::Result::unavailable
                                                               : AuditReport::Result::mismatch;
            report.detail = plain.failure;
        } else {
            bool ok = true;
            std::string detail;
            if (receipts::hash_commit(plain.req_bytes) != sub.receipt.req_hash) {
                ok = false;
                detail = "request-hash";
            } else if (sub.receipt.req_hash !=
                       receipts::hash_commit(codec::encode_execution_tuple(sub.exec))) {
                ok = false;
                detail = "stale-request-binding";
            } else if (receipts::hash_commit(plain.out_bytes) != sub.receipt.out_hash) {
                ok = false;
                detail = "cipher-binding";
            } else {
                auto exec = codec::decode_execution_tuple(plain.req_bytes);
                if (!exec) {
                    ok = false;
                    detail = "request-decode";
                } else {
                    Bytes reexec = detcore::infer(*exec, registry_.archs).canonical_bytes;
                    if (reexec != plain.out_bytes) {
                        ok = false;
                        detail = "output-mismatch";
                    }
                }
            }
            report.result = ok ? AuditReport::Result::match : AuditReport::Result::mismatch;
            report.detail = detail;
        }
        emit(now, "audit",
             {{"submission", submission_id},
              {"auditor", auditor},
              {"result", report.result == AuditReport::Result::match      ? "match"
                         : report.result == AuditReport::Result::mismatch ? "mismatch"
                                                                          : "unavailable"},
              {"detail", report.detail}});
        reports.push_back(std::move(report));
    }
    return reports;
}

ChallengeVerdict Engine::full_challenge(uint64_t submission_id, const std::string& challenger_id,
                                        uint64_t now) {
    auto it = submissions_.find(submission_id);
    if (it == submissions_.end()) throw std::invalid_argument("challenge: unknown submission");
    Submission& sub = it->second;
    if (sub.status != SubmissionStatus::pending) {
        throw std::invalid_argument("challenge: submission not pending");
    }
    if (now > sub.published_at + config_.params.delta) {
        throw std::invalid_argument("challenge: window expired");
    }

    ChallengeVerdict verdict;
    verdict.submission_id = submission_id;
    verdict.challenger_id = challenger_id;

    // Replayable committee randomness: H(req_hash || challenge epoch).
    codec::Writer seed_w;
    seed_w.hash(sub.receipt.req_hash);
    seed_w.u64(now);
    Hash32 seed_hash = sha256(seed_w.bytes());
    uint64_t committee_seed = load_be64(seed_hash.data());

    std::vector<uint64_t> stakes(verifier_order_.size());
    for (size_t i = 0; i < verifier_order_.size(); ++i) stakes[i] = stakes_.at(verifier_order_[i]);
    std::vector<size_t> picks =
        sample_committee(stakes, config_.params.committee_size, committee_seed);

    emit(now, "challenge",
         {{"submission", submission_id},
          {"challenger", challenger_id},
          {"committee_seed", hex32(seed_hash)}});

    // DA availability is adjudicated against the operator: if the committee
    // cannot fetch the committed record, the operator is slashed for
    // unavailability.
    da::FetchResult fetched = store_->fetch_with_proof(sub.da_pointer);
    if (fetched.status != da::FetchStatus::ok) {
        verdict.availability_fault = true;
        verdict.outcome = ChallengeVerdict::Outcome::slashed;
        verdict.tally = 0.0;
        for (size_t idx : picks) {
            verdict.committee.push_back(
                VoteRecord{verifier_order_[idx], stakes[idx], false, true, Hash32{}});
        }
        emit(now, "challenge",
             {{"submission", submission_id}, {"result", "availability-fault"}});
        apply_slash(sub.operator_id, challenger_id, verdict.committee, now);
        sub.status = SubmissionStatus::slashed;
        return verdict;
    }

    Bytes claimed_req = codec::encode_execution_tuple(sub.exec);
    Bytes operator_pk = operator_pubkey(sub.operator_id);

    size_t uphold = 0;
    std::map<Hash32, size_t> hash_counts;
    for (size_t idx : picks) {
        const std::string& vid = verifier_order_[idx];
        VerifierBehavior behavior = verifiers_.at(vid).behavior;
        VoteRecord record;
        record.verifier_id = vid;
        record.stake = stakes[idx];

        switch (behavior) {
            case VerifierBehavior::offline:
                record.responded = false;
                record.vote = false;  // abstention counts against upholding
                break;
            case VerifierBehavior::colluding_uphold:
                record.vote = true;
                break;
            case VerifierBehavior::colluding_reject:
                record.vote = false;
                break;
            case VerifierBehavior::honest: {
                bool vote = false;
                SessionPlain plain = enclave_decrypt(sub, now);
                std::string why;
                if (plain.failure.empty() &&
                    receipts::verify_receipt(sub.receipt, operator_pk, registry_, &why) &&
                    receipts::hash_commit(plain.req_bytes) == sub.receipt.req_hash &&
                    receipts::hash_commit(claimed_req) == sub.receipt.req_hash) {
                    if (auto exec = codec::decode_execution_tuple(plain.req_bytes)) {
                        Bytes reexec = detcore::infer(*exec, registry_.archs).canonical_bytes;
                        record.reexec_hash = receipts::hash_commit(reexec);
                        ++hash_counts[record.reexec_hash];
                        vote = reexec == plain.out_bytes &&
                               record.reexec_hash == sub.receipt.out_hash;
                    }
                }
                record.vote = vote;
                break;
            }
        }
        if (record.vote) ++uphold;
        emit(now, "vote",
             {{"submission", submission_id},
              {"verifier", vid},
              {"vote", record.vote},
              {"responded", record.responded}});
        verdict.committee.push_back(std::move(record));
    }

    verdict.tally = double(uphold) / double(picks.size());
    verdict.outcome = decide_outcome(uphold, picks.size(), config_.params.tau);

    // Majority re-executed output among honest voters; ties break to the
    // lexicographically smallest hash.
    Hash32 majority{};
    size_t best = 0;
    for (const auto& [hash, count] : hash_counts) {
        if (count > best) {
            best = count;
            majority = hash;
        }
    }
    verdict.majority_output_hash = best > 0 ? majority : sub.receipt.out_hash;

    if (verdict.outcome == ChallengeVerdict::Outcome::slashed) {
        apply_slash(sub.operator_id, challenger_id, verdict.committee, now);
        sub.status = SubmissionStatus::slashed;
    } else {
        sub.status = SubmissionStatus::finalized;
        emit(now, "finalize",
             {{"submission", submission_id}, {"cause", "challenge-upheld"}});
    }
    return verdict;
}

SlashDistribution Engine::apply_slash(const std::string& operator_id,
                                      const std::string& challenger_id,
                                      const std::vector<VoteRecord>& committee, uint64_t now) {
    SlashDistribution dist;
    uint64_t available = stakes_.at(operator_id);
    dist.total = std::min<uint64_t>(config_.params.s_slash, available);
    dist.capped = dist.total < config_.params.s_slash;
    stakes_[operator_id] = available - dist.total;

    dist.challenger_reward = uint64_t(std::llround(config_.params.alpha * double(dist.total)));
    dist.challenger_reward = std::min(dist.challenger_reward, dist.total);
    stakes_[challenger_id] += dist.challenger_reward;

    uint64_t pool = uint64_t(std::llround(config_.params.beta * double(dist.total)));
    pool = std::min(pool, dist.total - dist.challenger_reward);
    uint64_t committee_stake = 0;
    for (const auto& v : committee) committee_stake += v.stake;
    uint64_t distributed = 0;
    if (pool > 0 && !committee.empty()) {
        // pro-rata by stake, remainder to earlier members so the pool is
        // consumed exactly
        std::vector<uint64_t> rewards(committee.size(), 0);
        if (committee_stake > 0) {
            for (size_t i = 0; i < committee.size(); ++i) {
                rewards[i] = pool * committee[i].stake / committee_stake;
                distributed += rewards[i];
            }
        }
        uint64_t remainder = pool - distributed;
        for (size_t i = 0; i < committee.size() && remainder > 0; ++i, --remainder) rewards[i] += 1;
        distributed = 0;
        for (size_t i = 0; i < committee.size(); ++i) {
            stakes_[committee[i].verifier_id] += rewards[i];
            distributed += rewards[i];
            dist.committee_rewards.emplace_back(committee[i].verifier_id, rewards[i]);
        }
    }
    dist.burned = dist.total - dist.challenger_reward - distributed;
    burned_ += dist.burned;
    last_slash_ = dist;

    emit(now, "slash",
         {{"operator", operator_id},
          {"challenger", challenger_id},
          {"amount", dist.total},
          {"challenger_reward", dist.challenger_reward},
          {"committee_reward", distributed},
          {"burned", dist.burned},
          {"capped", dist.capped}});

    if (stake_plus_burned() != initial_total_) {
        throw std::logic_error("slash: stake conservation violated");
    }
    return dist;
}

std::vector<uint64_t> Engine::finalize_expired(uint64_t now) {
    std::vector<uint64_t> finalized;
    for (auto& [id, sub] : submissions_) {
        if (sub.status == SubmissionStatus::pending && sub.published_at + config_.params.delta < now) {
            sub.status = SubmissionStatus::finalized;
            finalized.push_back(id);
            emit(now, "finalize", {{"submission", id}, {"cause", "window-expired"}});
        }
    }
    return finalized;
}

const Submission& Engine::submission(uint64_t id) const {
    auto it = submissions_.find(id);
    if (it == submissions_.end()) throw std::invalid_argument("unknown submission");
    return it->second;
}

uint64_t Engine::stake_of(const std::string& id) const {
    auto it = stakes_.find(id);
    return it == stakes_.end() ? 0 : it->second;
}

uint64_t Engine::stake_plus_burned() const {
    uint64_t total = burned_;
    for (const auto& [_, stake] : stakes_) total += stake;
    return total;
}

}  // namespace verinf::protocol
