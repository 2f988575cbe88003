#include "verinf/econ.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "verinf/prng.hpp"
#include "verinf/protocol.hpp"

namespace verinf::econ {

std::string EconParams::validate() const {
    if (pi_c < 0.0 || pi_c > 1.0) return "pi_c must be in [0,1]";
    if (g < 0.0) return "G must be nonnegative";
    if (!(s_slash > 0.0)) return "S_slash must be positive";
    if (alpha < 0.0 || beta < 0.0 || alpha + beta > 1.0) return "need alpha,beta >= 0, alpha+beta <= 1";
    return "";
}

double expected_gain(const EconParams& params) {
    if (auto err = params.validate(); !err.empty()) throw std::invalid_argument("econ: " + err);
    return (1.0 - params.pi_c) * params.g - params.pi_c * params.s_slash;
}

CriticalProbability critical_challenge_probability(double g, double s_slash) {
    if (!(s_slash > 0.0)) throw std::invalid_argument("econ: S_slash must be positive");
    if (g < 0.0) throw std::invalid_argument("econ: G must be nonnegative");
    double value = g / s_slash;
    return CriticalProbability{value, value > 1.0};
}

double compose_challenge_probability(double p_audit, double p_user) {
    return 1.0 - (1.0 - p_audit) * (1.0 - p_user);
}

namespace {

// One full protocol round: fresh world, one submission, and a Bernoulli(pi_c)
// challenge resolved by the real challenge machinery. Returns the realized
// utility in stake units.
double run_trial(Strategy strategy, const EconParams& params, uint64_t trial_seed) {
    detcore::PrngState rng = detcore::PrngState::seeded(trial_seed);
    bool challenged = rng.next_unit_f32() < double(params.pi_c);

    uint64_t operator_stake = uint64_t(std::ceil(params.s_slash)) + 1;

    da::Store store;
    privacy::AttestationRoot root(sha256(to_bytes("econ-attestation-root")));

    detcore::ExecutionTuple exec;
    exec.model_id = "econ-model";
    exec.container_digest = sha256(to_bytes("econ-container"));
    exec.arch = "archA";
    exec.driver_tag = "drv-1";
    exec.decode_policy = detcore::DecodePolicy::greedy(2);
    exec.seed = rng.next_u64();
    exec.prompt = {uint32_t(rng.next_below(detcore::ToyModel::kVocab)),
                   uint32_t(rng.next_below(detcore::ToyModel::kVocab))};

    privacy::KmsPolicy kms_policy;
    kms_policy.threshold = 2;
    kms_policy.shard_count = 3;
    kms_policy.approved_measurements = {
        privacy::measurement_of(exec.container_digest, protocol::kEnclaveCodeVersion)};
    privacy::Kms kms(kms_policy, &root, trial_seed);

    receipts::Registry registry;
    registry.containers = {exec.container_digest};

    protocol::EngineConfig config;
    config.params.delta = 2;
    config.params.committee_size = 3;
    config.params.alpha = params.alpha;
    config.params.beta = params.beta;
    config.params.s_slash = uint64_t(std::llround(params.s_slash));
    protocol::Engine engine(config, &store, &kms, &root, nullptr, registry);

    engine.register_operator("op", operator_stake,
                             strategy == Strategy::cheat
                                 ? protocol::OperatorBehavior::falsify_output
                                 : protocol::OperatorBehavior::honest,
                             rng.next_u64());
    for (int i = 0; i < 3; ++i) {
        engine.register_verifier("v" + std::to_string(i), 10, protocol::VerifierBehavior::honest);
    }

    uint64_t sub = engine.submit("op", exec, 0);
    store.advance_slot();

    bool slashed = false;
    if (challenged) {
        protocol::ChallengeVerdict verdict = engine.full_challenge(sub, "challenger", 1);
        slashed = verdict.outcome == protocol::ChallengeVerdict::Outcome::slashed;
    } else {
        engine.finalize_expired(config.params.delta + 1);
    }
    if (slashed) return -double(engine.last_slash()->total);
    return strategy == Strategy::cheat ? params.g : 0.0;
}

}  // namespace

UtilityEstimate monte_carlo_utility(Strategy strategy, const EconParams& params, uint32_t trials,
                                    uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("econ: trials must be >= 1");
    if (auto err = params.validate(); !err.empty()) throw std::invalid_argument("econ: " + err);

    double sum = 0.0, sum_sq = 0.0;
    for (uint32_t t = 0; t < trials; ++t) {
        double u = run_trial(strategy, params, detcore::mix_seed(seed, t));
        sum += u;
        sum_sq += u * u;
    }
    UtilityEstimate est;
    est.trials = trials;
    est.mean = sum / trials;
    if (trials > 1) {
        double var = (sum_sq - sum * sum / trials) / double(trials - 1);
        est.stderr_ = std::sqrt(std::max(0.0, var) / trials);
    }
    return est;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream out;
    out << "pi_c,G,S_slash,strategy,mean_utility,stderr\n";
    for (const auto& p : points) {
        char line[160];
        std::snprintf(line, sizeof(line), "%.6g,%.6g,%.6g,%s,%.9g,%.9g\n", p.pi_c, p.g, p.s_slash,
                      p.strategy == Strategy::cheat ? "cheat" : "honest", p.estimate.mean,
                      p.estimate.stderr_);
        out << line;
    }
    return out.str();
}

}  // namespace verinf::econ
