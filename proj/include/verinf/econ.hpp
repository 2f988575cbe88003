#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Cryptoeconomic deterrence model: closed-form operator utility and Monte
// Carlo estimates driven through the full protocol machinery.

namespace verinf::econ {

struct EconParams {
    double pi_c = 0.0;     // challenge probability per inference, in [0,1]
    double g = 0.0;        // maximum dishonest gain, stake units
    double s_slash = 1.0;  // slash amount, stake units
    double alpha = 0.2;
    double beta = 0.3;

    std::string validate() const;
};

// Expected utility of cheating: (1 - pi_c) * G - pi_c * S_slash.
double expected_gain(const EconParams& params);

// The deterrence threshold G / S_slash. Values above 1 mean no challenge
// rate can deter at that gain; `undeterred` reports that case. Note that the
// utility curve of expected_gain crosses zero at G / (G + S_slash), which is
// below this threshold: challenging more often than G / S_slash is sufficient
// for deterrence but not tight.
struct CriticalProbability {
    double value = 0.0;
    bool undeterred = false;  // value > 1
};
CriticalProbability critical_challenge_probability(double g, double s_slash);

// Combined challenge probability from independent light-audit and
// user-challenge rates: 1 - (1 - p_audit) * (1 - p_user).
double compose_challenge_probability(double p_audit, double p_user);

enum class Strategy : uint8_t { honest, cheat };

struct UtilityEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    uint32_t trials = 0;
};

// Per-trial: one submission through a fresh protocol world (operator plus an
// honest committee), a Bernoulli(pi_c) challenge, and the realized utility:
// cheat earns +G when unchallenged and -S_slash when slashed; honest earns 0.
// Trials are independent with seeds derived from (seed, trial index).
UtilityEstimate monte_carlo_utility(Strategy strategy, const EconParams& params, uint32_t trials,
                                    uint64_t seed);

struct SweepPoint {
    double pi_c;
    double g;
    double s_slash;
    Strategy strategy;
    UtilityEstimate estimate;
};

// CSV with header: pi_c,G,S_slash,strategy,mean_utility,stderr
std::string sweep_to_csv(const std::vector<SweepPoint>& points);

}  // namespace verinf::econ
