#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "verinf/econ.hpp"

using namespace verinf::econ;

namespace {

EconParams params_of(double pi, double g = 50.0, double s = 100.0) {
    EconParams p;
    p.pi_c = pi;
    p.g = g;
    p.s_slash = s;
    return p;
}

}  // namespace

TEST_CASE("expected_gain: endpoints and formula") {
    CHECK(expected_gain(params_of(0.0)) == doctest::Approx(50.0));
    CHECK(expected_gain(params_of(1.0)) == doctest::Approx(-100.0));
    CHECK(expected_gain(params_of(0.5)) == doctest::Approx(-25.0));
    // The utility curve (1-pi)G - pi*S crosses zero at G/(G+S), not at the
    // G/S deterrence threshold; at pi = G/S the utility is already negative.
    CHECK(expected_gain(params_of(50.0 / 100.0)) < 0.0);
    CHECK(expected_gain(params_of(50.0 / 150.0)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("expected_gain: monotone in pi_c, S_slash, G") {
    double prev = expected_gain(params_of(0.0));
    for (double pi : {0.1, 0.2, 0.35, 0.5, 0.8, 1.0}) {
        double u = expected_gain(params_of(pi));
        CHECK(u < prev);
        prev = u;
    }
    for (double pi : {0.25, 0.5, 0.75}) {
        CHECK(expected_gain(params_of(pi, 50.0, 200.0)) < expected_gain(params_of(pi, 50.0, 100.0)));
        CHECK(expected_gain(params_of(pi, 80.0, 100.0)) > expected_gain(params_of(pi, 50.0, 100.0)));
    }
}

TEST_CASE("critical_challenge_probability: formula and boundaries") {
    auto crit = critical_challenge_probability(0.0, 100.0);
    CHECK(crit.value == 0.0);
    CHECK(!crit.undeterred);

    crit = critical_challenge_probability(50.0, 100.0);
    CHECK(crit.value == doctest::Approx(0.5));
    CHECK(!crit.undeterred);

    crit = critical_challenge_probability(150.0, 100.0);
    CHECK(crit.value == doctest::Approx(1.5));
    CHECK(crit.undeterred);

    CHECK_THROWS_AS(critical_challenge_probability(50.0, 0.0), std::invalid_argument);
}

TEST_CASE("compose_challenge_probability") {
    CHECK(compose_challenge_probability(0.0, 0.0) == doctest::Approx(0.0));
    CHECK(compose_challenge_probability(1.0, 0.3) == doctest::Approx(1.0));
    CHECK(compose_challenge_probability(0.1, 0.2) == doctest::Approx(1.0 - 0.9 * 0.8));
}

TEST_CASE("monte carlo: deterministic boundary rates are exact") {
    auto never = monte_carlo_utility(Strategy::cheat, params_of(0.0), 300, 7);
    CHECK(never.mean == doctest::Approx(50.0));
    CHECK(never.stderr_ == doctest::Approx(0.0));

    auto always = monte_carlo_utility(Strategy::cheat, params_of(1.0), 300, 7);
    CHECK(always.mean == doctest::Approx(-100.0));
    CHECK(always.stderr_ == doctest::Approx(0.0));
}

TEST_CASE("monte carlo: honest strategy never loses stake") {
    for (double pi : {0.0, 0.5, 1.0}) {
        auto est = monte_carlo_utility(Strategy::honest, params_of(pi), 200, 11);
        CHECK(est.mean == doctest::Approx(0.0));
    }
}

TEST_CASE("monte carlo: mid-rate mean within 3 stderr of the closed form") {
    auto est = monte_carlo_utility(Strategy::cheat, params_of(0.5), 2000, 13);
    double expected = expected_gain(params_of(0.5));  // -25
    CHECK(std::fabs(est.mean - expected) <= 3.0 * est.stderr_);
    CHECK(est.stderr_ > 0.0);
}

TEST_CASE("monte carlo: same seed reproduces the estimate") {
    auto a = monte_carlo_utility(Strategy::cheat, params_of(0.3), 500, 21);
    auto b = monte_carlo_utility(Strategy::cheat, params_of(0.3), 500, 21);
    CHECK(a.mean == b.mean);
    CHECK(a.stderr_ == b.stderr_);
}

TEST_CASE("sign agreement between Monte Carlo and closed form away from the crossing") {
    for (double pi : {0.1, 0.25, 0.6, 0.9}) {
        auto est = monte_carlo_utility(Strategy::cheat, params_of(pi), 2000, 31);
        double closed = expected_gain(params_of(pi));
        INFO("pi=", pi, " mc=", est.mean, " closed=", closed);
        CHECK(est.mean * closed > 0.0);
    }
}

TEST_CASE("csv emission") {
    std::vector<SweepPoint> points{{0.25, 50.0, 100.0, Strategy::cheat, {12.5, 0.4, 100}}};
    std::string csv = sweep_to_csv(points);
    CHECK(csv.find("pi_c,G,S_slash,strategy,mean_utility,stderr\n") == 0);
    CHECK(csv.find("0.25,50,100,cheat,12.5,0.4") != std::string::npos);
}

TEST_CASE("validation") {
    EconParams bad = params_of(1.5);
    CHECK(!bad.validate().empty());
    bad = params_of(0.5);
    bad.s_slash = 0.0;
    CHECK(!bad.validate().empty());
    CHECK_THROWS_AS(monte_carlo_utility(Strategy::cheat, bad, 10, 1), std::invalid_argument);
}
