#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfucb/errors.hpp"
#include "cfucb/harness.hpp"
#include "cfucb/theory.hpp"

using namespace cfucb;

namespace {

// Independent oracle: bisection for the w <= -1 solution of w e^w = x.
// f(w) = w e^w - x is strictly decreasing on (-inf, -1].
double bisect_w_minus1(double x) {
    double lo = -700.0, hi = -1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mid * std::exp(mid) - x > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

TEST_CASE("Lambert W lower branch") {
    SUBCASE("branch point maps to -1") {
        CHECK(lambert_w_minus1(-std::exp(-1.0)) == doctest::Approx(-1.0).epsilon(1e-9));
    }

    SUBCASE("reference value at -0.1") {
        // frozen from an independent multiprecision evaluation
        CHECK(lambert_w_minus1(-0.1) == doctest::Approx(-3.5771520639572972).epsilon(1e-13));
    }

    SUBCASE("agrees with a bisection oracle across the domain") {
        for (double x : {-0.35, -0.2, -0.05, -1e-3, -1e-6, -1e-12}) {
            CHECK(lambert_w_minus1(x) == doctest::Approx(bisect_w_minus1(x)).epsilon(1e-9));
        }
    }

    SUBCASE("defining equation holds on a log grid") {
        const int n = 1000;
        // |x| log-spaced from 1e-300 up to just below 1/e
        const double lo = std::log(1e-300), hi = std::log(1.0 / std::exp(1.0) * (1 - 1e-12));
        for (int i = 0; i < n; ++i) {
            const double x = -std::exp(lo + (hi - lo) * i / (n - 1.0));
            const double w = lambert_w_minus1(x);
            CHECK(w <= -1.0);
            CHECK(std::abs(w * std::exp(w) - x) <= 1e-12 * std::max(std::abs(x), 1e-300));
        }
    }

    SUBCASE("outside the domain throws") {
        CHECK_THROWS_AS(lambert_w_minus1(-0.4), std::domain_error);
        CHECK_THROWS_AS(lambert_w_minus1(0.0), std::domain_error);
        CHECK_THROWS_AS(lambert_w_minus1(0.1), std::domain_error);
    }
}

TEST_CASE("growth function q") {
    SUBCASE("branch-point plug-in") {
        // B = C = d = 1, x = e makes the W argument exactly -1/e
        CHECK(q_function(std::exp(1.0), QParams{1.0, 1.0, 1}) == doctest::Approx(1.0).epsilon(1e-7));
    }

    SUBCASE("reference value") {
        // B=1, C=2, d=1, x=10: -W_{-1}(-0.01), frozen independently
        CHECK(q_function(10.0, QParams{1.0, 2.0, 1}) ==
              doctest::Approx(6.4727751243940047).epsilon(1e-12));
    }

    SUBCASE("matches the closed form via the bisection oracle") {
        const QParams p{3.0, 5.0, 2};
        for (double x : {50.0, 500.0, 5e4, 5e6}) {
            const double arg = -(1.0 / p.B) * std::pow(x / p.d, -p.C / p.B);
            const double expected = -p.B * bisect_w_minus1(arg);
            CHECK(q_function(x, p) == doctest::Approx(expected).epsilon(1e-9));
        }
    }

    SUBCASE("grid growth: super-logarithmic, sub-linear") {
        const QParams p{1.0, 2.0, 1};
        const double x0 = std::exp(0.5); // domain edge for these parameters
        const int n = 200;
        std::vector<double> xs, qs;
        for (int i = 0; i < n; ++i) {
            const double x = 1.02 * x0 * std::pow(1e6, i / (n - 1.0));
            xs.push_back(x);
            qs.push_back(q_function(x, p));
        }
        for (int i = 1; i < n; ++i) CHECK(qs[i] > qs[i - 1]); // strictly increasing
        // q/x falls toward zero over the tail
        for (int i = n / 2 + 1; i < n; ++i) CHECK(qs[i] / xs[i] < qs[i - 1] / xs[i - 1]);
        CHECK(qs[n - 1] / xs[n - 1] < 1e-2 * qs[0] / xs[0]);
        // q outgrows ln x by a constant factor approaching C = 2
        for (int i = n / 2; i < n; ++i) CHECK(qs[i] / std::log(xs[i]) > 1.5);
    }

    SUBCASE("too-small x is reported, not guessed") {
        const double x0 = std::exp(0.5);
        CHECK_THROWS_AS(q_function(0.99 * x0, QParams{1.0, 2.0, 1}), std::domain_error);
        CHECK_THROWS_AS(q_function(-1.0, QParams{1.0, 2.0, 1}), std::domain_error);
    }
}

TEST_CASE("lemma 10 implication") {
    SUBCASE("random instances always satisfy the implication") {
        Engine rng(606);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 100000; ++trial) {
            const double A = std::pow(10.0, 2.0 * u(rng) - 1.0);
            const double B = std::pow(10.0, 2.0 * u(rng) - 1.0);
            const double C = std::pow(10.0, 2.0 * u(rng) - 1.0);
            const double d = 1.0 + std::floor(5.0 * u(rng));
            const double x = d * std::pow(10.0, 4.0 * u(rng) - 0.3);
            const double y = std::pow(10.0, 6.0 * u(rng) - 2.0);
            CHECK(lemma10_property(A, B, C, d, x, y));
        }
    }

    SUBCASE("hand-checked vacuous case") {
        // A=B=C=d=1, x=e, y=0.5: LHS = 0.5 + ln 2 > 1 = C ln(x/d)
        CHECK(lemma10_property(1.0, 1.0, 1.0, 1.0, std::exp(1.0), 0.5));
    }

    SUBCASE("the bound is tight: plugging it back yields equality") {
        const double A = 1.0, B = 4.0, C = 3.0, d = 2.0, x = 400.0;
        const double arg = -(A / B) * std::pow(x / d, -C / B);
        const double bound = -(B / A) * lambert_w_minus1(arg);
        const double lhs = A * bound - B * std::log(bound);
        const double rhs = C * std::log(x / d);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
        // strictly inside the bound the premise holds and the implication is live
        CHECK(lemma10_property(A, B, C, d, x, 0.5 * bound));
    }
}

TEST_CASE("theorem 1 threshold") {
    CHECK(theorem1_threshold(1, 1, 1.0) == 5);
    CHECK(theorem1_threshold(1, 1, std::exp(-1.0)) == 9);

    SUBCASE("non-increasing in epsilon") {
        Engine rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            const long m = 1 + static_cast<long>(rng() % 12);
            const long d = 1 + static_cast<long>(rng() % 6);
            std::uniform_real_distribution<double> u(0.001, 1.0);
            double e1 = u(rng), e2 = u(rng);
            if (e1 > e2) std::swap(e1, e2);
            CHECK(theorem1_threshold(m, d, e1) >= theorem1_threshold(m, d, e2));
        }
    }

    SUBCASE("bad arguments rejected") {
        CHECK_THROWS_AS(theorem1_threshold(0, 1, 0.5), config_error);
        CHECK_THROWS_AS(theorem1_threshold(1, 1, 0.0), config_error);
        CHECK_THROWS_AS(theorem1_threshold(1, 1, 1.5), config_error);
    }
}

TEST_CASE("theorem 1 Monte Carlo") {
    SUBCASE("single arm always succeeds when users suffice") {
        CHECK(theorem1_monte_carlo(4, 1, 4, 500, 1) == 1.0);
    }

    SUBCASE("pigeonhole infeasibility") {
        CHECK(theorem1_monte_carlo(5, 3, 2, 500, 1) == 0.0);
    }

    SUBCASE("matches the exact multinomial probability") {
        // P(every one of 3 arms gets >= 2 of 12 uniform users) = 445896 / 3^12,
        // verified by exhaustive enumeration
        const double exact = 445896.0 / 531441.0;
        const long trials = 100000;
        const double estimate = theorem1_monte_carlo(12, 3, 2, trials, 777);
        const double sigma = std::sqrt(exact * (1.0 - exact) / static_cast<double>(trials));
        CHECK(std::abs(estimate - exact) < 3.0 * sigma);
    }
}

TEST_CASE("interval coverage stays within the theoretical bound") {
    CoverageSpec spec;
    spec.n_user = 10;
    spec.n_pulls = 5;
    spec.resamples = 2000;
    const CoverageResult res = interval_coverage(spec, 2025);
    CHECK(res.resamples == 2000);
    CHECK(res.self_frequency() <= res.limit);
    CHECK(res.cf_frequency() <= res.limit);
    CHECK(res.pass());
}

TEST_CASE("suboptimal-pull checker") {
    // Hand-built world: 2 users, 2 arms. User 0 prefers arm 0 (gap 0.5 on
    // arm 1), user 1 prefers arm 1 (gap 0.8 on arm 0).
    GapTable gaps;
    gaps.mu.resize(2, 2);
    gaps.mu << 1.0, 0.5, 0.2, 1.0;
    gaps.optimal_arm = {0, 1};
    gaps.gaps.resize(2, 2);
    gaps.gaps << 0.0, 0.5, 0.8, 0.0;

    auto make_record = [](long k, int user, int arm, double gap, long n_user,
                          std::vector<int> members, std::vector<long> member_arrivals, double c) {
        PullRecord r;
        r.k = k;
        r.user = user;
        r.arm = arm;
        r.was_suboptimal = gap > 0.0;
        r.gap = gap;
        r.cis_valid = true;
        r.n_user = n_user;
        r.chosen.cf_status = CfStatus::ok;
        r.chosen.c = c;
        EsetSnapshot snap;
        snap.member_arrivals = member_arrivals;
        snap.member_pulls.assign(members.size(), 1);
        snap.members = std::move(members);
        r.chosen.e_set = std::move(snap);
        return r;
    };

    SUBCASE("no suboptimal pulls: empty report") {
        std::vector<PullRecord> records{make_record(1, 0, 0, 0.0, 10, {1}, {10}, 1.0)};
        const auto report = lemma6_check(records, gaps, 1);
        CHECK(report.considered == 0);
        CHECK(report.violations == 0);
    }

    SUBCASE("a consistent pull passes, the inflated clone is caught") {
        // donor 1 has optimal arm 1 = the pulled arm; its off-arm gap 0.8
        // gives B = 16 / 0.64 = 25
        auto ok = make_record(1, 0, 1, 0.5, 50, {1}, {100}, 1.0);
        std::vector<PullRecord> records{ok};
        auto report = lemma6_check(records, gaps, 1);
        CHECK(report.considered == 1);
        CHECK(report.checked == 1);
        CHECK(report.violations == 0); // 100 - 25 ln 100 < 0 <= RHS

        // count inflation x100: LHS 10000 - 25 ln 10000 ~ 9770 exceeds
        // RHS = 8 (2 ln 5000) / 0.25 ~ 545
        auto corrupted = ok;
        corrupted.n_user *= 100;
        corrupted.chosen.e_set->member_arrivals[0] *= 100;
        std::vector<PullRecord> bad{corrupted};
        report = lemma6_check(bad, gaps, 1);
        CHECK(report.violations == 1);
        CHECK(report.violation_indices == std::vector<long>{1});
    }

    SUBCASE("donor sets disjoint from the arm's fans are skipped and counted") {
        // donor 1's optimal arm is 1, but the pull is arm 0: no donor in A_m
        auto r = make_record(2, 1, 0, 0.8, 30, {0}, {40}, 1.0);
        // swap roles: user 1 pulls arm 0, donor 0 has optimal arm 0 -> checkable
        const auto checkable = lemma6_check(std::vector<PullRecord>{r}, gaps, 1);
        CHECK(checkable.checked == 1);

        auto skipped = make_record(3, 0, 1, 0.5, 30, {0}, {40}, 1.0); // donor 0 not in A_1
        const auto report = lemma6_check(std::vector<PullRecord>{skipped}, gaps, 1);
        CHECK(report.considered == 1);
        CHECK(report.checked == 0);
        CHECK(report.skipped_no_donors == 1);
    }

    SUBCASE("pulls made while intervals were broken are not considered") {
        auto r = make_record(1, 0, 1, 0.5, 50, {1}, {100}, 1.0);
        r.cis_valid = false;
        const auto report = lemma6_check(std::vector<PullRecord>{r}, gaps, 1);
        CHECK(report.considered == 0);
    }

    SUBCASE("zero gap on a nominally suboptimal pull is a config error") {
        auto r = make_record(1, 0, 1, 0.5, 50, {1}, {100}, 1.0);
        r.gap = 0.0; // contradiction: flagged suboptimal with zero gap
        CHECK_THROWS_AS(lemma6_check(std::vector<PullRecord>{r}, gaps, 1), config_error);
    }

    SUBCASE("a real run reports zero violations") {
        ExperimentConfig cfg;
        cfg.n_users = 8;
        cfg.n_arms = 4;
        cfg.dim = 3;
        cfg.horizon_events = 2000;
        cfg.replications = 1;
        cfg.seed = 11;
        const auto result = run_replication(cfg, cfg.seed);
        CHECK(result.lemma6.violations == 0);
        CHECK(result.lemma6.considered > 0); // early phase always has suboptimal pulls
    }
}
