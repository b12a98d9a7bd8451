#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cfucb/errors.hpp"
#include "cfucb/model.hpp"
#include "cfucb/oracle.hpp"

using namespace cfucb;

namespace {

FeatureVector vec(std::initializer_list<double> vals) {
    FeatureVector v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

std::vector<FeatureVector> basis(int d) {
    std::vector<FeatureVector> out;
    for (int i = 0; i < d; ++i) {
        FeatureVector e = FeatureVector::Zero(d);
        e[i] = 1.0;
        out.push_back(e);
    }
    return out;
}

} // namespace

TEST_CASE("rank check") {
    SUBCASE("standard basis is full rank") { CHECK(rank_ok(basis(4))); }

    SUBCASE("repeated vectors are rank deficient") {
        Engine rng(3);
        const FeatureVector x = sample_unit_sphere(3, rng);
        CHECK_FALSE(rank_ok({x, x, x}));
    }

    SUBCASE("fewer vectors than the dimension can never reach full rank") {
        Engine rng(5);
        CHECK_FALSE(rank_ok({sample_unit_sphere(3, rng), sample_unit_sphere(3, rng)}));
    }

    SUBCASE("random unit-sphere sets are full rank with probability 1") {
        Engine rng(101);
        for (int trial = 0; trial < 1000; ++trial) {
            std::vector<FeatureVector> xs;
            for (int i = 0; i < 4; ++i) xs.push_back(sample_unit_sphere(4, rng));
            CHECK(rank_ok(xs));
        }
    }
}

TEST_CASE("coefficient solving") {
    SUBCASE("basis expansion returns the target's coordinates") {
        const FeatureVector target = vec({0.2, -0.5, 0.3, 0.0, 0.7});
        const auto coeffs = solve_coefficients(target, basis(5));
        REQUIRE(coeffs.has_value());
        for (int i = 0; i < 5; ++i) CHECK(coeffs->a[i] == doctest::Approx(target[i]).epsilon(1e-12));
        CHECK(c_norm(*coeffs) == doctest::Approx(1.7).epsilon(1e-12)); // sum of |coordinates|
        CHECK(coeffs->residual < 1e-10);
    }

    SUBCASE("two-by-two system solved by hand") {
        // 0.5 * (1,1) + 0.5 * (1,-1) = (1,0)
        const auto coeffs = solve_coefficients(vec({1, 0}), {vec({1, 1}), vec({1, -1})});
        REQUIRE(coeffs.has_value());
        CHECK(coeffs->a[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(coeffs->a[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(c_norm(*coeffs) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("c-norm ignores signs") {
        SynthCoefficients coeffs;
        coeffs.a = vec({1, -1, 1});
        coeffs.c = coeffs.a.lpNorm<1>();
        CHECK(c_norm(coeffs) == doctest::Approx(3.0));
    }

    SUBCASE("rank-deficient member sets are unavailable") {
        Engine rng(9);
        const FeatureVector x = sample_unit_sphere(3, rng);
        CHECK_FALSE(solve_coefficients(sample_unit_sphere(3, rng), {x, x, x}).has_value());
    }

    SUBCASE("full-rank random instances solve with tiny residual") {
        Engine rng(303);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<FeatureVector> members;
            for (int i = 0; i < 5; ++i) members.push_back(sample_unit_sphere(5, rng));
            const auto coeffs = solve_coefficients(sample_unit_sphere(5, rng), members);
            REQUIRE(coeffs.has_value());
            CHECK(coeffs->residual < 1e-10);
        }
    }

    SUBCASE("dimension mismatch rejected") {
        CHECK_THROWS_AS(solve_coefficients(vec({1, 0, 0}), {vec({1, 0}), vec({0, 1})}), config_error);
    }
}

TEST_CASE("mean reconstruction matches the reward model") {
    // Assumption behind the whole construction: coefficients recovered from
    // features reproduce mean rewards for every arm, including runs where
    // unobserved covariates ride along as a linear map of the features.
    Engine rng(777);
    for (bool with_unobserved : {false, true}) {
        Eigen::MatrixXd map = Eigen::MatrixXd::Zero(3, 5);
        if (with_unobserved) {
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 5; ++c) map(r, c) = gauss(rng);
        }
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<UserProfile> users;
            for (int j = 0; j < 6; ++j) {
                UserProfile u{j, sample_unit_sphere(5, rng), std::nullopt, true};
                if (with_unobserved) u.y = map * u.x;
                users.push_back(std::move(u));
            }
            std::vector<ArmProfile> arms;
            for (int m = 0; m < 4; ++m) {
                ArmProfile a{m, sample_unit_sphere(5, rng), std::nullopt};
                if (with_unobserved) a.lambda = sample_unit_sphere(3, rng);
                arms.push_back(std::move(a));
            }

            std::vector<FeatureVector> member_xs;
            for (int i = 1; i <= 5; ++i) member_xs.push_back(users[static_cast<std::size_t>(i)].x);
            const auto coeffs = solve_coefficients(users[0].x, member_xs);
            REQUIRE(coeffs.has_value());
            for (const auto& arm : arms) {
                double synthetic = 0.0;
                for (int i = 1; i <= 5; ++i)
                    synthetic += coeffs->a[i - 1] * mean_reward(users[static_cast<std::size_t>(i)], arm);
                CHECK(std::abs(synthetic - mean_reward(users[0], arm)) < 1e-8);
            }
        }
    }
}

TEST_CASE("oracle cache") {
    Engine rng(1234);
    std::vector<FeatureVector> features;
    for (int i = 0; i < 8; ++i) features.push_back(sample_unit_sphere(4, rng));
    SynthOracle oracle(features);

    const SynthSet set{0, {3, 1, 5, 7}};
    const auto& first = oracle.coefficients(set);
    REQUIRE(first.has_value());
    const Eigen::VectorXd a_first = first->a;
    const double c_first = first->c;
    CHECK(oracle.stats().solves == 1);

    const auto& second = oracle.coefficients(set);
    REQUIRE(second.has_value());
    CHECK(oracle.stats().cache_hits == 1);
    CHECK(oracle.stats().solves == 1);
    // cached and fresh results agree bit for bit
    for (int i = 0; i < 4; ++i) CHECK(second->a[i] == a_first[i]);
    CHECK(second->c == c_first);

    // a different member order is a different key but an equivalent solve
    const SynthSet permuted{0, {1, 3, 5, 7}};
    const auto& third = oracle.coefficients(permuted);
    REQUIRE(third.has_value());
    CHECK(oracle.stats().solves == 2);
    CHECK(third->a[0] == doctest::Approx(a_first[1]).epsilon(1e-12));
    CHECK(third->c == doctest::Approx(c_first).epsilon(1e-12));
}
