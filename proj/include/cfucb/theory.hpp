#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfucb/model.hpp"
#include "cfucb/policy.hpp"

namespace cfucb {

// Lower real branch of the Lambert W function on [-1/e, 0): the w <= -1
// solution of w * e^w = x. Halley iteration; residual |w e^w - x| is driven
// below 1e-12 * max(|x|, 1e-300). Throws std::domain_error outside the
// domain.
double lambert_w_minus1(double x);

// Parameters of the growth function q(x) = -B * W_{-1}(-(1/B) (x/d)^(-C/B)),
// with the leading coefficient fixed at 1.
struct QParams {
    double B = 1.0; // sum over other arms of 16 / gap^2 for the donor
    double C = 1.0; // 16 c^2 / gap^2 for the (user, arm) pair
    int d = 1;
};

// Evaluates q at x. Throws std::domain_error when x is too small for the
// W argument to reach [-1/e, 0); q is undefined there and is reported,
// not guessed.
double q_function(double x, const QParams& p);

// Checks one instance of the implication
//   A y - B ln y < C ln(x/d)  =>  y < -(B/A) W_{-1}(-(A/B) (x/d)^(-C/B)).
// Returns true when the implication holds (including vacuously).
bool lemma10_property(double A, double B, double C, double d, double x, double y);

// Smallest opted-in population size satisfying
//   |A_+| >= |M| d + max(|M| d, 4(|M| ln|M| + |M| ln(1/eps) + d)).
long theorem1_threshold(long n_arms, long d, double eps);

// Assigns each of a_plus users an optimal arm uniformly at random and
// returns the fraction of trials in which every arm ends up with at least d
// users. Trial-parallel; results are identical for any thread count.
double theorem1_monte_carlo(long a_plus, long n_arms, long d, long trials, std::uint64_t seed,
                            int threads = 1);
double theorem1_monte_carlo_serial(long a_plus, long n_arms, long d, long trials,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Confidence-interval coverage (frozen-state Monte Carlo).
//
// Freezes one user with n_user arrivals and n_pulls pulls of a target arm,
// plus a solved donor set whose members each hold n_pulls pulls, then
// resamples the rewards and counts how often the true mean escapes the
// self-experience and counterfactual intervals. Both frequencies must stay
// below 1/N_j^2 plus three Monte Carlo standard errors.

struct CoverageSpec {
    long n_user = 10;       // N_j
    long n_pulls = 5;       // N_{j,m} and every donor's N_{i,m}
    int dim = 5;            // feature dimension / donor count
    double noise_sd = 1.0;  // reward noise standard deviation (1-sub-Gaussian)
    long resamples = 10000;
    double width_constant = 4.0;
};

struct CoverageResult {
    long resamples = 0;
    long self_violations = 0;
    long cf_violations = 0;
    double limit = 0.0; // N_j^-2 + 3 sqrt(N_j^-2 / resamples)

    double self_frequency() const { return static_cast<double>(self_violations) / resamples; }
    double cf_frequency() const { return static_cast<double>(cf_violations) / resamples; }
    bool pass() const { return self_frequency() <= limit && cf_frequency() <= limit; }
};

CoverageResult interval_coverage(const CoverageSpec& spec, std::uint64_t seed, int threads = 1);
CoverageResult interval_coverage_serial(const CoverageSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Suboptimal-pull necessary condition. For every logged suboptimal pull made
// while all tracked confidence intervals held, the inequality
//   min_{i in E ∩ A_m} { N_i(t) - (sum_{n != m} 16/gap_{i,n}^2) ln N_i(t) }
//     <= 8 c^2 (ln d + 2 ln N_j(t)) / gap_{j,m}^2
// must hold. A reported violation means the decision rule and the theory
// disagree, i.e. an implementation bug.

struct Lemma6Report {
    long considered = 0;        // suboptimal opted-in pulls with valid intervals
    long checked = 0;           // of those, pulls with a non-empty donor ∩ A_m set
    long skipped_no_donors = 0; // donor set absent or disjoint from A_m
    long violations = 0;
    std::vector<long> violation_indices; // global event indices k

    bool pass() const { return violations == 0; }
};

Lemma6Report lemma6_check(std::span<const PullRecord> records, const GapTable& gaps, int d);

} // namespace cfucb
