#include "cfucb/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfucb/errors.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace cfucb {

namespace {

constexpr double kBranchPoint = -0.36787944117144233; // -1/e rounded to double

double residual(double w, double x) { return w * std::exp(w) - x; }

// One Halley step for f(w) = w e^w - x.
double halley_step(double w, double x) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * (w + 1.0));
    return w - f / denom;
}

} // namespace

double lambert_w_minus1(double x) {
    if (!(x >= kBranchPoint * (1.0 + 4e-16)) || !(x < 0.0))
        throw std::domain_error("lambert_w_minus1: x must lie in [-1/e, 0)");

    const double p2 = 2.0 * (std::exp(1.0) * x + 1.0); // 2(1 + e x), >= 0 in-domain
    if (p2 <= 0.0) return -1.0;                        // at (or within rounding of) the branch point

    double w;
    if (p2 < 2e-2) {
        // Near the branch point the asymptotic guess collapses toward -1 and
        // Halley's denominator vanishes; start from the branch series in
        // p = -sqrt(2(1 + e x)) instead.
        const double p = -std::sqrt(p2);
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    } else {
        const double log_mx = std::log(-x);
        w = log_mx - std::log(-log_mx);
    }

    const double tol = 1e-12 * std::max(std::abs(x), 1e-300);
    for (int it = 0; it < 100; ++it) {
        if (std::abs(residual(w, x)) <= tol) return w;
        const double next = halley_step(w, x);
        if (!std::isfinite(next) || next >= -1.0) break; // leave the branch: fall back
        w = next;
    }
    if (std::abs(residual(w, x)) <= tol) return w;

    // Bisection fallback. f(w) = w e^w - x is strictly decreasing on
    // (-inf, -1] with f(-745) ~ -x > 0 and f(-1) = -1/e - x <= 0.
    double lo = -745.0, hi = -1.0;
    if (w > lo && w < hi) (residual(w, x) > 0.0 ? lo : hi) = w;
    double mid = hi;
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double f = residual(mid, x);
        if (std::abs(f) <= tol) return mid;
        (f > 0.0 ? lo : hi) = mid;
    }
    return mid;
}

double q_function(double x, const QParams& p) {
    if (!(p.B > 0.0) || !(p.C > 0.0) || p.d < 1)
        throw config_error("q_function: requires B > 0, C > 0, d >= 1");
    if (!(x > 0.0)) throw std::domain_error("q_function: x must be > 0");
    // argument of W: -(1/B) (x/d)^(-C/B), computed in log space
    const double log_arg = -std::log(p.B) - (p.C / p.B) * std::log(x / p.d);
    const double arg = -std::exp(log_arg);
    if (!(arg >= kBranchPoint * (1.0 + 4e-16)))
        throw std::domain_error("q_function: x too small, W argument below -1/e");
    return -p.B * lambert_w_minus1(arg);
}

bool lemma10_property(double A, double B, double C, double d, double x, double y) {
    if (!(A > 0.0) || !(B > 0.0) || !(C > 0.0) || !(x / d > 0.0) || !(y > 0.0))
        throw config_error("lemma10_property: requires A,B,C > 0, x/d > 0, y > 0");
    const bool premise = A * y - B * std::log(y) < C * std::log(x / d);
    if (!premise) return true; // vacuous
    const double log_arg = std::log(A / B) - (C / B) * std::log(x / d);
    const double arg = -std::exp(log_arg);
    if (arg < kBranchPoint * (1.0 + 4e-16)) return false; // premise held yet bound undefined
    const double bound = -(B / A) * lambert_w_minus1(arg);
    return y < bound;
}

long theorem1_threshold(long n_arms, long d, double eps) {
    if (n_arms < 1 || d < 1 || !(eps > 0.0) || eps > 1.0)
        throw config_error("theorem1_threshold: requires |M| >= 1, d >= 1, eps in (0,1]");
    const double md = static_cast<double>(n_arms) * static_cast<double>(d);
    const double slack = 4.0 * (n_arms * std::log(static_cast<double>(n_arms)) +
                                n_arms * std::log(1.0 / eps) + static_cast<double>(d));
    const double x = md + std::max(md, slack);
    return static_cast<long>(std::ceil(x - 1e-9));
}

namespace {

// One trial: drop a_plus users uniformly into n_arms bins, succeed if every
// bin holds at least d.
bool theorem1_trial(long a_plus, long n_arms, long d, SplitMix64& rng,
                    std::vector<long>& scratch) {
    scratch.assign(static_cast<std::size_t>(n_arms), 0);
    for (long u = 0; u < a_plus; ++u)
        ++scratch[static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(n_arms)))];
    for (long count : scratch)
        if (count < d) return false;
    return true;
}

} // namespace

double theorem1_monte_carlo_serial(long a_plus, long n_arms, long d, long trials,
                                   std::uint64_t seed) {
    if (trials < 1) throw config_error("theorem1_monte_carlo: trials must be >= 1");
    if (a_plus < 0 || n_arms < 1 || d < 0) throw config_error("theorem1_monte_carlo: bad sizes");
    long successes = 0;
    std::vector<long> scratch;
    for (long t = 0; t < trials; ++t) {
        SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        successes += theorem1_trial(a_plus, n_arms, d, rng, scratch) ? 1 : 0;
    }
    return static_cast<double>(successes) / static_cast<double>(trials);
}

double theorem1_monte_carlo(long a_plus, long n_arms, long d, long trials, std::uint64_t seed,
                            int threads) {
    if (threads <= 1) return theorem1_monte_carlo_serial(a_plus, n_arms, d, trials, seed);
    if (trials < 1) throw config_error("theorem1_monte_carlo: trials must be >= 1");
    if (a_plus < 0 || n_arms < 1 || d < 0) throw config_error("theorem1_monte_carlo: bad sizes");
    long successes = 0;
#pragma omp parallel num_threads(threads) reduction(+ : successes)
    {
        std::vector<long> scratch;
#pragma omp for schedule(static)
        for (long t = 0; t < trials; ++t) {
            SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
            successes += theorem1_trial(a_plus, n_arms, d, rng, scratch) ? 1 : 0;
        }
    }
    return static_cast<double>(successes) / static_cast<double>(trials);
}

// ---------------------------------------------------------------------------
// Coverage kernel

namespace {

struct FrozenCoverageState {
    double mu_target = 0.0;        // true mean of the frozen (user, arm) pair
    std::vector<double> mu_donor;  // true donor means for the arm
    Eigen::VectorXd a;             // solved coefficients
    double c = 0.0;
    double self_w = 0.0;
    double cf_w = 0.0;
};

// Build one random frozen instance: unit-sphere users and arm, exact solve
// for the target's coefficients over d donors.
FrozenCoverageState freeze_state(const CoverageSpec& spec, std::uint64_t seed) {
    Engine rng = make_engine(seed, seed_salt::profiles);
    FrozenCoverageState st;
    const FeatureVector beta = sample_unit_sphere(spec.dim, rng);
    const FeatureVector target_x = sample_unit_sphere(spec.dim, rng);
    std::vector<FeatureVector> donors;
    std::optional<SynthCoefficients> coeffs;
    do {
        donors.clear();
        for (int i = 0; i < spec.dim; ++i) donors.push_back(sample_unit_sphere(spec.dim, rng));
        coeffs = solve_coefficients(target_x, donors);
    } while (!coeffs.has_value()); // rank deficiency has probability zero
    st.mu_target = target_x.dot(beta);
    for (const auto& x : donors) st.mu_donor.push_back(x.dot(beta));
    st.a = coeffs->a;
    st.c = coeffs->c;
    st.self_w = self_width(spec.n_user, spec.n_pulls, spec.width_constant);
    st.cf_w = cf_width(spec.n_user, spec.dim, st.c, spec.n_pulls);
    return st;
}

// One resample: redraw all frozen rewards, recompute the empirical means,
// and test both intervals. Bit 0 = self violation, bit 1 = counterfactual.
int coverage_trial(const CoverageSpec& spec, const FrozenCoverageState& st, Engine& rng) {
    std::normal_distribution<double> noise(0.0, spec.noise_sd);
    double own_sum = 0.0;
    for (long p = 0; p < spec.n_pulls; ++p) own_sum += st.mu_target + noise(rng);
    const double own_mean = own_sum / static_cast<double>(spec.n_pulls);

    double cf_estimate = 0.0;
    for (std::size_t i = 0; i < st.mu_donor.size(); ++i) {
        double donor_sum = 0.0;
        for (long p = 0; p < spec.n_pulls; ++p) donor_sum += st.mu_donor[i] + noise(rng);
        cf_estimate += st.a(static_cast<Eigen::Index>(i)) * (donor_sum / static_cast<double>(spec.n_pulls));
    }

    int violations = 0;
    if (std::abs(own_mean - st.mu_target) > st.self_w) violations |= 1;
    if (std::abs(cf_estimate - st.mu_target) > st.cf_w) violations |= 2;
    return violations;
}

} // namespace

CoverageResult interval_coverage_serial(const CoverageSpec& spec, std::uint64_t seed) {
    if (spec.n_user < 1 || spec.n_pulls < 1 || spec.resamples < 1 || spec.dim < 1)
        throw config_error("interval_coverage: all sizes must be positive");
    const FrozenCoverageState st = freeze_state(spec, seed);
    CoverageResult res;
    res.resamples = spec.resamples;
    const double inv_nj2 = 1.0 / (static_cast<double>(spec.n_user) * static_cast<double>(spec.n_user));
    res.limit = inv_nj2 + 3.0 * std::sqrt(inv_nj2 / static_cast<double>(spec.resamples));
    for (long t = 0; t < spec.resamples; ++t) {
        Engine rng = make_engine(seed, 0x1000000ULL + static_cast<std::uint64_t>(t));
        const int v = coverage_trial(spec, st, rng);
        res.self_violations += v & 1;
        res.cf_violations += (v >> 1) & 1;
    }
    return res;
}

CoverageResult interval_coverage(const CoverageSpec& spec, std::uint64_t seed, int threads) {
    if (threads <= 1) return interval_coverage_serial(spec, seed);
    if (spec.n_user < 1 || spec.n_pulls < 1 || spec.resamples < 1 || spec.dim < 1)
        throw config_error("interval_coverage: all sizes must be positive");
    const FrozenCoverageState st = freeze_state(spec, seed);
    CoverageResult res;
    res.resamples = spec.resamples;
    const double inv_nj2 = 1.0 / (static_cast<double>(spec.n_user) * static_cast<double>(spec.n_user));
    res.limit = inv_nj2 + 3.0 * std::sqrt(inv_nj2 / static_cast<double>(spec.resamples));
    long self_violations = 0, cf_violations = 0;
#pragma omp parallel for schedule(static) num_threads(threads) \
    reduction(+ : self_violations, cf_violations)
    for (long t = 0; t < spec.resamples; ++t) {
        Engine rng = make_engine(seed, 0x1000000ULL + static_cast<std::uint64_t>(t));
        const int v = coverage_trial(spec, st, rng);
        self_violations += v & 1;
        cf_violations += (v >> 1) & 1;
    }
    res.self_violations = self_violations;
    res.cf_violations = cf_violations;
    return res;
}

// ---------------------------------------------------------------------------
// Suboptimal-pull checker

Lemma6Report lemma6_check(std::span<const PullRecord> records, const GapTable& gaps, int d) {
    if (d < 1) throw config_error("lemma6_check: d must be >= 1");

    // Per-user sum over the user's non-optimal arms of 16 / gap^2. Only ever
    // needed for donors whose optimal arm is the pulled arm, so the excluded
    // zero gap is exactly the donor's own optimal arm.
    std::vector<double> b_coeff(static_cast<std::size_t>(gaps.n_users()), 0.0);
    for (int i = 0; i < gaps.n_users(); ++i) {
        double b = 0.0;
        for (int n = 0; n < gaps.n_arms(); ++n) {
            if (n == gaps.optimal_arm[static_cast<std::size_t>(i)]) continue;
            const double gap = gaps.gaps(i, n);
            b += (gap > 0.0) ? 16.0 / (gap * gap) : std::numeric_limits<double>::infinity();
        }
        b_coeff[static_cast<std::size_t>(i)] = b;
    }

    Lemma6Report report;
    for (const PullRecord& r : records) {
        if (!r.was_suboptimal) continue;
        if (r.chosen.cf_status == CfStatus::opted_out) continue; // outside the algorithm's scope
        if (!r.cis_valid) continue;                              // hypothesis did not hold
        if (!(r.gap > 0.0))
            throw config_error("lemma6_check: zero gap recorded for a suboptimal pull");
        ++report.considered;

        if (!r.chosen.e_set.has_value() || !(r.chosen.c > 0.0)) {
            ++report.skipped_no_donors;
            continue;
        }
        const EsetSnapshot& snap = *r.chosen.e_set;
        double lhs = std::numeric_limits<double>::infinity();
        bool any_donor = false;
        for (std::size_t i = 0; i < snap.members.size(); ++i) {
            const int donor = snap.members[i];
            if (gaps.optimal_arm[static_cast<std::size_t>(donor)] != r.arm) continue;
            any_donor = true;
            const double n_i = static_cast<double>(snap.member_arrivals[i]);
            lhs = std::min(lhs, n_i - b_coeff[static_cast<std::size_t>(donor)] * std::log(n_i));
        }
        if (!any_donor) {
            ++report.skipped_no_donors;
            continue;
        }
        ++report.checked;

        const double c2 = r.chosen.c * r.chosen.c;
        const double rhs = 8.0 * c2 *
                           (std::log(static_cast<double>(d)) +
                            2.0 * std::log(static_cast<double>(r.n_user))) /
                           (r.gap * r.gap);
        if (lhs > rhs) {
            ++report.violations;
            report.violation_indices.push_back(r.k);
        }
    }
    return report;
}

} // namespace cfucb
