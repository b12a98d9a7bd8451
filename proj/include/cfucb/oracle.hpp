#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "cfucb/model.hpp"

namespace cfucb {

// A donor set for one (target user, arm) decision: exactly d member ids,
// target excluded.
struct SynthSet {
    int target = -1;
    std::vector<int> members;
};

// Output of one solve: coefficients aligned with the member order, their
// 1-norm c, and the reconstruction residual in feature space.
struct SynthCoefficients {
    Eigen::VectorXd a;
    double c = 0.0;        // sum of |a_i|
    double residual = 0.0; // ||sum a_i x_i - x_target||_2
};

// True iff the stacked feature matrix has numerical rank >= the feature
// dimension (smallest singular value > rel_tol * largest).
bool rank_ok(const std::vector<FeatureVector>& features, double rel_tol = 1e-10);

// Minimum-norm least squares for sum_i a_i x_i = target. Returns nullopt when
// the member matrix is numerically rank deficient or the residual exceeds
// residual_tol; callers treat that as "oracle unavailable" and fall back to
// self-experience only.
std::optional<SynthCoefficients> solve_coefficients(const FeatureVector& target,
                                                    const std::vector<FeatureVector>& member_xs,
                                                    double residual_tol = 1e-8);

inline double c_norm(const SynthCoefficients& coeffs) { return coeffs.c; }

// Feature-based synthetic control oracle over a fixed user population.
// Features are static, so solved coefficients are cached by
// (target id, ordered member ids) and never invalidated. Failures are cached
// too; a rank-deficient donor set stays rank deficient.
class SynthOracle {
  public:
    explicit SynthOracle(std::vector<FeatureVector> user_features, double residual_tol = 1e-8);

    const std::optional<SynthCoefficients>& coefficients(const SynthSet& set) const;

    const FeatureVector& feature(int user) const { return features_[static_cast<std::size_t>(user)]; }
    int n_users() const { return static_cast<int>(features_.size()); }
    int dim() const { return features_.empty() ? 0 : static_cast<int>(features_.front().size()); }

    struct Stats {
        long solves = 0;     // cache misses that ran the solver
        long cache_hits = 0;
        long failures = 0;   // solves that came back unavailable
    };
    const Stats& stats() const { return stats_; }

  private:
    std::vector<FeatureVector> features_;
    double residual_tol_;
    using Key = std::pair<int, std::vector<int>>;
    mutable std::map<Key, std::optional<SynthCoefficients>> cache_;
    mutable Stats stats_;
};

} // namespace cfucb
