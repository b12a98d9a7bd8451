#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cfucb/rng.hpp"

namespace cfucb {

using FeatureVector = Eigen::VectorXd;

// A user: observable features x, optional unobserved covariate y, and the
// opt-in flag deciding whether the recommender sees this user's data.
struct UserProfile {
    int id = 0;
    FeatureVector x;
    std::optional<FeatureVector> y;
    bool opted_in = true;
};

// An arm: observable loading beta and optional unobserved loading lambda.
struct ArmProfile {
    int id = 0;
    FeatureVector beta;
    std::optional<FeatureVector> lambda;
};

struct RewardModel {
    double noise_variance = 0.1; // variance of the additive Gaussian noise
};

// Ground truth known only to the harness: mean rewards, each user's optimal
// arm, and the per-pair gaps used for pseudo-regret accounting.
struct GapTable {
    Eigen::MatrixXd mu;            // users x arms
    std::vector<int> optimal_arm;  // per user, ties broken toward lowest id
    Eigen::MatrixXd gaps;          // max_n mu(j,n) - mu(j,m), >= 0

    int n_users() const { return static_cast<int>(mu.rows()); }
    int n_arms() const { return static_cast<int>(mu.cols()); }
};

// Uniform draw from the surface of the unit sphere in the given dimension
// (standard normal vector, normalized).
FeatureVector sample_unit_sphere(int dim, Engine& rng);

// True mean reward x.beta + y.lambda (the unobserved term only when both
// sides carry it).
double mean_reward(const UserProfile& user, const ArmProfile& arm);

// mean_reward plus one Gaussian noise sample. noise_variance == 0 returns
// the mean exactly and consumes no randomness.
double draw_reward(const UserProfile& user, const ArmProfile& arm,
                   const RewardModel& model, Engine& rng);

GapTable build_gap_table(const std::vector<UserProfile>& users,
                         const std::vector<ArmProfile>& arms);

} // namespace cfucb
