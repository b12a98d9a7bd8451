#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cfucb/arrivals.hpp"
#include "cfucb/oracle.hpp"

namespace cfucb {

// Running per-(user, arm) pull statistics.
struct UserArmStats {
    long pulls = 0;
    double reward_sum = 0.0;

    double mean() const { return reward_sum / static_cast<double>(pulls); }
};

// Self-experience confidence width sqrt(constant * ln N_j / N_{j,m}).
// Infinite while the arm is unpulled; ln 1 = 0 makes the width 0 at the
// user's very first arrival, which is accepted because unpulled arms force
// exploration through the infinite branch.
double self_width(long n_user, long n_user_arm, double constant = 4.0);

// Counterfactual width sqrt((2 ln d + 4 ln N_j) * c^2 / N_min). Infinite
// while some donor has not pulled the arm.
double cf_width(long n_user, int d, double c, long n_min);

// Coefficient-weighted combination of donor empirical means. Unavailable if
// any donor is unpulled on this arm.
std::optional<double> counterfactual_estimate(const SynthCoefficients& coeffs,
                                              std::span<const UserArmStats> member_stats);

// Donor selection for (target, arm): the d opted-in users with the highest
// pull counts for the arm, target excluded, ties broken by lower user id.
// Unavailable when fewer than d candidates exist or their features are rank
// deficient.
std::optional<SynthSet> build_e_set(int arm, const CounterTable& counters,
                                    std::span<const int> opted_in_ids, int d, int target,
                                    const SynthOracle& oracle);

// Why the counterfactual side of one arm's bundle is or is not present.
enum class CfStatus {
    opted_out,   // user does not share data; no counterfactual path at all
    unavailable, // donor set or coefficients unavailable (oracle fallback)
    no_pulls,    // coefficients exist but some donor never pulled the arm
    ok,
};

// Donor snapshot captured at decision time; enough to re-evaluate the
// confidence-interval and suboptimal-pull conditions after the fact.
struct EsetSnapshot {
    std::vector<int> members;
    std::vector<long> member_pulls;    // N_{i,m}(t)
    std::vector<long> member_arrivals; // N_i(t)
};

struct ArmDecision {
    double self_estimate = std::numeric_limits<double>::quiet_NaN();
    double self_ucb = std::numeric_limits<double>::infinity();
    CfStatus cf_status = CfStatus::opted_out;
    double cf_estimate = std::numeric_limits<double>::quiet_NaN();
    double cf_ucb = std::numeric_limits<double>::infinity();
    double c = std::numeric_limits<double>::quiet_NaN();
    long n_min = -1;
    std::optional<EsetSnapshot> e_set;
    double combined = std::numeric_limits<double>::infinity(); // min(self_ucb, cf_ucb)
};

struct UcbBundle {
    std::vector<ArmDecision> arms;
};

// Full snapshot of one decision. `chosen` duplicates the selected arm's entry
// so trimmed logs (bundle dropped) still support the post-hoc checkers.
struct PullRecord {
    long k = 0;
    double time = 0.0;
    int user = -1;
    int arm = -1;
    double reward = 0.0;
    long n_user = 0; // N_j(t), including the arrival that triggered the decision
    bool was_suboptimal = false;
    double gap = 0.0;
    bool cis_valid = true; // all tracked confidence intervals held at decision time
    ArmDecision chosen;
    std::vector<ArmDecision> bundle; // empty when the run trims logs
};

struct PolicyConfig {
    int n_users = 0;
    int n_arms = 0;
    int dim = 0;               // feature dimension, also the donor set size
    double width_constant = 4.0;
    double oracle_residual_tol = 1e-8;
};

// CFUCB decision state for one replication: pull statistics, counters, and
// the synthetic control oracle. Knows nothing about true means; ground truth
// stays on the harness side.
class CfucbPolicy {
  public:
    struct Selection {
        int arm = -1;
        UcbBundle bundle;
    };

    CfucbPolicy(PolicyConfig cfg, std::vector<FeatureVector> user_features,
                std::vector<bool> opted_in);

    // N_j is incremented before any widths are computed for the arrival.
    void record_arrival(int user) { counters_.record_arrival(user); }

    Selection select_arm(int user) const;

    void record_pull(int user, int arm, double reward);

    const CounterTable& counters() const { return counters_; }
    const UserArmStats& stats(int user, int arm) const {
        return stats_[static_cast<std::size_t>(user) * static_cast<std::size_t>(cfg_.n_arms) +
                      static_cast<std::size_t>(arm)];
    }
    bool opted_in(int user) const { return opted_in_[static_cast<std::size_t>(user)]; }
    const SynthOracle& oracle() const { return oracle_; }
    const PolicyConfig& config() const { return cfg_; }

    // Fallback accounting: decisions per arm where the counterfactual bound
    // degraded to +inf.
    long cf_unavailable_count() const { return n_unavailable_; }
    long cf_no_pulls_count() const { return n_no_pulls_; }

  private:
    PolicyConfig cfg_;
    std::vector<bool> opted_in_;
    std::vector<int> opted_in_ids_;
    SynthOracle oracle_;
    CounterTable counters_;
    std::vector<UserArmStats> stats_;
    mutable long n_unavailable_ = 0;
    mutable long n_no_pulls_ = 0;
};

// Line-delimited JSON serialization of decision logs.
void write_records(const std::filesystem::path& path, std::span<const PullRecord> records);
std::vector<PullRecord> read_records(const std::filesystem::path& path);

} // namespace cfucb
