#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfucb/arrivals.hpp"
#include "cfucb/model.hpp"
#include "cfucb/policy.hpp"
#include "cfucb/theory.hpp"

namespace cfucb {

// Full description of one experiment. The defaults reproduce the desk-scale
// reference experiment, so an empty config file is a valid config.
struct ExperimentConfig {
    int n_users = 50;
    int n_arms = 10;
    int dim = 5;
    double noise_variance = 0.1;
    double opt_in_fraction = 0.5; // first round(fraction * n_users) users opt in

    ArrivalKind arrival_kind = ArrivalKind::truncated_gaussian;
    double rate_min = 1.0;   // exponential: per-user rate ~ U[rate_min, rate_max]
    double rate_max = 1.0;
    double theta_min = 0.5;  // truncated Gaussian: per-user mean ~ U[theta_min, theta_max]
    double theta_max = 1.5;
    double arrival_stddev = 0.25;

    long horizon_events = 5000; // exactly one of events/time is positive
    double horizon_time = 0.0;

    int replications = 10;
    std::uint64_t seed = 42;
    double width_constant = 4.0;

    bool unobserved = false; // add covariates y = L x with loadings on the arms
    int unobserved_dim = 0;  // 0 means "same as dim"

    bool keep_logs = true; // full per-decision logs; trimmed runs keep only
                           // the suboptimal pulls the checkers need

    void validate() const; // throws config_error

    // Flat "key = value" text format, '#' comments, unknown keys rejected.
    static ExperimentConfig from_string(const std::string& text);
    static ExperimentConfig from_file(const std::filesystem::path& path);
};

// One instantiated world: profiles, ground truth, arrival parameters.
struct Scenario {
    std::vector<UserProfile> users;
    std::vector<ArmProfile> arms;
    RewardModel reward_model;
    GapTable gaps;
    RenewalSpec arrivals;
};

Scenario build_scenario(const ExperimentConfig& cfg, std::uint64_t replication_seed);

// The arrival stream a given replication will process (also used to dump
// streams without rerunning the policy).
std::vector<ArrivalEvent> materialize_arrivals(const ExperimentConfig& cfg,
                                               std::uint64_t replication_seed);

// Cumulative pseudo-regret curves indexed by global event k (1-based).
struct RegretSeries {
    std::vector<double> opted_in;
    std::vector<double> opted_out;
    std::vector<double> all;

    std::size_t size() const { return all.size(); }
};

struct ReplicationResult {
    std::uint64_t seed = 0;
    RegretSeries regret;
    std::vector<double> per_user_regret;
    std::vector<PullRecord> log; // all events, or just suboptimal pulls when trimmed
    Lemma6Report lemma6;
    long cf_unavailable = 0;
    long cf_no_pulls = 0;
    long oracle_solves = 0;
    long oracle_cache_hits = 0;
    // Empirical max/min ratio of per-user arrival rates. The donor-arrival
    // assumption is asymptotic and cannot be certified from a finite run;
    // this ratio is reported instead.
    double arrival_rate_ratio = 1.0;
};

ReplicationResult run_replication(const ExperimentConfig& cfg, std::uint64_t seed);

// Least-squares fit of series[k] ~ a + b ln k over the tail after dropping
// the first burn_in fraction. A constant series fits as (a = mean, b = 0,
// r_squared = 0).
struct FitResult {
    double a = 0.0;
    double b = 0.0;
    double r_squared = 0.0;
};
FitResult fit_log_curve(std::span<const double> series, double burn_in_fraction);

// (final - value at split fraction) / max(final, 1); near zero on a curve
// that has flattened out.
double plateau_metric(std::span<const double> series, double split_fraction);

struct ExperimentResult {
    RegretSeries mean; // pointwise average over replications
    std::vector<ReplicationResult> replications;
    FitResult fit_opted_out;   // over the final 80% of the averaged curve
    double plateau_opted_in = 0.0; // split at 0.6
    Lemma6Report lemma6;       // merged over replications
    long cf_unavailable = 0;
    long cf_no_pulls = 0;
    double arrival_rate_ratio_max = 1.0;
};

// Replications run with seeds seed + r. The parallel variant distributes
// replications over OpenMP threads; aggregation stays ordered by replication
// index, so results are identical for any thread count.
ExperimentResult run_experiment_serial(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 1);

void write_regret_csv(const std::filesystem::path& path, const RegretSeries& mean);
nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result);

} // namespace cfucb
