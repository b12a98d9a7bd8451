#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cfucb/rng.hpp"

namespace cfucb {

enum class ArrivalKind { exponential, truncated_gaussian };

// Per-user renewal process parameters. Exponential uses rate[i]; the
// positively truncated Gaussian uses mean[i]/stddev[i].
struct RenewalSpec {
    ArrivalKind kind = ArrivalKind::truncated_gaussian;
    std::vector<double> rate;
    std::vector<double> mean;
    std::vector<double> stddev;

    int n_users() const;
    void validate() const; // throws config_error

    static RenewalSpec exponential_shared(int n_users, double rate);
    static RenewalSpec truncated_gaussian_shared(int n_users, double mean, double stddev);
};

struct ArrivalEvent {
    double time = 0.0;     // S_j(n)
    int user = 0;          // a_k
    long index = 0;        // this user's n-th arrival, 1-based
    long global_index = 0; // k, 1-based position in the merged stream
};

// Stop after exactly `events` arrivals, or cover [0, time], whichever is set.
struct Horizon {
    long events = 0;
    double time = 0.0;

    static Horizon event_count(long k) { return Horizon{k, 0.0}; }
    static Horizon until_time(double t) { return Horizon{0, t}; }
};

// Ordering of the merged stream: time ascending, ties by user id. Exposed so
// tests can exercise the tie rule directly (ties have probability zero under
// continuous inter-arrivals).
bool event_before(const ArrivalEvent& a, const ArrivalEvent& b);

// One positive inter-arrival sample. The truncated Gaussian resamples until
// positive rather than clamping, preserving the truncated shape.
double sample_inter_arrival(const RenewalSpec& spec, int user, Engine& rng);

// Superpose all users' renewal processes into one time-ordered stream. Each
// user draws from its own substream derived from (seed, user id), so a
// user's arrival times do not depend on who else is present.
std::vector<ArrivalEvent> generate_stream(const RenewalSpec& spec, const Horizon& horizon,
                                          std::uint64_t seed);

// Arrival and pull counters N_j / N_{j,m}.
struct CounterTable {
    std::vector<long> arrivals;
    std::vector<std::vector<long>> pulls;

    CounterTable() = default;
    CounterTable(int n_users, int n_arms)
        : arrivals(n_users, 0), pulls(n_users, std::vector<long>(n_arms, 0)) {}

    void record_arrival(int user) { ++arrivals[user]; }
    void record_pull(int user, int arm) { ++pulls[user][arm]; }
    long total_arrivals() const;
};

// Counters implied by a processed prefix of the stream (pull counts stay
// zero; pulls are decisions, not arrivals).
CounterTable counters_at(std::span<const ArrivalEvent> processed, int n_users, int n_arms);

// Line-delimited dump ("time user_id index" per line) and bit-exact replay.
void write_stream(const std::filesystem::path& path, std::span<const ArrivalEvent> events);
std::vector<ArrivalEvent> read_stream(const std::filesystem::path& path);

} // namespace cfucb
