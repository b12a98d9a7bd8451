#include "cfucb/arrivals.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>

#include "cfucb/errors.hpp"

namespace cfucb {

int RenewalSpec::n_users() const {
    return static_cast<int>(kind == ArrivalKind::exponential ? rate.size() : mean.size());
}

void RenewalSpec::validate() const {
    if (n_users() == 0) throw config_error("RenewalSpec: empty user set");
    if (kind == ArrivalKind::exponential) {
        for (double r : rate)
            if (!(r > 0.0)) throw config_error("RenewalSpec: exponential rates must be > 0");
    } else {
        if (mean.size() != stddev.size())
            throw config_error("RenewalSpec: mean/stddev length mismatch");
        for (std::size_t i = 0; i < mean.size(); ++i)
            if (!(mean[i] > 0.0) || !(stddev[i] > 0.0))
                throw config_error("RenewalSpec: truncated Gaussian needs mean > 0 and stddev > 0");
    }
}

RenewalSpec RenewalSpec::exponential_shared(int n_users, double rate) {
    RenewalSpec s;
    s.kind = ArrivalKind::exponential;
    s.rate.assign(static_cast<std::size_t>(n_users), rate);
    return s;
}

RenewalSpec RenewalSpec::truncated_gaussian_shared(int n_users, double mean, double stddev) {
    RenewalSpec s;
    s.kind = ArrivalKind::truncated_gaussian;
    s.mean.assign(static_cast<std::size_t>(n_users), mean);
    s.stddev.assign(static_cast<std::size_t>(n_users), stddev);
    return s;
}

bool event_before(const ArrivalEvent& a, const ArrivalEvent& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.user < b.user;
}

double sample_inter_arrival(const RenewalSpec& spec, int user, Engine& rng) {
    if (spec.kind == ArrivalKind::exponential) {
        const double lambda = spec.rate[static_cast<std::size_t>(user)];
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double u;
        do { u = unif(rng); } while (u <= 0.0); // -ln(0) guard
        return -std::log(u) / lambda;
    }
    const double theta = spec.mean[static_cast<std::size_t>(user)];
    const double s = spec.stddev[static_cast<std::size_t>(user)];
    std::normal_distribution<double> gauss(theta, s);
    double x;
    do { x = gauss(rng); } while (x <= 0.0);
    return x;
}

std::vector<ArrivalEvent> generate_stream(const RenewalSpec& spec, const Horizon& horizon,
                                          std::uint64_t seed) {
    spec.validate();
    if (horizon.events <= 0 && !(horizon.time > 0.0))
        throw config_error("generate_stream: horizon must be a positive event count or time");

    const int n = spec.n_users();
    std::vector<Engine> engines;
    engines.reserve(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) engines.push_back(make_engine(seed, static_cast<std::uint64_t>(u)));

    // Min-heap of each user's next arrival, ties broken by user id.
    auto later = [](const ArrivalEvent& a, const ArrivalEvent& b) { return event_before(b, a); };
    std::priority_queue<ArrivalEvent, std::vector<ArrivalEvent>, decltype(later)> next(later);
    std::vector<long> per_user_index(static_cast<std::size_t>(n), 0);
    for (int u = 0; u < n; ++u)
        next.push(ArrivalEvent{sample_inter_arrival(spec, u, engines[static_cast<std::size_t>(u)]), u, 1, 0});

    std::vector<ArrivalEvent> out;
    if (horizon.events > 0) out.reserve(static_cast<std::size_t>(horizon.events));
    long k = 0;
    while (true) {
        if (horizon.events > 0 && k >= horizon.events) break;
        ArrivalEvent ev = next.top();
        if (horizon.events <= 0 && ev.time > horizon.time) break;
        next.pop();
        ev.global_index = ++k;
        out.push_back(ev);
        const auto u = static_cast<std::size_t>(ev.user);
        next.push(ArrivalEvent{ev.time + sample_inter_arrival(spec, ev.user, engines[u]),
                               ev.user, ev.index + 1, 0});
    }
    return out;
}

long CounterTable::total_arrivals() const {
    long total = 0;
    for (long a : arrivals) total += a;
    return total;
}

CounterTable counters_at(std::span<const ArrivalEvent> processed, int n_users, int n_arms) {
    CounterTable table(n_users, n_arms);
    for (const ArrivalEvent& ev : processed) table.record_arrival(ev.user);
    return table;
}

void write_stream(const std::filesystem::path& path, std::span<const ArrivalEvent> events) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_stream: cannot open " + path.string());
    char line[96];
    for (const ArrivalEvent& ev : events) {
        std::snprintf(line, sizeof(line), "%.17g %d %ld\n", ev.time, ev.user, ev.index);
        out << line;
    }
}

std::vector<ArrivalEvent> read_stream(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_stream: cannot open " + path.string());
    std::vector<ArrivalEvent> events;
    std::string line;
    long k = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ArrivalEvent ev;
        if (!(ls >> ev.time >> ev.user >> ev.index))
            throw std::runtime_error("read_stream: malformed line: " + line);
        ev.global_index = ++k;
        events.push_back(ev);
    }
    return events;
}

} // namespace cfucb
