// Compares the serial reference implementations against their OpenMP
// counterparts and verifies on the way that both produce identical results.

#include <chrono>
#include <cmath>
#include <cstdio>

#include <omp.h>

#include "cfucb/harness.hpp"
#include "cfucb/theory.hpp"

using namespace cfucb;

namespace {

template <typename F>
double time_seconds(F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void row(const char* name, double serial, double parallel, bool identical) {
    std::printf("%-28s %10.3fs %10.3fs %8.2fx   %s\n", name, serial, parallel, serial / parallel,
                identical ? "identical" : "MISMATCH");
}

} // namespace

int main() {
    const int threads = omp_get_max_threads();
    std::printf("benchmark: serial reference vs OpenMP (%d threads)\n", threads);
    std::printf("%-28s %11s %11s %9s\n", "kernel", "serial", "parallel", "speedup");

    {
        ExperimentConfig cfg; // desk-scale defaults
        cfg.keep_logs = false;
        ExperimentResult serial_result, parallel_result;
        const double t_serial = time_seconds([&] { serial_result = run_experiment_serial(cfg); });
        const double t_parallel = time_seconds([&] { parallel_result = run_experiment(cfg, threads); });
        row("experiment (50u x 10a, R=10)", t_serial, t_parallel,
            serial_result.mean.all == parallel_result.mean.all);
    }

    {
        const long a_plus = theorem1_threshold(10, 5, 0.01);
        double serial_value = 0.0, parallel_value = 0.0;
        const double t_serial = time_seconds(
            [&] { serial_value = theorem1_monte_carlo_serial(a_plus, 10, 5, 400000, 7); });
        const double t_parallel = time_seconds(
            [&] { parallel_value = theorem1_monte_carlo(a_plus, 10, 5, 400000, 7, threads); });
        row("theorem-1 MC (4e5 trials)", t_serial, t_parallel, serial_value == parallel_value);
    }

    {
        CoverageSpec spec;
        spec.n_user = 100;
        spec.n_pulls = 50;
        spec.resamples = 40000;
        CoverageResult serial_result{}, parallel_result{};
        const double t_serial =
            time_seconds([&] { serial_result = interval_coverage_serial(spec, 11); });
        const double t_parallel =
            time_seconds([&] { parallel_result = interval_coverage(spec, 11, threads); });
        row("CI coverage (4e4 resamples)", t_serial, t_parallel,
            serial_result.self_violations == parallel_result.self_violations &&
                serial_result.cf_violations == parallel_result.cf_violations);
    }

    return 0;
}
