#include "cfucb/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cfucb/errors.hpp"

namespace cfucb {

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
    if (n_users < 1 || n_arms < 1 || dim < 1 || replications < 1)
        throw config_error("config: users, arms, dim and replications must be positive");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
        throw config_error("config: noise_variance must be finite and >= 0");
    if (!(opt_in_fraction >= 0.0) || !(opt_in_fraction <= 1.0))
        throw config_error("config: opt_in_fraction must lie in [0, 1]");
    if (opt_in_fraction > 0.0 && n_users < dim + 1)
        throw config_error("config: need users >= dim + 1 to form donor sets");
    const bool by_events = horizon_events > 0;
    const bool by_time = horizon_time > 0.0;
    if (by_events == by_time)
        throw config_error("config: set exactly one of horizon_events / horizon_time");
    if (arrival_kind == ArrivalKind::exponential) {
        if (!(rate_min > 0.0) || rate_max < rate_min)
            throw config_error("config: exponential rates need 0 < rate_min <= rate_max");
    } else {
        if (!(theta_min > 0.0) || theta_max < theta_min || !(arrival_stddev > 0.0))
            throw config_error("config: truncated Gaussian needs 0 < theta_min <= theta_max and stddev > 0");
    }
    if (unobserved_dim < 0) throw config_error("config: unobserved_dim must be >= 0");
    if (!(width_constant > 0.0)) throw config_error("config: width_constant must be > 0");
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config: bad boolean for " + key + ": " + v);
}

} // namespace

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.empty())
            throw config_error("config: empty value for " + key);
        try {
            if (key == "users") cfg.n_users = std::stoi(value);
            else if (key == "arms") cfg.n_arms = std::stoi(value);
            else if (key == "dim") cfg.dim = std::stoi(value);
            else if (key == "noise_variance") cfg.noise_variance = std::stod(value);
            else if (key == "opt_in_fraction") cfg.opt_in_fraction = std::stod(value);
            else if (key == "arrival_kind") {
                if (value == "exponential") cfg.arrival_kind = ArrivalKind::exponential;
                else if (value == "truncated_gaussian") cfg.arrival_kind = ArrivalKind::truncated_gaussian;
                else throw config_error("config: unknown arrival_kind " + value);
            } else if (key == "rate") { cfg.rate_min = cfg.rate_max = std::stod(value); }
            else if (key == "rate_min") cfg.rate_min = std::stod(value);
            else if (key == "rate_max") cfg.rate_max = std::stod(value);
            else if (key == "theta_min") cfg.theta_min = std::stod(value);
            else if (key == "theta_max") cfg.theta_max = std::stod(value);
            else if (key == "arrival_stddev") cfg.arrival_stddev = std::stod(value);
            else if (key == "horizon_events") { cfg.horizon_events = std::stol(value); if (cfg.horizon_events > 0) cfg.horizon_time = 0.0; }
            else if (key == "horizon_time") { cfg.horizon_time = std::stod(value); if (cfg.horizon_time > 0.0) cfg.horizon_events = 0; }
            else if (key == "replications") cfg.replications = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "width_constant") cfg.width_constant = std::stod(value);
            else if (key == "unobserved") cfg.unobserved = parse_bool(value, key);
            else if (key == "unobserved_dim") cfg.unobserved_dim = std::stoi(value);
            else if (key == "keep_logs") cfg.keep_logs = parse_bool(value, key);
            else throw config_error("config: unknown key " + key);
        } catch (const std::invalid_argument& e) {
            throw config_error("config: bad value for " + key + ": " + value);
        } catch (const std::out_of_range&) {
            throw config_error("config: value out of range for " + key + ": " + value);
        }
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_string(buffer.str());
}

// ---------------------------------------------------------------------------
// Scenario

Scenario build_scenario(const ExperimentConfig& cfg, std::uint64_t replication_seed) {
    cfg.validate();
    Scenario sc;
    Engine prof_rng = make_engine(replication_seed, seed_salt::profiles);

    const int n_opt = static_cast<int>(std::llround(cfg.opt_in_fraction * cfg.n_users));
    sc.users.reserve(static_cast<std::size_t>(cfg.n_users));
    for (int j = 0; j < cfg.n_users; ++j)
        sc.users.push_back(UserProfile{j, sample_unit_sphere(cfg.dim, prof_rng), std::nullopt, j < n_opt});
    sc.arms.reserve(static_cast<std::size_t>(cfg.n_arms));
    for (int m = 0; m < cfg.n_arms; ++m)
        sc.arms.push_back(ArmProfile{m, sample_unit_sphere(cfg.dim, prof_rng), std::nullopt});

    if (cfg.unobserved) {
        // y_j = L x_j: a shared linear map of the observable features, so any
        // coefficients reconstructing x_j also reconstruct y_j and the oracle
        // contract holds with covariates the solver never sees.
        const int du = cfg.unobserved_dim > 0 ? cfg.unobserved_dim : cfg.dim;
        std::normal_distribution<double> gauss(0.0, 1.0);
        Eigen::MatrixXd map(du, cfg.dim);
        for (int r = 0; r < du; ++r)
            for (int c = 0; c < cfg.dim; ++c) map(r, c) = gauss(prof_rng) / std::sqrt(cfg.dim);
        for (auto& user : sc.users) user.y = map * user.x;
        for (auto& arm : sc.arms) arm.lambda = sample_unit_sphere(du, prof_rng);
    }

    sc.reward_model.noise_variance = cfg.noise_variance;
    sc.gaps = build_gap_table(sc.users, sc.arms);

    Engine param_rng = make_engine(replication_seed, seed_salt::arrival_params);
    if (cfg.arrival_kind == ArrivalKind::exponential) {
        sc.arrivals.kind = ArrivalKind::exponential;
        std::uniform_real_distribution<double> unif(cfg.rate_min, cfg.rate_max);
        for (int j = 0; j < cfg.n_users; ++j)
            sc.arrivals.rate.push_back(cfg.rate_min == cfg.rate_max ? cfg.rate_min : unif(param_rng));
    } else {
        sc.arrivals.kind = ArrivalKind::truncated_gaussian;
        std::uniform_real_distribution<double> unif(cfg.theta_min, cfg.theta_max);
        for (int j = 0; j < cfg.n_users; ++j) {
            sc.arrivals.mean.push_back(cfg.theta_min == cfg.theta_max ? cfg.theta_min : unif(param_rng));
            sc.arrivals.stddev.push_back(cfg.arrival_stddev);
        }
    }
    return sc;
}

std::vector<ArrivalEvent> materialize_arrivals(const ExperimentConfig& cfg,
                                               std::uint64_t replication_seed) {
    const Scenario sc = build_scenario(cfg, replication_seed);
    const Horizon horizon = cfg.horizon_events > 0 ? Horizon::event_count(cfg.horizon_events)
                                                   : Horizon::until_time(cfg.horizon_time);
    return generate_stream(sc.arrivals, horizon, derive_seed(replication_seed, seed_salt::arrival_stream));
}

// ---------------------------------------------------------------------------
// Confidence-interval validity tracking.
//
// The suboptimal-pull condition is only claimed while every tracked interval
// contains its true mean. Self intervals only change when their user arrives,
// so each user's flag is refreshed at the user's own decisions and stays
// exact in between. Counterfactual validity is tracked from each user's most
// recent decision snapshot; donor statistics may drift between a user's
// arrivals, which makes this flag a snapshot-based approximation.

namespace {

class ValidityTracker {
  public:
    ValidityTracker(const GapTable& gaps, double width_constant)
        : gaps_(gaps), width_constant_(width_constant),
          valid_(static_cast<std::size_t>(gaps.n_users()), 1) {}

    bool bundle_valid(int user, const UcbBundle& bundle) const {
        for (int m = 0; m < gaps_.n_arms(); ++m) {
            const ArmDecision& dec = bundle.arms[static_cast<std::size_t>(m)];
            const double mu = gaps_.mu(user, m);
            if (std::isfinite(dec.self_ucb) &&
                std::abs(dec.self_estimate - mu) > dec.self_ucb - dec.self_estimate)
                return false;
            if (dec.cf_status == CfStatus::ok &&
                std::abs(dec.cf_estimate - mu) > dec.cf_ucb - dec.cf_estimate)
                return false;
        }
        return true;
    }

    // Hypothesis at this decision: the arriving user checked fresh from the
    // bundle, everyone else from their last refresh.
    bool hypothesis_holds(int user, const UcbBundle& bundle) const {
        const bool others_ok =
            n_invalid_ == 0 || (n_invalid_ == 1 && !valid_[static_cast<std::size_t>(user)]);
        return others_ok && bundle_valid(user, bundle);
    }

    void refresh_after_pull(int user, const UcbBundle& bundle, const CfucbPolicy& policy) {
        bool ok = true;
        const long n_user = policy.counters().arrivals[static_cast<std::size_t>(user)];
        for (int m = 0; m < gaps_.n_arms() && ok; ++m) {
            const double mu = gaps_.mu(user, m);
            const UserArmStats& st = policy.stats(user, m);
            if (st.pulls > 0 &&
                std::abs(st.mean() - mu) > self_width(n_user, st.pulls, width_constant_))
                ok = false;
            const ArmDecision& dec = bundle.arms[static_cast<std::size_t>(m)];
            if (dec.cf_status == CfStatus::ok &&
                std::abs(dec.cf_estimate - mu) > dec.cf_ucb - dec.cf_estimate)
                ok = false;
        }
        const auto idx = static_cast<std::size_t>(user);
        n_invalid_ += (valid_[idx] ? 0 : -1) + (ok ? 0 : 1);
        valid_[idx] = ok ? 1 : 0;
    }

  private:
    const GapTable& gaps_;
    double width_constant_;
    std::vector<char> valid_;
    long n_invalid_ = 0;
};

} // namespace

// ---------------------------------------------------------------------------
// Replication loop

ReplicationResult run_replication(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Scenario sc = build_scenario(cfg, seed);
    const Horizon horizon = cfg.horizon_events > 0 ? Horizon::event_count(cfg.horizon_events)
                                                   : Horizon::until_time(cfg.horizon_time);
    const std::vector<ArrivalEvent> stream =
        generate_stream(sc.arrivals, horizon, derive_seed(seed, seed_salt::arrival_stream));

    std::vector<FeatureVector> features;
    std::vector<bool> opted;
    features.reserve(sc.users.size());
    opted.reserve(sc.users.size());
    for (const auto& user : sc.users) {
        features.push_back(user.x);
        opted.push_back(user.opted_in);
    }
    CfucbPolicy policy(PolicyConfig{cfg.n_users, cfg.n_arms, cfg.dim, cfg.width_constant},
                       std::move(features), std::move(opted));

    Engine reward_rng = make_engine(seed, seed_salt::rewards);
    ValidityTracker tracker(sc.gaps, cfg.width_constant);

    ReplicationResult out;
    out.seed = seed;
    const std::size_t n_events = stream.size();
    out.regret.opted_in.reserve(n_events);
    out.regret.opted_out.reserve(n_events);
    out.regret.all.reserve(n_events);
    out.per_user_regret.assign(static_cast<std::size_t>(cfg.n_users), 0.0);
    if (cfg.keep_logs) out.log.reserve(n_events);

    double cum_in = 0.0, cum_out = 0.0;
    for (const ArrivalEvent& ev : stream) {
        policy.record_arrival(ev.user);
        CfucbPolicy::Selection sel = policy.select_arm(ev.user);
        const double reward = draw_reward(sc.users[static_cast<std::size_t>(ev.user)],
                                          sc.arms[static_cast<std::size_t>(sel.arm)],
                                          sc.reward_model, reward_rng);
        const bool cis_valid = tracker.hypothesis_holds(ev.user, sel.bundle);

        const double gap = sc.gaps.gaps(ev.user, sel.arm);
        const bool suboptimal = gap > 0.0;
        if (sc.users[static_cast<std::size_t>(ev.user)].opted_in) cum_in += gap;
        else cum_out += gap;
        out.per_user_regret[static_cast<std::size_t>(ev.user)] += gap;
        out.regret.opted_in.push_back(cum_in);
        out.regret.opted_out.push_back(cum_out);
        out.regret.all.push_back(cum_in + cum_out);

        policy.record_pull(ev.user, sel.arm, reward);
        tracker.refresh_after_pull(ev.user, sel.bundle, policy);

        if (cfg.keep_logs || suboptimal) {
            PullRecord rec;
            rec.k = ev.global_index;
            rec.time = ev.time;
            rec.user = ev.user;
            rec.arm = sel.arm;
            rec.reward = reward;
            rec.n_user = policy.counters().arrivals[static_cast<std::size_t>(ev.user)];
            rec.was_suboptimal = suboptimal;
            rec.gap = gap;
            rec.cis_valid = cis_valid;
            rec.chosen = sel.bundle.arms[static_cast<std::size_t>(sel.arm)];
            if (cfg.keep_logs) rec.bundle = std::move(sel.bundle.arms);
            out.log.push_back(std::move(rec));
        }
    }

    out.lemma6 = lemma6_check(out.log, sc.gaps, cfg.dim);
    out.cf_unavailable = policy.cf_unavailable_count();
    out.cf_no_pulls = policy.cf_no_pulls_count();
    out.oracle_solves = policy.oracle().stats().solves;
    out.oracle_cache_hits = policy.oracle().stats().cache_hits;

    if (!stream.empty() && stream.back().time > 0.0) {
        long max_count = 0, min_count = std::numeric_limits<long>::max();
        for (long n : policy.counters().arrivals) {
            max_count = std::max(max_count, n);
            min_count = std::min(min_count, n);
        }
        out.arrival_rate_ratio = min_count > 0
                                     ? static_cast<double>(max_count) / static_cast<double>(min_count)
                                     : std::numeric_limits<double>::infinity();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Curve metrics

FitResult fit_log_curve(std::span<const double> series, double burn_in_fraction) {
    if (!(burn_in_fraction >= 0.0) || burn_in_fraction >= 1.0)
        throw config_error("fit_log_curve: burn_in_fraction must lie in [0, 1)");
    const std::size_t n = series.size();
    const auto start = static_cast<std::size_t>(std::floor(burn_in_fraction * static_cast<double>(n)));
    if (n - start < 10) throw config_error("fit_log_curve: need at least 10 points after burn-in");

    double sx = 0.0, sy = 0.0;
    const auto count = static_cast<double>(n - start);
    for (std::size_t i = start; i < n; ++i) {
        sx += std::log(static_cast<double>(i + 1));
        sy += series[i];
    }
    const double mx = sx / count, my = sy / count;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = start; i < n; ++i) {
        const double dx = std::log(static_cast<double>(i + 1)) - mx;
        const double dy = series[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (syy == 0.0) return FitResult{my, 0.0, 0.0}; // constant series
    FitResult fit;
    fit.b = sxy / sxx;
    fit.a = my - fit.b * mx;
    const double ss_res = syy - fit.b * sxy;
    fit.r_squared = 1.0 - ss_res / syy;
    return fit;
}

double plateau_metric(std::span<const double> series, double split_fraction) {
    if (!(split_fraction > 0.0) || !(split_fraction < 1.0))
        throw config_error("plateau_metric: split fraction must lie in (0, 1)");
    if (series.empty()) throw config_error("plateau_metric: empty series");
    const auto n = static_cast<long>(series.size());
    const long split = std::clamp(static_cast<long>(std::floor(split_fraction * static_cast<double>(n))), 1L, n);
    const double at_split = series[static_cast<std::size_t>(split - 1)];
    const double final_value = series[static_cast<std::size_t>(n - 1)];
    return (final_value - at_split) / std::max(final_value, 1.0);
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

ExperimentResult aggregate(std::vector<ReplicationResult> reps) {
    ExperimentResult out;
    std::size_t len = reps.front().regret.size();
    for (const auto& rep : reps) len = std::min(len, rep.regret.size());

    out.mean.opted_in.assign(len, 0.0);
    out.mean.opted_out.assign(len, 0.0);
    out.mean.all.assign(len, 0.0);
    const double inv_r = 1.0 / static_cast<double>(reps.size());
    for (const auto& rep : reps)
        for (std::size_t i = 0; i < len; ++i) {
            out.mean.opted_in[i] += rep.regret.opted_in[i] * inv_r;
            out.mean.opted_out[i] += rep.regret.opted_out[i] * inv_r;
            out.mean.all[i] += rep.regret.all[i] * inv_r;
        }

    for (const auto& rep : reps) {
        out.lemma6.considered += rep.lemma6.considered;
        out.lemma6.checked += rep.lemma6.checked;
        out.lemma6.skipped_no_donors += rep.lemma6.skipped_no_donors;
        out.lemma6.violations += rep.lemma6.violations;
        out.lemma6.violation_indices.insert(out.lemma6.violation_indices.end(),
                                            rep.lemma6.violation_indices.begin(),
                                            rep.lemma6.violation_indices.end());
        out.cf_unavailable += rep.cf_unavailable;
        out.cf_no_pulls += rep.cf_no_pulls;
        out.arrival_rate_ratio_max = std::max(out.arrival_rate_ratio_max, rep.arrival_rate_ratio);
    }

    if (len >= 13) out.fit_opted_out = fit_log_curve(out.mean.opted_out, 0.2);
    if (len >= 2) out.plateau_opted_in = plateau_metric(out.mean.opted_in, 0.6);
    out.replications = std::move(reps);
    return out;
}

} // namespace

ExperimentResult run_experiment_serial(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<ReplicationResult> reps;
    reps.reserve(static_cast<std::size_t>(cfg.replications));
    for (int r = 0; r < cfg.replications; ++r)
        reps.push_back(run_replication(cfg, cfg.seed + static_cast<std::uint64_t>(r)));
    return aggregate(std::move(reps));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads) {
    if (threads <= 1) return run_experiment_serial(cfg);
    cfg.validate();
    std::vector<ReplicationResult> reps(static_cast<std::size_t>(cfg.replications));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int r = 0; r < cfg.replications; ++r)
        reps[static_cast<std::size_t>(r)] =
            run_replication(cfg, cfg.seed + static_cast<std::uint64_t>(r));
    return aggregate(std::move(reps));
}

// ---------------------------------------------------------------------------
// Outputs

void write_regret_csv(const std::filesystem::path& path, const RegretSeries& mean) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_regret_csv: cannot open " + path.string());
    out << "k,mean_regret_opted_in,mean_regret_opted_out,mean_regret_all\n";
    char row[160];
    for (std::size_t i = 0; i < mean.size(); ++i) {
        std::snprintf(row, sizeof(row), "%zu,%.17g,%.17g,%.17g\n", i + 1, mean.opted_in[i],
                      mean.opted_out[i], mean.all[i]);
        out << row;
    }
}

nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
    using nlohmann::json;
    const std::size_t len = result.mean.size();
    json reps = json::array();
    for (const auto& rep : result.replications) {
        reps.push_back(json{{"seed", rep.seed},
                            {"final_regret_opted_in", rep.regret.opted_in.back()},
                            {"final_regret_opted_out", rep.regret.opted_out.back()},
                            {"final_regret_all", rep.regret.all.back()}});
    }
    return json{
        {"config",
         {{"users", cfg.n_users},
          {"arms", cfg.n_arms},
          {"dim", cfg.dim},
          {"noise_variance", cfg.noise_variance},
          {"opt_in_fraction", cfg.opt_in_fraction},
          {"arrival_kind",
           cfg.arrival_kind == ArrivalKind::exponential ? "exponential" : "truncated_gaussian"},
          {"horizon_events", cfg.horizon_events},
          {"horizon_time", cfg.horizon_time},
          {"replications", cfg.replications},
          {"seed", cfg.seed},
          {"width_constant", cfg.width_constant},
          {"unobserved", cfg.unobserved}}},
        {"events", len},
        {"final_regret",
         {{"opted_in", len ? result.mean.opted_in.back() : 0.0},
          {"opted_out", len ? result.mean.opted_out.back() : 0.0},
          {"all", len ? result.mean.all.back() : 0.0}}},
        {"fit_opted_out",
         {{"a", result.fit_opted_out.a},
          {"b", result.fit_opted_out.b},
          {"r_squared", result.fit_opted_out.r_squared}}},
        {"plateau_opted_in", result.plateau_opted_in},
        {"oracle",
         {{"cf_unavailable", result.cf_unavailable}, {"cf_no_pulls", result.cf_no_pulls}}},
        {"arrivals", {{"rate_ratio_max", result.arrival_rate_ratio_max}}},
        {"lemma6",
         {{"considered", result.lemma6.considered},
          {"checked", result.lemma6.checked},
          {"skipped_no_donors", result.lemma6.skipped_no_donors},
          {"violations", result.lemma6.violations}}},
        {"replications", std::move(reps)},
    };
}

} // namespace cfucb
