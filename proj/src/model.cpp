#include "cfucb/model.hpp"

#include <cmath>
#include <limits>

#include "cfucb/errors.hpp"

namespace cfucb {

FeatureVector sample_unit_sphere(int dim, Engine& rng) {
    if (dim < 1) throw config_error("sample_unit_sphere: dimension must be >= 1");
    std::normal_distribution<double> gauss(0.0, 1.0);
    FeatureVector v(dim);
    double norm2 = 0.0;
    do {
        for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
        norm2 = v.squaredNorm();
    } while (norm2 < 1e-300); // a zero draw has probability zero; redraw
    return v / std::sqrt(norm2);
}

double mean_reward(const UserProfile& user, const ArmProfile& arm) {
    if (user.x.size() != arm.beta.size())
        throw config_error("mean_reward: feature/loading dimension mismatch");
    double mu = user.x.dot(arm.beta);
    if (user.y.has_value()) {
        if (!arm.lambda.has_value() || arm.lambda->size() != user.y->size())
            throw config_error("mean_reward: unobserved covariate/loading dimension mismatch");
        mu += user.y->dot(*arm.lambda);
    }
    return mu;
}

double draw_reward(const UserProfile& user, const ArmProfile& arm,
                   const RewardModel& model, Engine& rng) {
    const double mu = mean_reward(user, arm);
    if (!(model.noise_variance >= 0.0) || !std::isfinite(model.noise_variance))
        throw config_error("draw_reward: noise_variance must be finite and >= 0");
    if (model.noise_variance == 0.0) return mu;
    std::normal_distribution<double> noise(0.0, std::sqrt(model.noise_variance));
    return mu + noise(rng);
}

GapTable build_gap_table(const std::vector<UserProfile>& users,
                         const std::vector<ArmProfile>& arms) {
    const int nu = static_cast<int>(users.size());
    const int na = static_cast<int>(arms.size());
    GapTable table;
    table.mu.resize(nu, na);
    table.gaps.resize(nu, na);
    table.optimal_arm.resize(nu);
    for (int j = 0; j < nu; ++j) {
        for (int m = 0; m < na; ++m) table.mu(j, m) = mean_reward(users[j], arms[m]);
        int best = 0;
        for (int m = 1; m < na; ++m)
            if (table.mu(j, m) > table.mu(j, best)) best = m; // strict: ties keep lowest id
        table.optimal_arm[j] = best;
        for (int m = 0; m < na; ++m) table.gaps(j, m) = table.mu(j, best) - table.mu(j, m);
    }
    return table;
}

} // namespace cfucb
