#include "cfucb/oracle.hpp"

#include <Eigen/SVD>

#include "cfucb/errors.hpp"

namespace cfucb {

namespace {

Eigen::MatrixXd stack_columns(const std::vector<FeatureVector>& xs) {
    if (xs.empty()) throw config_error("oracle: empty feature list");
    const auto dim = xs.front().size();
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != dim) throw config_error("oracle: mixed feature dimensions");
        m.col(static_cast<Eigen::Index>(i)) = xs[i];
    }
    return m;
}

} // namespace

bool rank_ok(const std::vector<FeatureVector>& features, double rel_tol) {
    const Eigen::MatrixXd m = stack_columns(features);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return false;
    const double cutoff = rel_tol * sv(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++rank;
    return rank >= m.rows();
}

std::optional<SynthCoefficients> solve_coefficients(const FeatureVector& target,
                                                    const std::vector<FeatureVector>& member_xs,
                                                    double residual_tol) {
    const Eigen::MatrixXd m = stack_columns(member_xs);
    if (m.rows() != target.size())
        throw config_error("solve_coefficients: target dimension mismatch");

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = 1e-10 * (sv.size() > 0 ? sv(0) : 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++rank;
    if (rank < m.rows()) return std::nullopt;

    svd.setThreshold(1e-10);
    SynthCoefficients out;
    out.a = svd.solve(target); // minimum-norm least squares
    out.residual = (m * out.a - target).norm();
    if (!(out.residual <= residual_tol)) return std::nullopt;
    out.c = out.a.lpNorm<1>();
    return out;
}

SynthOracle::SynthOracle(std::vector<FeatureVector> user_features, double residual_tol)
    : features_(std::move(user_features)), residual_tol_(residual_tol) {}

const std::optional<SynthCoefficients>& SynthOracle::coefficients(const SynthSet& set) const {
    Key key{set.target, set.members};
    auto it = cache_.find(key);
    if (it != cache_.end()) {
        ++stats_.cache_hits;
        return it->second;
    }
    std::vector<FeatureVector> member_xs;
    member_xs.reserve(set.members.size());
    for (int id : set.members) member_xs.push_back(features_[static_cast<std::size_t>(id)]);
    ++stats_.solves;
    auto solved = solve_coefficients(features_[static_cast<std::size_t>(set.target)], member_xs,
                                     residual_tol_);
    if (!solved.has_value()) ++stats_.failures;
    auto [pos, inserted] = cache_.emplace(std::move(key), std::move(solved));
    return pos->second;
}

} // namespace cfucb
