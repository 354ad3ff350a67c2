#ifndef ONCOBANDIT_NIG_HPP
#define ONCOBANDIT_NIG_HPP

#include "oncobandit/core.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace oncobandit {

/// Normal-inverse-gamma prior for Bayesian linear regression:
/// beta | s2 ~ N(0, s2 / ridge * I), s2 ~ InvGamma(a0, b0).
struct NigPrior {
    double ridge = 0.25;
    double a0 = 6.0;
    double b0 = 6.0;
};

/// Conjugate posterior for one arm. Holds the sufficient statistics
/// (precision, precision-weighted mean, sum of squared targets) and the
/// derived mean, shape, scale and Cholesky factor.
class NigPosterior {
public:
    NigPosterior() = default;

    NigPosterior(std::size_t dim, NigPrior prior) : prior_(prior) {
        if (!(prior.ridge > 0.0) || !(prior.a0 > 0.0) || !(prior.b0 > 0.0))
            throw Error("NIG prior requires ridge, a0, b0 > 0");
        const auto d = static_cast<Eigen::Index>(dim);
        precision_ = prior.ridge * Eigen::MatrixXd::Identity(d, d);
        weighted_mean_ = Eigen::VectorXd::Zero(d);
        refresh();
    }

    std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
    const NigPrior& prior() const { return prior_; }
    const Eigen::MatrixXd& precision() const { return precision_; }
    const Eigen::VectorXd& mean() const { return mean_; }
    double shape() const { return shape_; }
    double scale() const { return scale_; }
    std::size_t count() const { return count_; }

    /// Rank-one update with one (x, y) pair; x already carries its intercept.
    void observe(std::span<const double> x, double y) {
        accumulate(x, y);
        refresh();
    }

    /// Accumulate without refactoring; call refresh() before reading.
    void accumulate(std::span<const double> x, double y) {
        if (x.size() != dim()) throw Error("NIG observation width " + std::to_string(x.size()) + " != " + std::to_string(dim()));
        if (!std::isfinite(y)) throw Error("non-finite NIG target");
        const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
        if (!v.allFinite()) throw Error("non-finite NIG input");
        precision_.selfadjointView<Eigen::Lower>().rankUpdate(v);
        weighted_mean_ += y * v;
        sum_sq_ += y * y;
        ++count_;
    }

    void refresh() {
        precision_.triangularView<Eigen::StrictlyUpper>() = precision_.transpose();
        chol_.compute(precision_);
        if (chol_.info() != Eigen::Success) throw Error("NIG precision is not positive definite");
        mean_ = chol_.solve(weighted_mean_);
        shape_ = prior_.a0 + 0.5 * static_cast<double>(count_);
        scale_ = prior_.b0 + 0.5 * (sum_sq_ - weighted_mean_.dot(mean_));
        if (!(scale_ > 0.0)) scale_ = prior_.b0 * 1e-12;
    }

    /// One draw of (s2, beta): s2 ~ InvGamma(a, b), beta ~ N(mean, s2 * precision^-1).
    Eigen::VectorXd sample(RngStream& rng) const {
        const double s2 = rng.inverse_gamma(shape_, scale_);
        Eigen::VectorXd z(mean_.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
        // precision = L L^T, so L^-T z has covariance precision^-1.
        chol_.matrixU().solveInPlace(z);
        return mean_ + std::sqrt(s2) * z;
    }

private:
    NigPrior prior_;
    Eigen::MatrixXd precision_;
    Eigen::VectorXd weighted_mean_;
    double sum_sq_ = 0.0;
    std::size_t count_ = 0;

    Eigen::LLT<Eigen::MatrixXd> chol_;
    Eigen::VectorXd mean_;
    double shape_ = 0.0;
    double scale_ = 0.0;
};

inline NigPosterior nig_update(NigPosterior p, std::span<const double> x, double y) {
    p.observe(x, y);
    return p;
}

/// Context with a trailing intercept entry.
inline std::vector<double> with_intercept(std::span<const double> x) {
    std::vector<double> v(x.begin(), x.end());
    v.push_back(1.0);
    return v;
}

/// Thompson step: one posterior draw per arm, highest predicted reward wins
/// (ties to the lowest index). `x` already carries its intercept.
inline DrugId nig_thompson_act(const std::vector<NigPosterior>& arms, std::span<const double> x, RngStream& rng) {
    if (arms.empty()) throw Error("no posteriors to sample");
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    DrugId best{0};
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < arms.size(); ++a) {
        const double s = arms[a].sample(rng).dot(v);
        if (s > best_score) {
            best_score = s;
            best = DrugId{a};
        }
    }
    return best;
}

} // namespace oncobandit

#endif // ONCOBANDIT_NIG_HPP
