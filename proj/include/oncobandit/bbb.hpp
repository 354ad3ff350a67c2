#ifndef ONCOBANDIT_BBB_HPP
#define ONCOBANDIT_BBB_HPP

#include "oncobandit/mlp.hpp"

namespace oncobandit {

/* Bayes by Backprop
 * -----------------
 * Mean-field Gaussian over every network parameter. Standard deviations
 * are softplus(rho) so they stay positive. The objective per data point is
 *
 *   mean_batch (f_w(x)[a] - r)^2 / (2 noise^2)  +  KL(q || N(0, I)) / N
 *
 * with w = mean + softplus(rho) * eps and N the replay buffer size.
 */

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct VariationalMlp {
    MlpParams mean;
    MlpParams rho;

    static VariationalMlp init(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                               double init_std, RngStream& rng) {
        if (!(init_std > 0.0)) throw Error("initial posterior std must be positive");
        VariationalMlp v;
        v.mean = MlpParams::init(in, hidden, out, rng);
        v.rho = v.mean.filled(inverse_softplus(init_std));
        return v;
    }

    Eigen::VectorXd stds() const { return rho.flatten().unaryExpr([](double r) { return softplus(r); }); }

    /// Parameters with every std pinned to `std`.
    void set_stds(double std) { rho = mean.filled(inverse_softplus(std)); }

    MlpParams sample(const Eigen::VectorXd& eps) const {
        MlpParams w = mean;
        w.assign(mean.flatten() + stds().cwiseProduct(eps));
        return w;
    }

    MlpParams sample(RngStream& rng) const {
        Eigen::VectorXd eps(static_cast<Eigen::Index>(mean.num_params()));
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
        return sample(eps);
    }
};

/// KL(N(mean, std^2) || N(0, 1)) summed over coordinates.
inline double kl_to_standard_normal(const Eigen::VectorXd& mean, const Eigen::VectorXd& std) {
    return (0.5 * (std.array().square() + mean.array().square() - 1.0) - std.array().log()).sum();
}

struct ElboGradient {
    double data_term = 0.0;
    double kl_term = 0.0;  // already divided by N
    double loss() const { return data_term + kl_term; }
    Eigen::VectorXd grad_mean;
    Eigen::VectorXd grad_rho;
};

/// Negative ELBO and its gradient for a fixed noise sample `eps`.
inline ElboGradient elbo_gradient(const VariationalMlp& q, const Batch& batch, const Eigen::VectorXd& eps,
                                  double noise_sigma, double dataset_size, MlpWorkspace* workspace = nullptr) {
    const Eigen::VectorXd m = q.mean.flatten();
    const Eigen::VectorXd r = q.rho.flatten();
    const Eigen::VectorXd s = r.unaryExpr([](double v) { return softplus(v); });
    const Eigen::VectorXd ds = r.unaryExpr([](double v) { return logistic(v); });

    MlpParams w = q.mean;
    w.assign(m + s.cwiseProduct(eps));
    MlpWorkspace local;
    MlpWorkspace& ws = workspace ? *workspace : local;
    const double loss = masked_loss_gradient_into(w, batch, nullptr, ws);
    const double scale = 1.0 / (2.0 * noise_sigma * noise_sigma);
    const Eigen::VectorXd gw = scale * ws.gradient.flatten();

    ElboGradient out;
    out.data_term = scale * loss;
    out.kl_term = kl_to_standard_normal(m, s) / dataset_size;
    out.grad_mean = gw + m / dataset_size;
    const Eigen::VectorXd dkl_ds = (s.array() - s.array().inverse()).matrix() / dataset_size;
    out.grad_rho = (gw.cwiseProduct(eps) + dkl_ds).cwiseProduct(ds);
    return out;
}

/// One reparameterized gradient step on the negative ELBO.
inline void bbb_train_step(VariationalMlp& q, RmsProp& opt, const Batch& batch, double noise_sigma,
                           double dataset_size, RngStream& rng, MlpWorkspace* workspace = nullptr) {
    Eigen::VectorXd eps(static_cast<Eigen::Index>(q.mean.num_params()));
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
    const auto g = elbo_gradient(q, batch, eps, noise_sigma, dataset_size, workspace);
    const auto n = g.grad_mean.size();
    Eigen::VectorXd params(2 * n), grad(2 * n);
    params << q.mean.flatten(), q.rho.flatten();
    grad << g.grad_mean, g.grad_rho;
    opt.step(params, grad);
    q.mean.assign(params.head(n));
    q.rho.assign(params.tail(n));
}

} // namespace oncobandit

#endif // ONCOBANDIT_BBB_HPP
