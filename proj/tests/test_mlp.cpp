#include "oncobandit/bbb.hpp"
#include "oncobandit/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace oncobandit;

namespace {

Batch random_batch(std::size_t in, std::size_t k, std::size_t size, RngStream& rng) {
    Batch b;
    b.contexts.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(size));
    for (auto& v : b.contexts.reshaped()) v = rng.normal();
    b.rewards.resize(static_cast<Eigen::Index>(size));
    for (auto& r : b.rewards) r = rng.normal();
    for (std::size_t i = 0; i < size; ++i) b.actions.push_back(rng.uniform_index(k));
    return b;
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& at,
                                   double h = 1e-6) {
    Eigen::VectorXd g(at.size());
    Eigen::VectorXd x = at;
    for (Eigen::Index i = 0; i < at.size(); ++i) {
        x(i) = at(i) + h;
        const double up = f(x);
        x(i) = at(i) - h;
        const double down = f(x);
        x(i) = at(i);
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

double relative(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / std::max(b.norm(), 1e-12); }

} // namespace

TEST(Mlp, InitShapesAndScale) {
    auto rng = derive_stream(1, "init");
    const auto p = MlpParams::init(20, {100}, 7, rng);
    ASSERT_EQ(p.layers.size(), 2u);
    EXPECT_EQ(p.in_width(), 20u);
    EXPECT_EQ(p.out_width(), 7u);
    EXPECT_EQ(p.representation_width(), 100u);
    EXPECT_EQ(p.num_params(), 20u * 100 + 100 + 100 * 7 + 7);
    const double var = p.layers[0].weights.squaredNorm() / static_cast<double>(p.layers[0].weights.size());
    EXPECT_NEAR(var, 2.0 / 20.0, 0.01);
    EXPECT_EQ(p.layers[0].bias.norm(), 0.0);
}

TEST(Mlp, FlattenAssignRoundTrip) {
    auto rng = derive_stream(2, "init");
    auto p = MlpParams::init(3, {4, 5}, 2, rng);
    const auto v = p.flatten();
    auto q = p.filled(0.0);
    q.assign(v);
    EXPECT_EQ(q.flatten(), v);
    EXPECT_THROW(q.assign(Eigen::VectorXd::Zero(3)), Error);
}

TEST(Mlp, ForwardMatchesHandComputation) {
    MlpParams p;
    p.layers.resize(2);
    p.layers[0].weights.resize(2, 2);
    p.layers[0].weights << 1, -1, 2, 0.5;
    p.layers[0].bias = Eigen::Vector2d(0.1, -5.0);
    p.layers[1].weights.resize(1, 2);
    p.layers[1].weights << 3, 7;
    p.layers[1].bias = Eigen::VectorXd::Constant(1, 0.5);
    const std::vector<double> x{2.0, 1.0};
    // hidden = relu(1.1, -0.5) = (1.1, 0); out = 3.3 + 0.5
    const auto out = mlp_forward(p, x);
    EXPECT_NEAR(out.predictions(0), 3.8, 1e-12);
    EXPECT_NEAR(out.representation(0), 1.1, 1e-12);
    EXPECT_EQ(out.representation(1), 0.0);
}

TEST(Mlp, MaskedLossGradientMatchesFiniteDifferences) {
    auto rng = derive_stream(3, "grad");
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = 2 + rng.uniform_index(4), k = 2 + rng.uniform_index(3), h = 3 + rng.uniform_index(5);
        std::vector<std::size_t> hidden{h};
        if (trial % 2) hidden.push_back(2 + rng.uniform_index(4));
        auto p = MlpParams::init(in, hidden, k, rng);
        for (auto& l : p.layers) l.bias.setRandom();
        const auto b = random_batch(in, k, 6, rng);
        const auto analytic = masked_loss_gradient(p, b).gradient.flatten();
        auto loss = [&](const Eigen::VectorXd& v) {
            MlpParams q = p;
            q.assign(v);
            return masked_loss_gradient(q, b).loss;
        };
        EXPECT_LT(relative(analytic, central_difference(loss, p.flatten())), 1e-4) << "trial " << trial;
    }
}

TEST(Mlp, DropoutGradientMatchesFiniteDifferences) {
    auto rng = derive_stream(4, "grad");
    for (int trial = 0; trial < 5; ++trial) {
        auto p = MlpParams::init(3, {6, 4}, 3, rng);
        for (auto& l : p.layers) l.bias.setRandom();  // keep pre-activations off the rectifier kink
        const auto b = random_batch(3, 3, 5, rng);
        DropoutMasks masks;
        for (auto rows : {6, 4}) {
            Eigen::MatrixXd m(rows, 5);
            for (auto& v : m.reshaped()) v = rng.bernoulli(0.7) ? 1.0 / 0.7 : 0.0;
            masks.push_back(m);
        }
        const auto analytic = masked_loss_gradient(p, b, &masks).gradient.flatten();
        auto loss = [&](const Eigen::VectorXd& v) {
            MlpParams q = p;
            q.assign(v);
            return masked_loss_gradient(q, b, &masks).loss;
        };
        EXPECT_LT(relative(analytic, central_difference(loss, p.flatten())), 1e-4);
    }
}

TEST(Mlp, UnchosenHeadsGetNoGradient) {
    auto rng = derive_stream(5, "grad");
    const auto p = MlpParams::init(3, {4}, 3, rng);
    auto b = random_batch(3, 3, 8, rng);
    for (auto& a : b.actions) a = 1;
    const auto g = masked_loss_gradient(p, b).gradient;
    EXPECT_EQ(g.layers.back().weights.row(0).norm(), 0.0);
    EXPECT_EQ(g.layers.back().weights.row(2).norm(), 0.0);
    EXPECT_GT(g.layers.back().weights.row(1).norm(), 0.0);
}

TEST(Mlp, InputGradientMatchesFiniteDifferences) {
    auto rng = derive_stream(6, "grad");
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = MlpParams::init(4, {7, 5}, 3, rng);
        Eigen::VectorXd x(4);
        for (auto& v : x) v = rng.normal();
        const std::size_t arm = rng.uniform_index(3);
        const auto analytic = mlp_input_gradient(p, std::span<const double>(x.data(), 4), arm);
        auto f = [&](const Eigen::VectorXd& v) {
            return mlp_forward(p, std::span<const double>(v.data(), 4)).predictions(static_cast<Eigen::Index>(arm));
        };
        EXPECT_LT(relative(analytic, central_difference(f, x)), 1e-4);
    }
}

TEST(Elbo, GradientMatchesFiniteDifferences) {
    auto rng = derive_stream(7, "elbo");
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = 2 + rng.uniform_index(3), k = 2 + rng.uniform_index(3);
        auto q = VariationalMlp::init(in, {3 + rng.uniform_index(4)}, k, 0.05 + 0.5 * rng.uniform(), rng);
        // spread the stds so the rho gradient is exercised away from a single value
        Eigen::VectorXd rho = q.rho.flatten();
        for (auto& r : rho) r += 0.5 * rng.normal();
        q.rho.assign(rho);
        const auto b = random_batch(in, k, 5, rng);
        Eigen::VectorXd eps(static_cast<Eigen::Index>(q.mean.num_params()));
        for (auto& e : eps) e = rng.normal();
        const double sigma = 0.5, n = 40.0;
        const auto g = elbo_gradient(q, b, eps, sigma, n);

        auto loss_mean = [&](const Eigen::VectorXd& v) {
            VariationalMlp t = q;
            t.mean.assign(v);
            return elbo_gradient(t, b, eps, sigma, n).loss();
        };
        auto loss_rho = [&](const Eigen::VectorXd& v) {
            VariationalMlp t = q;
            t.rho.assign(v);
            return elbo_gradient(t, b, eps, sigma, n).loss();
        };
        EXPECT_LT(relative(g.grad_mean, central_difference(loss_mean, q.mean.flatten())), 1e-4) << "trial " << trial;
        EXPECT_LT(relative(g.grad_rho, central_difference(loss_rho, q.rho.flatten())), 1e-4) << "trial " << trial;
    }
}

TEST(Elbo, KlAgainstClosedForm) {
    Eigen::VectorXd m(2), s(2);
    m << 0.5, -1.0;
    s << 2.0, 0.5;
    // KL(N(m, s^2) || N(0, 1)) = log(1/s) + (s^2 + m^2) / 2 - 1/2 per coordinate
    const double expected = (-std::log(2.0) + (4.0 + 0.25) / 2 - 0.5) + (-std::log(0.5) + (0.25 + 1.0) / 2 - 0.5);
    EXPECT_NEAR(kl_to_standard_normal(m, s), expected, 1e-12);
    EXPECT_EQ(kl_to_standard_normal(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)), 0.0);
}

TEST(Elbo, SoftplusRoundTrip) {
    for (double y : {1e-9, 0.01, 1.0, 5.0, 40.0}) EXPECT_NEAR(softplus(inverse_softplus(y)), y, 1e-12 * std::max(1.0, y));
}

TEST(Elbo, SetStdsPinsEveryCoordinate) {
    auto rng = derive_stream(8, "init");
    auto q = VariationalMlp::init(3, {4}, 2, 0.01, rng);
    EXPECT_NEAR(q.stds().maxCoeff(), 0.01, 1e-12);
    q.set_stds(1e-9);
    EXPECT_NEAR(q.stds().maxCoeff(), 1e-9, 1e-15);
    EXPECT_NEAR(q.stds().minCoeff(), 1e-9, 1e-15);
}

TEST(Schedule, Rates) {
    EXPECT_EQ(TrainSchedule::fixed(0.01).rate(1000), 0.01);
    EXPECT_DOUBLE_EQ(TrainSchedule::rms3().rate(0), 1.0);
    EXPECT_DOUBLE_EQ(TrainSchedule::rms3().rate(100), 0.5);
    EXPECT_DOUBLE_EQ(TrainSchedule::rms2().rate(300), 0.025);
}

TEST(Schedule, Rms2RestartsEachPeriodRms3DoesNot) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
    RmsProp two(TrainSchedule::rms2()), three(TrainSchedule::rms3());
    for (int period = 0; period < 3; ++period) {
        two.begin_period();
        three.begin_period();
        EXPECT_DOUBLE_EQ(two.current_rate(), 0.1);
        EXPECT_DOUBLE_EQ(three.current_rate(), 1.0 / (1.0 + period * 10 / 100.0));
        for (int s = 0; s < 10; ++s) {
            two.step(p, Eigen::VectorXd::Ones(2));
            three.step(p, Eigen::VectorXd::Ones(2));
        }
    }
}

TEST(RmsProp, FirstStepMatchesHandComputation) {
    // Mean squares start at 1: ms = 0.9 + 0.1 g^2, step = lr g / sqrt(ms + eps).
    RmsProp opt(TrainSchedule::fixed(0.01));
    Eigen::VectorXd p(2), g(2);
    p << 1.0, -2.0;
    g << 0.5, -3.0;
    opt.step(p, g);
    EXPECT_NEAR(p(0), 1.0 - 0.01 * 0.5 / std::sqrt(0.9 + 0.1 * 0.25 + 1e-10), 1e-15);
    EXPECT_NEAR(p(1), -2.0 + 0.01 * 3.0 / std::sqrt(0.9 + 0.1 * 9.0 + 1e-10), 1e-15);
}

TEST(RmsProp, ClipsByGlobalNorm) {
    RmsProp opt(TrainSchedule::fixed(1.0));
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2), g(2);
    g << 30.0, 40.0;  // norm 50, clipped to (3, 4)
    opt.step(p, g);
    EXPECT_NEAR(p(0), -3.0 / std::sqrt(0.9 + 0.1 * 9.0 + 1e-10), 1e-12);
    EXPECT_NEAR(p(1), -4.0 / std::sqrt(0.9 + 0.1 * 16.0 + 1e-10), 1e-12);
}

TEST(Training, FitsLinearTargets) {
    auto rng = derive_stream(9, "fit");
    auto p = MlpParams::init(2, {16}, 2, rng);
    RmsProp opt(TrainSchedule::fixed(0.01));
    auto b = random_batch(2, 2, 64, rng);
    for (Eigen::Index i = 0; i < 64; ++i) b.rewards(i) = b.actions[static_cast<std::size_t>(i)] ? b.contexts(0, i) : -b.contexts(1, i);
    const double before = masked_loss_gradient(p, b).loss;
    for (int s = 0; s < 2000; ++s) {
        const auto lg = masked_loss_gradient(p, b);
        Eigen::VectorXd flat = p.flatten();
        opt.step(flat, lg.gradient.flatten());
        p.assign(flat);
    }
    EXPECT_LT(masked_loss_gradient(p, b).loss, 0.05 * before);
}

TEST(Mlp, ZeroWeightsGiveZeroOutputs) {
    auto rng = derive_stream(10, "init");
    const auto p = MlpParams::init(4, {6}, 3, rng).filled(0.0);
    EXPECT_EQ(mlp_forward(p, std::vector<double>{1, -2, 3, 4}).predictions, Eigen::VectorXd::Zero(3));
}

TEST(Mlp, IdentityHeadPassesInputThrough) {
    MlpParams p;
    p.layers.push_back({Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3)});
    const std::vector<double> x{0.5, -2.0, 7.0};
    const auto out = mlp_forward(p, x);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(out.predictions(i), x[static_cast<std::size_t>(i)]);
}
