#include <cmath>
#include <random>
#include <gtest/gtest.h>
#include <Eigen/Dense>
#include <vsflqr/solver.hpp>
#include "oracles.hpp"

using namespace vsflqr;
using namespace vsflqr::solver;

namespace {

double golden_section(const std::function<double(double)>& f, double a, double b)
{
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    while (b - a > 1e-12) {
        if (f(c) < f(d)) b = d;
        else a = c;
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    return 0.5 * (a + b);
}

struct Toy
{
    Eigen::MatrixXd x;
    Eigen::MatrixXd s;
    Eigen::VectorXd y;
};

Toy toy(int n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Toy t{Eigen::MatrixXd(n, 3), Eigen::MatrixXd(n, 2), Eigen::VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) t.x(i, k) = 2.0 + normal(rng) * (k + 1);
        for (int k = 0; k < 2; ++k) t.s(i, k) = normal(rng) * 3.0;
        t.y[i] = 0.5 + t.x(i, 0) - 0.7 * t.x(i, 2) + 0.3 * t.s(i, 1) + normal(rng);
    }
    return t;
}

} // namespace

TEST(Design, OrthonormalGroupsAndScaling)
{
    const Toy t = toy(50, 1);
    const DesignBlocks d = build_design(t.x, {t.s});
    EXPECT_LE(d.scalars.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index k = 0; k < 3; ++k)
        EXPECT_NEAR(d.scalars.col(k).squaredNorm() / 50.0, 1.0, 1e-12);
    const Eigen::MatrixXd g = d.groups[0].transpose() * d.groups[0] / 50.0;
    EXPECT_LE((g - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Design, AlreadyOrthonormalGroupIsUnchanged)
{
    Eigen::MatrixXd s(4, 2);
    s << 1, 1, -1, 1, 1, -1, -1, -1;
    const DesignBlocks d = build_design(Eigen::MatrixXd(4, 0), {s});
    EXPECT_LE((d.groups[0] - s).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Design, ConstantColumnAndDuplicateScores)
{
    Eigen::MatrixXd x(5, 2);
    x << 1, 3, 2, 3, 3, 3, 4, 3, 5, 3;
    Eigen::MatrixXd s(5, 2);
    s.col(0) << 1, -2, 0.5, 3, -1;
    s.col(1) = s.col(0);
    const DesignBlocks d = build_design(x, {s});
    EXPECT_FALSE(d.scalar_zero_variance[0]);
    EXPECT_TRUE(d.scalar_zero_variance[1]);
    EXPECT_TRUE(d.scalars.col(1).isZero(0.0));
    EXPECT_EQ(d.group_sizes[0], 1);
}

TEST(Design, Errors)
{
    EXPECT_THROW(build_design(Eigen::MatrixXd::Ones(1, 1), {}), insufficient_data_error);
    EXPECT_THROW(build_design(Eigen::MatrixXd::Ones(3, 1), {Eigen::MatrixXd::Ones(2, 1)}), dimension_error);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(3, 1);
    bad(1, 0) = std::nan("");
    EXPECT_THROW(build_design(bad, {}), validation_error);
}

TEST(GroupDescent, InterceptOnlyMatchesGoldenSection)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    Eigen::VectorXd y(41);
    for (auto& v : y) v = std::exp(normal(rng));
    for (double tau : {0.1, 0.5, 0.8}) {
        SolverConfig cfg;
        cfg.tau = tau;
        cfg.gamma = 0.05;
        cfg.tol = 1e-12;
        const DesignBlocks d = build_design(Eigen::MatrixXd(41, 0), {});
        const FitResult f = group_descent_fit(d, y, cfg);
        const double ref = golden_section(
            [&](double c) {
                double s = 0;
                for (auto v : y) s += losspen::huber_quantile_loss(v - c, tau, cfg.gamma);
                return s;
            },
            y.minCoeff(), y.maxCoeff());
        EXPECT_NEAR(f.intercept, ref, 1e-6);
        EXPECT_TRUE(f.converged);
    }
}

TEST(GroupDescent, SquaredLossWithoutPenaltyIsLeastSquares)
{
    const Toy t = toy(60, 3);
    SolverConfig cfg;
    cfg.loss = LossKind::Squared;
    cfg.lambda = 0.0;
    cfg.tol = 1e-13;
    cfg.max_iter = 100000;
    const FitResult f = group_descent_fit(build_design(t.x, {t.s}), t.y, cfg);
    Eigen::MatrixXd a(60, 6);
    a << Eigen::VectorXd::Ones(60), t.x, t.s;
    const Eigen::VectorXd ref = (a.transpose() * a).ldlt().solve(a.transpose() * t.y);
    EXPECT_NEAR(f.intercept, ref[0], 1e-8);
    EXPECT_LE((f.beta - ref.segment(1, 3)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((f.alpha[0] - ref.segment(4, 2)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GroupDescent, LassoMatchesGenericMinimizer)
{
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const auto inst = oracle::random_instance(rng, losspen::PenaltyKind::LASSO);
        const FitResult f = group_descent_fit(inst.design, inst.y, inst.cfg);
        ASSERT_TRUE(f.converged);
        const auto fn = [&](const Eigen::VectorXd& th) {
            return oracle::penalized_objective(inst.design, inst.y, th, inst.cfg);
        };
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(oracle::flatten(f.standardized).size());
        x0[0] = oracle::sample_median(std::vector<double>(inst.y.data(), inst.y.data() + inst.y.size()));
        const auto ref = oracle::nelder_mead(fn, x0, 0.5);
        const double mine = fn(oracle::flatten(f.standardized));
        EXPECT_NEAR(mine, f.objective, 1e-12);
        EXPECT_LE(std::abs(mine - ref.value), 1e-4) << "instance " << rep;
    }
}

TEST(GroupDescent, McpFixedPoint)
{
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        auto inst = oracle::random_instance(rng, losspen::PenaltyKind::MCP);
        inst.cfg.tol = 1e-7;
        const FitResult f = group_descent_fit(inst.design, inst.y, inst.cfg);
        ASSERT_TRUE(f.converged);
        EXPECT_LE(one_sweep_change(inst.design, inst.y, inst.cfg, f), 1e-7);
    }
}

TEST(GroupDescent, ObjectiveNeverIncreasesAcrossSweeps)
{
    const Toy t = toy(80, 9);
    const DesignBlocks d = build_design(t.x, {t.s});
    SolverConfig cfg;
    cfg.lambda = 0.05;
    double last = std::numeric_limits<double>::infinity();
    StandardizedCoefficients c = zero_coefficients(d);
    for (int k = 1; k <= 30; ++k) {
        cfg.max_iter = 1;
        const FitResult f = group_descent_fit(d, t.y, cfg, c);
        EXPECT_LE(f.objective, last + 1e-12);
        last = f.objective;
        c = f.standardized;
    }
}

TEST(GroupDescent, WarmAndColdStartsAgree)
{
    const Toy t = toy(80, 4);
    const DesignBlocks d = build_design(t.x, {t.s});
    SolverConfig cfg;
    cfg.penalty = losspen::PenaltyKind::LASSO;
    cfg.tol = 1e-11;
    const PathResult path = lambda_path(d, t.y, cfg, 20, 0.01);
    for (std::size_t k : {std::size_t{5}, std::size_t{12}, std::size_t{19}}) {
        cfg.lambda = path.lambdas[k];
        const FitResult cold = group_descent_fit(d, t.y, cfg);
        EXPECT_LE(std::abs(cold.objective - path.fits[k].objective), 1e-5);
        EXPECT_LE((cold.beta - path.fits[k].beta).cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(GroupDescent, RejectsBadConfiguration)
{
    const Toy t = toy(10, 1);
    const DesignBlocks d = build_design(t.x, {t.s});
    SolverConfig cfg;
    cfg.tau = 1.0;
    EXPECT_THROW(group_descent_fit(d, t.y, cfg), validation_error);
    cfg = SolverConfig{};
    cfg.phi = 1.0;
    EXPECT_THROW(group_descent_fit(d, t.y, cfg), validation_error);
    cfg = SolverConfig{};
    EXPECT_THROW(group_descent_fit(d, Eigen::VectorXd::Zero(9), cfg), dimension_error);
}

TEST(Path, LambdaMaxGivesInterceptOnly)
{
    const Toy t = toy(70, 6);
    const DesignBlocks d = build_design(t.x, {t.s});
    for (auto kind : {losspen::PenaltyKind::MCP, losspen::PenaltyKind::LASSO}) {
        SolverConfig cfg;
        cfg.penalty = kind;
        const PathResult p = lambda_path(d, t.y, cfg, 30, 0.01);
        EXPECT_EQ(p.fits.front().model_size(), 0u);
        EXPECT_GT(p.fits.back().model_size(), 0u);
        for (std::size_t k = 1; k < p.lambdas.size(); ++k)
            EXPECT_LT(p.lambdas[k], p.lambdas[k - 1]);
        EXPECT_NEAR(p.lambdas.back() / p.lambdas.front(), 0.01, 1e-12);
        // just below lambda_max some block enters
        cfg.lambda = 0.98 * p.lambda_max;
        EXPECT_GT(group_descent_fit(d, t.y, cfg).model_size(), 0u);
    }
}

TEST(Path, GridErrors)
{
    EXPECT_THROW(lambda_grid(1.0, 1, 0.1), validation_error);
    EXPECT_THROW(lambda_grid(1.0, 10, 1.0), validation_error);
    const auto g = lambda_grid(2.0, 3, 0.25);
    EXPECT_DOUBLE_EQ(g[0], 2.0);
    EXPECT_NEAR(g[1], 1.0, 1e-12);
    EXPECT_NEAR(g[2], 0.5, 1e-12);
}

TEST(Ebic, ClosedForms)
{
    EXPECT_NEAR(ebic_value(3.25, 17, 0), 3.25, 1e-15);
    EXPECT_NEAR(2.0 * log_binomial(17, 4), 2.0 * std::log(2380.0), 1e-10);
    EXPECT_NEAR(2.0 * std::log(2380.0), 15.549, 1e-3);
    EXPECT_NEAR(bic_value(std::exp(1.0), 10, 2), 1.0 + 2.0 * std::log(10.0), 1e-12);
    EXPECT_NEAR(bic_value(std::exp(1.0), 10, 2), 5.6052, 5e-5);
    EXPECT_NEAR(bic_value(std::exp(1.0), 10, 2, CriterionForm::Schwarz), 10.0 + 2.0 * std::log(10.0), 1e-12);
    EXPECT_NEAR(bic_value(0.0, 10, 0), std::log(1e-12), 1e-12);
    EXPECT_NEAR(log_binomial(5, 0), 0.0, 1e-12);
    EXPECT_NEAR(log_binomial(5, 5), 0.0, 1e-12);
    EXPECT_THROW(log_binomial(3, 4), validation_error);
}

TEST(Ebic, SelectsTheTrueModelOnClearSignal)
{
    const Toy t = toy(300, 8);
    const DesignBlocks d = build_design(t.x, {t.s});
    SolverConfig cfg;
    PathResult p = lambda_path(d, t.y, cfg, 50, 0.001);
    ebic_select(p, d, t.y, cfg.loss, cfg.tau, 4, CriterionForm::Schwarz);
    const FitResult& f = p.selected_fit();
    EXPECT_EQ(f.active_scalars, (std::vector<Eigen::Index>{0, 2}));
    EXPECT_EQ(f.active_groups, (std::vector<std::size_t>{0}));
    ASSERT_EQ(p.ebic.size(), p.fits.size());
    for (double e : p.ebic)
        EXPECT_GE(e, p.ebic[p.selected]);
    EXPECT_THROW(ebic_select(p, d, t.y, cfg.loss, cfg.tau, 2), validation_error);
}

TEST(Ebic, CriterionLoss)
{
    const Eigen::Vector3d r(1.0, -2.0, 0.5);
    EXPECT_NEAR(criterion_loss(r, LossKind::HuberQuantile, 0.25), 0.25 + 1.5 + 0.125, 1e-15);
    EXPECT_NEAR(criterion_loss(r, LossKind::Squared, 0.25), 5.25, 1e-15);
}
