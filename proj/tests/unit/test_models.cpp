#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/logistic.hpp>
#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <drmis/models.hpp>

using namespace drmis;

TEST(Models, IdentityLoss)
{
    auto m = builtin_model(1);
    EXPECT_EQ(m->dim(), 1u);
    EXPECT_EQ(m->evaluate({1.7}), 1.7);
}

TEST(Models, ChiSquaredLoss)
{
    auto m = builtin_model(4);
    EXPECT_EQ(m->dim(), 4u);
    EXPECT_EQ(m->evaluate({1.0, 1.0, 1.0, 1.0}), 4.0);
}

TEST(Models, SumAndProductLosses)
{
    EXPECT_DOUBLE_EQ(builtin_model(2)->evaluate({0.5, 1.25}), 1.75);
    EXPECT_DOUBLE_EQ(builtin_model(3)->evaluate({2.0, -1.5}), -3.0);
    EXPECT_DOUBLE_EQ(builtin_model(5)->evaluate({0.2}), 0.2 * std::sin(0.5 * std::numbers::pi));
}

TEST(Models, UnknownIdIsConfigError)
{
    try
    {
        builtin_model(42);
        FAIL() << "no error";
    }
    catch (Error const& e)
    {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
}

TEST(Models, LogisticMedianByMonteCarlo)
{
    auto m = builtin_model(6);
    Rng rng(11);
    std::vector<double> y(1'000'000);
    for (auto& v : y)
        v = m->evaluate(m->sample_base(rng));
    std::nth_element(y.begin(), y.begin() + 500000, y.end());
    // sd of the sample median of Logistic(0,1) is 2 / sqrt(n) = 0.002
    EXPECT_NEAR(y[500000], 0.0, 0.01);
}

TEST(Models, EvaluateIsDeterministic)
{
    auto m = builtin_model(3);
    Point x{0.3, -1.2};
    EXPECT_EQ(m->evaluate(x), m->evaluate(x));
}

TEST(Models, EvaluationCounter)
{
    auto m = builtin_model(2);
    EXPECT_EQ(m->eval_count(), 0);
    for (int i = 0; i < 3; ++i)
        m->evaluate({0.0, 1.0});
    EXPECT_EQ(m->eval_count(), 3);
    m->reset_count();
    EXPECT_EQ(m->eval_count(), 0);
    m->loss({0.0, 1.0});  // raw loss is not a counted evaluation
    EXPECT_EQ(m->eval_count(), 0);
}

TEST(Models, BaseDensities)
{
    boost::math::normal_distribution<double> nd;
    EXPECT_NEAR(builtin_model(1)->base_log_density({0.4}), std::log(boost::math::pdf(nd, 0.4)), 1e-14);
    // bivariate normal with correlation 0.3 at (1, -1)
    double rho = 0.3, x = 1.0, y = -1.0;
    double want = -std::log(2.0 * std::numbers::pi * std::sqrt(1 - rho * rho)) -
                  (x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho));
    EXPECT_NEAR(builtin_model(2)->base_log_density({x, y}), want, 1e-13);
    EXPECT_EQ(builtin_model(5)->base_log_density({1.5}), -kInf);
    EXPECT_EQ(builtin_model(6)->base_log_density({-0.1}), -kInf);
    EXPECT_DOUBLE_EQ(builtin_model(6)->base_log_density({2.0}), -2.0);
}

TEST(Models, ExactQuantiles)
{
    boost::math::normal_distribution<double> nd;
    EXPECT_NEAR(*builtin_model(1)->exact_quantile(0.99), boost::math::quantile(nd, 0.99), 1e-12);
    EXPECT_NEAR(*builtin_model(2)->exact_quantile(0.99), std::sqrt(2.6) * boost::math::quantile(nd, 0.99), 1e-12);
    boost::math::chi_squared_distribution<double> c4(4.0);
    EXPECT_NEAR(*builtin_model(4)->exact_quantile(0.998), boost::math::quantile(c4, 0.998), 1e-9);
    boost::math::logistic_distribution<double> lg;
    EXPECT_NEAR(*builtin_model(6)->exact_quantile(0.9), boost::math::quantile(lg, 0.9), 1e-12);
}

TEST(Models, ProductQuantileAgainstSimulation)
{
    for (int id : {3, 7})
    {
        auto m = builtin_model(id);
        Rng rng(5);
        std::vector<double> y(2'000'000);
        for (auto& v : y)
            v = m->loss(m->sample_base(rng));
        for (double u : {0.5, 0.99})
        {
            auto k = static_cast<std::ptrdiff_t>(u * static_cast<double>(y.size()));
            std::nth_element(y.begin(), y.begin() + k, y.end());
            EXPECT_NEAR(*m->exact_quantile(u), y[static_cast<std::size_t>(k)], 0.02) << "model " << id << " u " << u;
        }
    }
}

TEST(Alm, BalanceEquationAtNeutralReturn)
{
    AlmModel alm;
    auto const& p = alm.params();
    // z such that the stock factor is exactly 1, v = 1/2 so the bond factor is 1
    double z = -(p.mu - 0.5 * p.sigma * p.sigma) * p.dt / (p.sigma * std::sqrt(p.dt));
    EXPECT_NEAR(alm.asset_return(0.5, z), 1.0, 1e-15);
    EXPECT_NEAR(alm.evaluate({0.5, z, 0.0}), -51.5, 1e-10);
    EXPECT_DOUBLE_EQ(p.premium(), 51.5);
    EXPECT_DOUBLE_EQ(p.reserve(), 52.5);
}

TEST(Alm, MeanLossClosedFormAndSimulation)
{
    AlmModel alm;
    double closed = -(0.5 * std::exp(0.02) + 0.5 - 1.0) * 1000.0 + 50.0 - 51.5;
    EXPECT_NEAR(alm.mean_loss(), closed, 1e-12);
    EXPECT_NEAR(alm.mean_loss(), -11.6, 0.01);
    Rng rng(99);
    double s = 0.0;
    int const n = 2'000'000;
    for (int i = 0; i < n; ++i)
        s += alm.loss(alm.sample_base(rng));
    // sd of the loss is about 104, so the MC error is about 0.07
    EXPECT_NEAR(s / n, -11.6, 0.35);
}

TEST(Alm, ZeroClaimProbability)
{
    AlmModel alm;
    Rng rng(3);
    int zeros = 0, n = 1'000'000;
    for (int i = 0; i < n; ++i)
        zeros += alm.sample_base(rng)[2] == 0.0;
    EXPECT_NEAR(compound_poisson_exp_cdf(0.0, 5.0, 10.0), std::exp(-5.0), 1e-15);
    EXPECT_NEAR(static_cast<double>(zeros) / n, std::exp(-5.0), 4.0 * std::sqrt(std::exp(-5.0) / n));
    EXPECT_DOUBLE_EQ(compound_poisson_exp_log_density(0.0, 5.0, 10.0), -5.0);
}

TEST(Alm, ClaimDensityIntegratesToContinuousMass)
{
    // trapezoid on a fine grid of the series density plus the atom
    double s = 0.0, h = 0.01, prev = 0.0;
    for (int i = 1; i <= 30000; ++i)
    {
        double c = i * h;
        double f = std::exp(compound_poisson_exp_log_density(c, 5.0, 10.0));
        s += 0.5 * (prev + f) * h;
        prev = f;
    }
    // the density tends to lambda e^-lambda / scale at 0+, which the first panel misses
    s += 0.5 * (5.0 * std::exp(-5.0) / 10.0) * h;
    EXPECT_NEAR(s + std::exp(-5.0), 1.0, 1e-5);
}

TEST(Alm, DensityOutsideSupport)
{
    AlmModel alm;
    EXPECT_EQ(alm.base_log_density({1.2, 0.0, 10.0}), -kInf);
    EXPECT_EQ(alm.base_log_density({0.5, 0.0, -1.0}), -kInf);
    EXPECT_TRUE(std::isfinite(alm.base_log_density({0.5, 0.0, 0.0})));
    ASSERT_TRUE(alm.atom_coordinate().has_value());
    EXPECT_EQ(*alm.atom_coordinate(), 2u);
}

TEST(Alm, InvalidParameters)
{
    AlmParams p;
    p.b = 1.5;
    EXPECT_THROW(AlmModel{p}, Error);
    p = {};
    p.lambda = 0.0;
    EXPECT_THROW(AlmModel{p}, Error);
}
