#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <drmis/estimator.hpp>

using namespace drmis;

TEST(WeightedQuantile, UnitWeights)
{
    std::vector<double> y{1.0, 2.0, 3.0}, w{1.0, 1.0, 1.0};
    EXPECT_EQ(WeightedQuantiles(y, w).quantile(2.0 / 3.0), 2.0);
}

TEST(WeightedQuantile, SkewedWeights)
{
    // weighted mass above 0 is 0.2 / 2 = 0.1, within 1 - u = 0.5
    std::vector<double> y{0.0, 10.0}, w{1.8, 0.2};
    EXPECT_EQ(WeightedQuantiles(y, w).quantile(0.5), 0.0);
}

TEST(WeightedQuantile, InsufficientMassIsNotFinite)
{
    // mean weight 0.04 cannot cover the 0.05 tail mass
    std::vector<double> y{1.0, 2.0}, w{0.04, 0.04};
    WeightedQuantiles wq(y, w);
    EXPECT_FALSE(wq.finite_at(0.95));
    double lv[] = {0.95};
    auto q = is_quantiles(y, w, lv);
    EXPECT_FALSE(q[0].finite);
    EXPECT_EQ(q[0].value, -kInf);
}

TEST(WeightedQuantile, TiesFormOneBlock)
{
    std::vector<double> y{1.0, 2.0, 2.0, 2.0, 5.0};
    WeightedQuantiles wq(y, {});
    EXPECT_EQ(wq.quantile(0.5), 2.0);
    EXPECT_EQ(wq.quantile(0.8), 2.0);
    EXPECT_EQ(wq.quantile(0.81), 5.0);
}

TEST(WeightedQuantile, MonotoneInLevel)
{
    Rng rng(1);
    std::vector<double> y(500), w(500);
    for (std::size_t j = 0; j < y.size(); ++j)
    {
        y[j] = standard_normal(rng);
        w[j] = std::exp(standard_normal(rng));
    }
    WeightedQuantiles wq(y, w);
    double prev = -kInf;
    for (int i = 0; i <= 100; ++i)
    {
        double u = i / 100.0;
        if (!wq.finite_at(u))
            continue;
        double q = wq.quantile(u);
        EXPECT_GE(q, prev);
        prev = q;
    }
}

TEST(WeightedQuantile, RejectsBadInput)
{
    std::vector<double> e;
    EXPECT_THROW(WeightedQuantiles(e, e), Error);
    std::vector<double> y{1.0}, w{-1.0};
    EXPECT_THROW(WeightedQuantiles(y, w), Error);
    std::vector<double> y2{1.0, kNaN};
    EXPECT_THROW(WeightedQuantiles(y2, {}), Error);
}

TEST(CrudeQuantile, Examples)
{
    std::vector<double> one{5.0};
    EXPECT_EQ(crude_quantile(one, 0.3), 5.0);
    std::vector<double> y;
    for (int i = 100; i >= 1; --i)
        y.push_back(i);
    EXPECT_EQ(crude_quantile(y, 0.95), 95.0);
    std::vector<double> lv{0.95, 0.5};
    auto copy = y;
    auto qs = crude_quantiles_inplace(copy, lv);
    EXPECT_EQ(qs[0], 95.0);
    EXPECT_EQ(qs[1], 50.0);
}

TEST(CrudeQuantile, MatchesUnitWeightIsQuantile)
{
    Rng rng(2);
    std::uniform_int_distribution<int> size(1, 60), value(0, 9);
    std::uniform_real_distribution<double> level(0.0, 1.0);
    for (int t = 0; t < 1000; ++t)
    {
        std::vector<double> y(static_cast<std::size_t>(size(rng)));
        for (auto& v : y)
            v = value(rng);  // small range forces ties
        double u = level(rng);
        std::vector<WeightedSample> s;
        for (double v : y)
            s.push_back({{}, v, 1.0, kCrudeOrigin});
        ASSERT_EQ(crude_quantile(y, u), is_quantile(s, u).value) << "case " << t;
    }
}

TEST(CltVariance, MedianOfStandardNormal)
{
    // crude sampling: (u (1-u)) / phi(q)^2 = 0.25 / (1/(2 pi)) = pi / 2
    Rng rng(3);
    std::vector<double> y(200000);
    for (auto& v : y)
        v = standard_normal(rng);
    double phi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    EXPECT_NEAR(clt_variance(y, {}, 0.0, 0.5, phi0), std::numbers::pi / 2.0, 0.01 * std::numbers::pi);
}

TEST(CltVariance, UpperTailOfStandardNormal)
{
    boost::math::normal_distribution<double> nd;
    double q = boost::math::quantile(nd, 0.95);
    double want = 0.95 * 0.05 / std::pow(boost::math::pdf(nd, q), 2);
    EXPECT_NEAR(want, 4.47, 0.01);
    Rng rng(4);
    std::vector<double> y(400000);
    for (auto& v : y)
        v = standard_normal(rng);
    EXPECT_NEAR(clt_variance(y, {}, q, 0.95, boost::math::pdf(nd, q)), want, 0.03 * want);
}

TEST(CltVariance, PerfectProposalHasZeroVariance)
{
    // every draw above q with w = 1 - u: second moment equals (1-u)^2
    std::vector<double> y(100, 3.0), w(100, 0.05);
    EXPECT_NEAR(clt_variance(y, w, 2.0, 0.95, 0.1), 0.0, 1e-12);
    EXPECT_THROW(clt_variance(y, w, 2.0, 0.95, 0.0), Error);
}

TEST(IsQuantiles, VarianceShrinksWithSampleSize)
{
    auto draw = [](std::size_t n) {
        Rng rng(5);
        std::vector<double> y(n);
        for (auto& v : y)
            v = standard_normal(rng);
        return y;
    };
    double lv[] = {0.9};
    auto small = is_quantiles(draw(10000), {}, lv)[0];
    auto large = is_quantiles(draw(40000), {}, lv)[0];
    EXPECT_TRUE(small.finite);
    EXPECT_NEAR(small.variance_est / large.variance_est, 4.0, 0.6);
    EXPECT_EQ(large.n_effective, 40000.0);
}
