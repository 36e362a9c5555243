#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <drmis/distortion.hpp>
#include <drmis/reference.hpp>

using namespace drmis;

namespace
{

// Generic bisection, independent of Distortion::inverse.
double invert_by_bisection(Distortion const& g, double p)
{
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i)
    {
        double mid = 0.5 * (lo + hi);
        (g(mid) < p ? lo : hi) = mid;
    }
    return hi;
}

std::vector<double> to_vec(std::span<double const> s)
{
    return {s.begin(), s.end()};
}

}  // namespace

TEST(Distortion, PowerTailLinearSegment)
{
    EXPECT_DOUBLE_EQ(Distortion::power_tail(0.05, 1.0)(0.025), 0.5);
}

TEST(Distortion, PowerTailSquare)
{
    EXPECT_DOUBLE_EQ(Distortion::power_tail(0.05, 2.0)(0.025), 0.25);
}

TEST(Distortion, EveryKindIsOneAtOne)
{
    for (auto const& g : {Distortion::power_tail(0.3, 0.5), Distortion::value_at_risk(0.01),
                          Distortion::average_value_at_risk(0.2),
                          Distortion::tabulated({{0.0, 0.0}, {0.5, 0.8}, {1.0, 1.0}})})
        EXPECT_EQ(g(1.0), 1.0) << g.describe();
}

TEST(Distortion, RejectsBadParameters)
{
    EXPECT_THROW(Distortion::power_tail(0.0, 1.0), Error);
    EXPECT_THROW(Distortion::power_tail(0.1, -1.0), Error);
    EXPECT_THROW(Distortion::tabulated({{0.0, 0.0}, {0.5, 0.9}, {0.7, 0.8}, {1.0, 1.0}}), Error);
    EXPECT_THROW(Distortion::tabulated({{0.1, 0.0}, {1.0, 1.0}}), Error);
}

TEST(Distortion, TabulatedInterpolatesLinearly)
{
    auto g = Distortion::tabulated({{0.0, 0.0}, {0.2, 0.5}, {1.0, 1.0}});
    EXPECT_NEAR(g(0.1), 0.25, 1e-15);
    EXPECT_NEAR(g(0.6), 0.75, 1e-15);
}

TEST(Partition, UniformOnAlphaLevels)
{
    auto part = make_partition(Distortion::power_tail(0.05, 1.0), 5, PartitionScheme::UniformOnAlpha);
    std::vector<double> want{0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 1.0};
    auto got = to_vec(part.levels());
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
        EXPECT_NEAR(got[i], want[i], 1e-15);
}

TEST(Partition, SingleIntervalBelowAlpha)
{
    auto part = make_partition(Distortion::average_value_at_risk(0.1), 1, PartitionScheme::UniformOnAlpha);
    auto got = to_vec(part.levels());
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(got[0], 0.0);
    EXPECT_DOUBLE_EQ(got[1], 0.1);
    EXPECT_EQ(got[2], 1.0);
}

TEST(Partition, InverseGMatchesBisection)
{
    auto g = Distortion::average_value_at_risk(0.1);
    auto part = make_partition(g, 4, PartitionScheme::InverseG);
    auto got = to_vec(part.levels());
    ASSERT_EQ(got.size(), 6u);
    EXPECT_EQ(got.front(), 0.0);
    EXPECT_EQ(got.back(), 1.0);
    for (int i = 1; i <= 4; ++i)
    {
        double oracle = invert_by_bisection(g, i / 5.0);
        EXPECT_NEAR(got[static_cast<std::size_t>(i)], oracle, 1e-12);
        EXPECT_NEAR(oracle, 0.02 * i, 1e-12);
    }
}

TEST(Partition, InverseGOnPowerTail)
{
    auto g = Distortion::power_tail(0.05, 2.0);
    auto part = make_partition(g, 9, PartitionScheme::InverseG);
    for (int i = 1; i <= 9; ++i)
        EXPECT_NEAR(part.level(static_cast<std::size_t>(i)), invert_by_bisection(g, i / 10.0), 1e-12);
}

TEST(Partition, IncrementsSumToOne)
{
    for (auto const& g : {Distortion::power_tail(0.002, 0.5), Distortion::power_tail(0.3, 2.0)})
    {
        auto part = make_partition(g, 50, PartitionScheme::UniformOnAlpha);
        double s = 0.0;
        for (double d : part.increments(g))
        {
            EXPECT_GE(d, 0.0);
            s += d;
        }
        EXPECT_NEAR(s, 1.0, 1e-15);
    }
}

TEST(Partition, RightTagUsesUpperEndpoint)
{
    auto part = make_partition(Distortion::power_tail(0.05, 1.0), 5, PartitionScheme::UniformOnAlpha);
    auto t = part.tail_probs();
    ASSERT_EQ(t.size(), 6u);
    EXPECT_NEAR(t[0], 0.01, 1e-15);
    EXPECT_NEAR(t[4], 0.05, 1e-15);
    EXPECT_NEAR(t[5], 0.05, 1e-15);  // last interval clamped to alpha
}

TEST(Partition, LeftTagStartsAtZero)
{
    auto part = make_partition(Distortion::power_tail(0.05, 1.0), 5, PartitionScheme::UniformOnAlpha,
                               QuantileTag::LeftEndpoint);
    auto t = part.tail_probs();
    EXPECT_EQ(t[0], 0.0);
    EXPECT_NEAR(t[5], 0.05, 1e-15);
}

TEST(Partition, ErrorsOnInvalidInput)
{
    EXPECT_THROW(make_partition(Distortion::power_tail(0.05, 1.0), 0, PartitionScheme::UniformOnAlpha), Error);
    EXPECT_THROW(make_partition(Distortion::value_at_risk(0.05), 4, PartitionScheme::InverseG), Error);
}

TEST(DrmFromQuantiles, ConstantInputs)
{
    auto g = Distortion::power_tail(0.05, 0.5);
    auto part = make_partition(g, 20, PartitionScheme::UniformOnAlpha);
    std::vector<double> q(part.size(), 7.25);
    EXPECT_NEAR(drm_from_quantiles(q, g, part), 7.25, 1e-13);
}

TEST(DrmFromQuantiles, ValueAtRiskPicksItsLevel)
{
    auto g = Distortion::value_at_risk(0.05);
    auto part = make_partition(g, 5, PartitionScheme::UniformOnAlpha);
    auto t = part.tail_probs();
    std::vector<double> q;
    for (double ti : t)
        q.push_back(100.0 * ti + 1.0);  // distinct value per level
    EXPECT_NEAR(drm_from_quantiles(q, g, part), 100.0 * 0.05 + 1.0, 1e-12);
}

TEST(DrmFromQuantiles, StandardNormalExtremeTail)
{
    boost::math::normal_distribution<double> nd;
    auto g = Distortion::average_value_at_risk(0.002);
    auto part = make_partition(g, 50, PartitionScheme::UniformOnAlpha);
    std::vector<double> q;
    for (double t : part.tail_probs())
        q.push_back(boost::math::quantile(nd, 1.0 - t));
    EXPECT_NEAR(drm_from_quantiles(q, g, part), 3.16, 0.005);
}

TEST(DrmFromQuantiles, SizeMismatchIsAnError)
{
    auto g = Distortion::average_value_at_risk(0.1);
    auto part = make_partition(g, 4, PartitionScheme::UniformOnAlpha);
    std::vector<double> q(3, 1.0);
    EXPECT_THROW(drm_from_quantiles(q, g, part), Error);
}

TEST(Reference, AnalyticTailValuesForModelOne)
{
    auto model = builtin_model(1);
    double want[] = {3.35, 3.16, 3.02};
    double gammas[] = {0.5, 1.0, 2.0};
    for (int i = 0; i < 3; ++i)
    {
        auto g = Distortion::power_tail(0.002, gammas[i]);
        auto part = make_partition(g, 50, PartitionScheme::UniformOnAlpha);
        auto v = analytic_drm(*model, g, part);
        ASSERT_TRUE(v.has_value());
        EXPECT_NEAR(*v, want[i], 0.01 * want[i]);
    }
}

TEST(Reference, CrudeAgreesWithAnalytic)
{
    auto model = builtin_model(2);
    auto g = Distortion::power_tail(0.05, 0.5);
    auto part = make_partition(g, 20, PartitionScheme::UniformOnAlpha);
    double exact = *analytic_drm(*model, g, part);
    double crude = reference_drm(*model, g, part, 1'000'000, 3);
    EXPECT_NEAR(crude, exact, 0.01 * exact);
}

TEST(Reference, DegenerateModel)
{
    ConstantLossModel model(7.0, 1);
    auto g = Distortion::average_value_at_risk(0.002);
    auto part = make_partition(g, 50, PartitionScheme::UniformOnAlpha);
    EXPECT_NEAR(reference_drm(model, g, part, 1000, 1), 7.0, 1e-12);
}
