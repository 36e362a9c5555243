#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <drmis/pipeline.hpp>
#include <drmis/sampler.hpp>

using namespace drmis;

namespace
{

Surrogate identity_surrogate()
{
    TrainingSet s;
    for (double x : {-1.0, 0.0, 1.0, 2.0})
    {
        s.x.push_back({x});
        s.y.push_back(x);
    }
    return fit(HypothesisSpec::linear(), s);
}

std::vector<double> first_coord(std::vector<Point> const& pts)
{
    std::vector<double> v;
    for (auto const& p : pts)
        v.push_back(p[0]);
    return v;
}

// Standard error of the mean from 50 non-overlapping batches.
double batch_se(std::vector<double> const& v)
{
    std::size_t b = 50, len = v.size() / b;
    std::vector<double> means;
    for (std::size_t i = 0; i < b; ++i)
        means.push_back(mean(std::span(v).subspan(i * len, len)));
    double m = mean(means), s = 0.0;
    for (double x : means)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(b - 1) / static_cast<double>(b));
}

double ks_normal(std::vector<double> v, double mu)
{
    boost::math::normal_distribution<double> nd(mu, 1.0);
    std::sort(v.begin(), v.end());
    double n = static_cast<double>(v.size()), d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
    {
        double f = boost::math::cdf(nd, v[i]);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
    }
    return d;
}

}  // namespace

TEST(Mh, StandardNormalMoments)
{
    Rng rng(1);
    MhConfig cfg;
    auto res = mh_sample([](Point const& x) { return -0.5 * x[0] * x[0]; }, {3.0}, 20000, cfg, rng);
    ASSERT_EQ(res.draws.size(), 20000u);
    auto v = first_coord(res.draws);
    double m = mean(v);
    EXPECT_NEAR(m, 0.0, 3.0 * batch_se(v));
    double var = 0.0;
    for (double x : v)
        var += (x - m) * (x - m);
    EXPECT_NEAR(var / static_cast<double>(v.size()), 1.0, 0.1);
    EXPECT_GT(res.acceptance, 0.15);
    EXPECT_LT(res.acceptance, 0.7);
    EXPECT_FALSE(res.low_acceptance);
}

TEST(Mh, TiltedNormalCentresOnTheta)
{
    auto model = builtin_model(1);
    auto h = identity_surrogate();
    TiltComponent c;
    c.theta = 2.0;
    c.psi = 2.0;
    Rng rng(2);
    auto res = mh_sample([&](Point const& x) { return tilted_log_density_unnorm(c, h, *model, x); }, {0.0}, 20000,
                         MhConfig{}, rng);
    auto v = first_coord(res.draws);
    EXPECT_NEAR(mean(v), 2.0, 3.0 * batch_se(v));
}

TEST(Mh, UniformTargetStaysInSupport)
{
    Rng rng(3);
    auto res = mh_sample([](Point const& x) { return x[0] < 0.0 || x[0] > 1.0 ? -kInf : 0.0; }, {0.5}, 20000,
                         MhConfig{}, rng);
    auto v = first_coord(res.draws);
    for (double x : v)
        ASSERT_TRUE(x >= 0.0 && x <= 1.0);
    EXPECT_NEAR(mean(v), 0.5, 3.0 * batch_se(v));
}

TEST(Mh, RejectsBadConfig)
{
    Rng rng(4);
    MhConfig cfg;
    cfg.thinning = 0;
    EXPECT_THROW(mh_sample([](Point const&) { return 0.0; }, {0.0}, 10, cfg, rng), Error);
    EXPECT_THROW(mh_sample([](Point const&) { return 0.0; }, {0.0}, 0, MhConfig{}, rng), Error);
}

TEST(NormConst, ZeroTiltIsOne)
{
    auto model = builtin_model(1);
    Rng rng(5);
    auto r = estimate_norm_const(TiltComponent{}, identity_surrogate(), *model, NormConstMethod::AdaptiveQuadrature,
                                 {}, rng);
    EXPECT_NEAR(r.value, 1.0, 1e-8);
}

TEST(NormConst, ShiftedCumulantGivesExpDelta)
{
    auto model = builtin_model(1);
    Rng rng(6);
    TiltComponent c;
    c.theta = 1.5;
    double delta = 0.7;
    c.psi = 0.5 * 1.5 * 1.5 - delta;
    auto r = estimate_norm_const(c, identity_surrogate(), *model, NormConstMethod::AdaptiveQuadrature, {}, rng);
    EXPECT_NEAR(r.value, std::exp(delta), 1e-7);
}

TEST(NormConst, QuadratureAndMonteCarloAgreeInTwoDimensions)
{
    auto model = builtin_model(2);
    TrainingSet s;
    for (double a : {-1.0, 0.0, 1.0})
        for (double b : {-1.0, 1.0})
        {
            s.x.push_back({a, b});
            s.y.push_back(a + b);
        }
    auto h = fit(HypothesisSpec::linear(), s);
    TiltComponent c;
    c.theta = 1.0;
    // X1 + X2 has variance 2.6, so E e^{X1+X2} = e^{1.3}
    double exact = std::exp(1.3);
    Rng rng(7);
    NormConstInputs in;
    in.draws = mh_sample([&](Point const& x) { return tilted_log_density_unnorm(c, h, *model, x); }, {0.0, 0.0},
                         4000, MhConfig{}, rng)
                   .draws;
    in.mc_samples = 200000;
    auto q = estimate_norm_const(c, h, *model, NormConstMethod::AdaptiveQuadrature, in, rng);
    auto mc = estimate_norm_const(c, h, *model, NormConstMethod::MonteCarlo, in, rng);
    EXPECT_NEAR(q.value, exact, 1e-4 * exact);
    EXPECT_NEAR(mc.value, exact, 0.01 * exact);
    EXPECT_GT(mc.std_error, 0.0);
}

TEST(NormConst, MethodNames)
{
    for (auto m : {NormConstMethod::TrapezoidOnSamples, NormConstMethod::AdaptiveQuadrature,
                   NormConstMethod::KdeRatio, NormConstMethod::MonteCarlo})
        EXPECT_EQ(parse_norm_const_method(to_string(m)), m);
    EXPECT_THROW(parse_norm_const_method("simpson"), Error);
    EXPECT_EQ(default_norm_const_method(*builtin_model(2)), NormConstMethod::AdaptiveQuadrature);
    EXPECT_EQ(default_norm_const_method(*builtin_model(4)), NormConstMethod::MonteCarlo);
}

TEST(Mixture, FlatMixtureReproducesBaseLaw)
{
    auto model = builtin_model(1);
    MixtureIS mix;
    mix.surrogate = identity_surrogate();
    mix.components.push_back({});
    mix.weights = {1.0};
    MhConfig cfg;
    cfg.thinning = 20;
    Rng rng(8);
    std::vector<Point> px{{-1.0}, {0.0}, {1.0}};
    std::vector<double> py{-1.0, 0.0, 1.0};
    auto s = draw_mixture(mix, *model, 40000, cfg, rng, px, py);
    std::vector<double> y;
    for (auto const& w : s)
    {
        EXPECT_EQ(w.w, 1.0);
        y.push_back(w.y);
    }
    EXPECT_LT(ks_normal(y, 0.0), 0.01);
}

TEST(Mixture, DrawsConcentrateInTheTail)
{
    auto model = builtin_model(1);
    PipelineConfig cfg;
    cfg.g = Distortion::average_value_at_risk(0.05);
    cfg.m = 20;
    cfg.M = 1000;
    cfg.N = 5000;
    cfg.surrogate = HypothesisSpec::linear();
    cfg.keep_samples = true;
    auto rep = estimate_drm(*model, cfg);
    ASSERT_EQ(rep.samples.size(), 5000u);
    double above = 0.0;
    for (auto const& s : rep.samples)
        above += s.y > 1.2816;
    // the linear surrogate is exact, so component i is N(theta_i, 1)
    boost::math::normal_distribution<double> nd;
    double want = 0.0;
    for (std::size_t i = 0; i < rep.tilts.size(); ++i)
        want += rep.plan.weights[i] * boost::math::cdf(nd, rep.tilts[i].theta - 1.2816);
    EXPECT_NEAR(above / 5000.0, want, 0.03);
    EXPECT_GT(want, 0.5);  // 0.1 under F
}

TEST(Mixture, ZeroWeightComponentIsIgnored)
{
    auto model = builtin_model(1);
    TiltComponent a, b;
    a.theta = 1.0;
    a.psi = 0.5;
    a.target = 1.0;
    b.theta = 3.0;
    b.psi = 4.5;
    b.target = 3.0;
    MixtureIS one, two;
    one.surrogate = two.surrogate = identity_surrogate();
    one.components = {a};
    one.weights = {1.0};
    two.components = {a, b};
    two.weights = {1.0, 0.0};
    std::vector<Point> px{{0.0}, {1.0}, {3.0}};
    std::vector<double> py{0.0, 1.0, 3.0};
    Rng r1(9), r2(9);
    auto s1 = draw_mixture(one, *model, 2000, MhConfig{}, r1, px, py);
    auto s2 = draw_mixture(two, *model, 2000, MhConfig{}, r2, px, py);
    ASSERT_EQ(s1.size(), s2.size());
    for (std::size_t j = 0; j < s1.size(); ++j)
    {
        EXPECT_EQ(s1[j].x, s2[j].x);
        EXPECT_DOUBLE_EQ(s1[j].w, s2[j].w);
    }
}

TEST(Mixture, ClosestPivot)
{
    std::vector<Point> px{{0.0}, {1.0}, {2.0}};
    std::vector<double> py{0.0, 1.0, 2.0};
    EXPECT_EQ(closest_pivot(px, py, 1.2), Point{1.0});
    EXPECT_THROW(closest_pivot({}, {}, 0.0), Error);
}
