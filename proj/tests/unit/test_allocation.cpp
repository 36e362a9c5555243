#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <drmis/allocation.hpp>

using namespace drmis;

namespace
{

double objective(std::vector<double> const& c, std::vector<double> const& n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
        s += c[i] / n[i];
    return s;
}

// Projected gradient on {n_i >= eps, sum n_i = N}: Euclidean projection
// onto the shifted simplex by sorting.
std::vector<double> projected_gradient(std::vector<double> const& c, double total)
{
    std::size_t k = c.size();
    double const eps = 1e-6 * total;
    std::vector<double> n(k, total / static_cast<double>(k));
    auto project = [&](std::vector<double> v) {
        // shift so the floor is 0, project onto {sum = total - k eps, >= 0}
        for (auto& x : v)
            x -= eps;
        double target = total - static_cast<double>(k) * eps;
        auto s = v;
        std::sort(s.begin(), s.end(), std::greater<>());
        double cum = 0.0, tau = 0.0;
        for (std::size_t j = 0; j < k; ++j)
        {
            cum += s[j];
            double t = (cum - target) / static_cast<double>(j + 1);
            if (s[j] - t > 0.0)
                tau = t;
        }
        for (auto& x : v)
            x = std::max(x - tau, 0.0) + eps;
        return v;
    };
    double step = total * total / (100.0 * std::accumulate(c.begin(), c.end(), 0.0));
    double f = objective(c, n);
    for (int it = 0; it < 200000; ++it)
    {
        std::vector<double> g(k), cand(k);
        for (std::size_t i = 0; i < k; ++i)
            g[i] = -c[i] / (n[i] * n[i]);
        for (std::size_t i = 0; i < k; ++i)
            cand[i] = n[i] - step * g[i];
        cand = project(cand);
        double fc = objective(c, cand);
        if (fc < f)
        {
            n = cand;
            f = fc;
            step *= 1.2;
        }
        else
        {
            step *= 0.5;
            if (step < 1e-14)
                break;
        }
    }
    return n;
}

}  // namespace

TEST(Allocate, EqualCoefficients)
{
    std::vector<double> c(4, 1.0);
    auto plan = allocate(c, 100);
    EXPECT_EQ(plan.counts, (std::vector<long long>{25, 25, 25, 25}));
    for (double p : plan.weights)
        EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Allocate, SquareRootProportional)
{
    std::vector<double> c{4.0, 1.0};
    auto plan = allocate(c, 30);
    EXPECT_EQ(plan.counts, (std::vector<long long>{20, 10}));
}

TEST(Allocate, MatchesNumericMinimizer)
{
    Rng rng(17);
    for (int t = 0; t < 10; ++t)
    {
        std::vector<double> c(2 + t % 5);
        for (auto& v : c)
            v = std::exp(2.0 * standard_normal(rng));
        auto plan = allocate(c, 10000);
        std::vector<double> n(plan.counts.begin(), plan.counts.end());
        auto oracle = projected_gradient(c, 10000.0);
        EXPECT_LE(objective(c, n), objective(c, oracle) * 1.001);
    }
}

TEST(Allocate, ZeroCoefficientGetsNothing)
{
    std::vector<double> c{1.0, 0.0, 4.0};
    auto plan = allocate(c, 300);
    EXPECT_EQ(plan.weights[1], 0.0);
    EXPECT_EQ(plan.counts[1], 0);
    EXPECT_EQ(plan.counts[0] + plan.counts[2], 300);
}

TEST(Allocate, AllZeroFallsBackToUniform)
{
    std::vector<double> c(3, 0.0);
    auto plan = allocate(c, 10);
    EXPECT_TRUE(plan.uniform_fallback);
    EXPECT_EQ(std::accumulate(plan.counts.begin(), plan.counts.end(), 0LL), 10);
}

TEST(Allocate, RejectsInvalid)
{
    std::vector<double> c{1.0, -1.0};
    EXPECT_THROW(allocate(c, 10), Error);
    std::vector<double> e;
    EXPECT_THROW(allocate(e, 10), Error);
    std::vector<double> ok{1.0};
    EXPECT_THROW(allocate(ok, -1), Error);
}

TEST(EstimateCoeffs, FlatTiltsReduceToBahadurNumerator)
{
    Rng rng(2);
    std::vector<double> y(20000);
    for (auto& v : y)
        v = standard_normal(rng);
    std::vector<double> tails{0.01, 0.05, 0.2};
    std::vector<double> dg{0.3, 0.5, 0.2};
    std::vector<TiltComponent> tilts;
    auto sorted = y;
    std::sort(sorted.begin(), sorted.end());
    for (double t : tails)
    {
        TiltComponent c;
        c.level = t;
        c.target = sorted[static_cast<std::size_t>((1.0 - t) * static_cast<double>(y.size()))];
        tilts.push_back(c);
    }
    GaussianKde kde(y);
    auto est = estimate_coeffs(y, {}, tilts, tails, dg, kde);
    for (std::size_t i = 0; i < tails.size(); ++i)
    {
        EXPECT_NEAR(est.aux_c[i], tails[i], 2.0 / static_cast<double>(y.size()));
        double want = (est.aux_c[i] - tails[i] * tails[i]) / kde(tilts[i].target) * dg[i];
        EXPECT_NEAR(est.coeffs[i], want, 1e-15);
    }
}

TEST(EstimateCoeffs, ZeroIncrementGivesZero)
{
    std::vector<double> y{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<TiltComponent> tilts(2);
    tilts[0].target = 2.5;
    tilts[1].target = 3.5;
    std::vector<double> tails{0.5, 0.3}, dg{0.0, 1.0};
    GaussianKde kde(y);
    auto est = estimate_coeffs(y, {}, tilts, tails, dg, kde);
    EXPECT_EQ(est.coeffs[0], 0.0);
    EXPECT_GT(est.coeffs[1], 0.0);
    auto plan = allocate(est.coeffs, 100);
    EXPECT_EQ(plan.weights[0], 0.0);
}

TEST(EstimateCoeffs, NormalTiltsAgainstQuadrature)
{
    boost::math::normal_distribution<double> nd;
    Rng rng(5);
    std::vector<double> y(100000);
    for (auto& v : y)
        v = standard_normal(rng);
    auto sorted = y;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> tails{0.0125, 0.025, 0.0375, 0.05}, dg(4, 0.25);
    std::vector<TiltComponent> tilts;
    for (double t : tails)
    {
        TiltComponent c;
        c.level = t;
        c.target = sorted[static_cast<std::size_t>((1.0 - t) * static_cast<double>(y.size()))];
        c.theta = calibrate_theta(y, c.target);
        c.psi = estimate_psi(y, c.theta);
        tilts.push_back(c);
    }
    auto est = estimate_coeffs(y, {}, tilts, tails, dg, GaussianKde(y));
    for (std::size_t i = 0; i < tails.size(); ++i)
    {
        double q = boost::math::quantile(nd, 1.0 - tails[i]);
        double th = q;  // the exact tilt centred on q has theta = q
        auto integrand = [&](double v) { return std::exp(0.5 * th * th - th * v) * boost::math::pdf(nd, v); };
        double aux = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, q, kInf, 15, 1e-13);
        double want = (aux - tails[i] * tails[i]) / boost::math::pdf(nd, q) * dg[i];
        EXPECT_NEAR(est.coeffs[i], want, 0.1 * want) << "level " << tails[i];
    }
}

TEST(CompareVariances, ZeroShareChoosesIndividual)
{
    std::vector<double> y{1.0, 2.0}, w{1.0, 1.0};
    EXPECT_EQ(compare_variances(0.1, 1.5, y, w, y, w, 0.0), QuantileChoice::Individual);
}

TEST(CompareVariances, IdenticalLawsTieToMixture)
{
    Rng rng(3);
    std::vector<double> y(1000), w(1000);
    for (std::size_t j = 0; j < y.size(); ++j)
    {
        y[j] = 1.0 + standard_normal(rng);
        w[j] = std::exp(0.5 - y[j]);
    }
    EXPECT_EQ(compare_variances(0.05, 1.645, y, w, y, w, 1.0), QuantileChoice::Mixture);
}

TEST(CompareVariances, AgreesWithQuadratureOnNormalMixture)
{
    boost::math::normal_distribution<double> nd;
    std::vector<double> tails{0.0125, 0.025, 0.0375, 0.05};
    std::vector<double> theta, p{0.1, 0.2, 0.3, 0.4};
    for (double t : tails)
        theta.push_back(boost::math::quantile(nd, 1.0 - t));
    auto mix_ratio = [&](double v) {
        double s = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j)
            s += p[j] * std::exp(theta[j] * v - 0.5 * theta[j] * theta[j]);
        return 1.0 / s;
    };
    Rng rng(21);
    std::size_t const n = 200000;
    std::vector<double> ym(n), wm(n);
    std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
    for (std::size_t j = 0; j < n; ++j)
    {
        ym[j] = theta[pick(rng)] + standard_normal(rng);
        wm[j] = mix_ratio(ym[j]);
    }
    int checked = 0;
    for (std::size_t i = 0; i < tails.size(); ++i)
    {
        double q = theta[i], a = tails[i];
        auto ind_f = [&](double v) { return std::exp(0.5 * q * q - q * v) * boost::math::pdf(nd, v); };
        auto mix_f = [&](double v) { return mix_ratio(v) * boost::math::pdf(nd, v); };
        using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
        double ind = GK::integrate(ind_f, q, kInf, 15, 1e-13) - a * a;
        double mix = p[i] * (GK::integrate(mix_f, q, kInf, 15, 1e-13) - a * a);
        if (std::abs(ind - mix) < 0.05 * std::max(ind, mix))
            continue;  // too close to call from samples
        ++checked;
        std::vector<double> yi(n), wi(n);
        for (std::size_t j = 0; j < n; ++j)
        {
            yi[j] = q + standard_normal(rng);
            wi[j] = std::exp(0.5 * q * q - q * yi[j]);
        }
        auto want = ind < mix ? QuantileChoice::Individual : QuantileChoice::Mixture;
        EXPECT_EQ(compare_variances(a, q, yi, wi, ym, wm, p[i]), want) << "level " << a;
    }
    EXPECT_GT(checked, 0);
}
