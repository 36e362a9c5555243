#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <drmis/models.hpp>
#include <drmis/surrogate.hpp>

using namespace drmis;

namespace
{

TrainingSet from_function(std::vector<double> const& xs, double (*f)(double))
{
    TrainingSet s;
    for (double x : xs)
    {
        s.x.push_back({x});
        s.y.push_back(f(x));
    }
    return s;
}

TrainingSet pivots(int id, std::size_t n, std::uint64_t seed)
{
    auto m = builtin_model(id);
    Rng rng(seed);
    TrainingSet s;
    for (std::size_t i = 0; i < n; ++i)
    {
        auto x = m->sample_base(rng);
        s.y.push_back(m->loss(x));
        s.x.push_back(std::move(x));
    }
    return s;
}

}  // namespace

TEST(Fit, LinearInterpolatesLine)
{
    auto s = from_function({0, 1, 2, 3}, [](double x) { return 2 * x + 1; });
    auto h = fit(HypothesisSpec::linear(), s);
    EXPECT_NEAR(h({10.0}), 21.0, 1e-12);
    for (std::size_t i = 0; i < s.size(); ++i)
        EXPECT_NEAR(h(s.x[i]), s.y[i], 1e-12);
    EXPECT_FALSE(h.ridge_fallback());
}

TEST(Fit, NearestNeighbourReproducesTrainingPoints)
{
    auto s = pivots(2, 200, 4);
    auto h = fit(HypothesisSpec::knn(1), s);
    for (std::size_t i = 0; i < s.size(); ++i)
        EXPECT_EQ(h(s.x[i]), s.y[i]);
    auto s1 = pivots(5, 200, 4);
    auto h1 = fit(HypothesisSpec::knn(1), s1);
    for (std::size_t i = 0; i < s1.size(); ++i)
        EXPECT_EQ(h1(s1.x[i]), s1.y[i]);
}

TEST(Fit, KnnAveragesNeighbours)
{
    auto s = from_function({0, 1, 2, 10}, [](double x) { return x * x; });
    auto h = fit(HypothesisSpec::knn(3), s);
    EXPECT_NEAR(h({0.9}), (0.0 + 1.0 + 4.0) / 3.0, 1e-12);
}

TEST(Fit, QuadraticExact)
{
    auto s = from_function({-2, -1, 0, 1, 2}, [](double x) { return x * x; });
    auto h = fit(HypothesisSpec::polynomial(2), s);
    // three evaluations pin down the three coefficients
    EXPECT_NEAR(h({0.0}), 0.0, 1e-10);
    EXPECT_NEAR(h({1.0}) - h({-1.0}), 0.0, 1e-10);
    EXPECT_NEAR(h({3.0}), 9.0, 1e-10);
    EXPECT_NEAR(h({-7.5}), 56.25, 1e-9);
}

TEST(Fit, UnderdeterminedUsesRidge)
{
    auto s = from_function({0, 1, 2}, [](double x) { return std::exp(x); });
    auto h = fit(HypothesisSpec::polynomial(4), s);
    EXPECT_TRUE(h.ridge_fallback());
    for (std::size_t i = 0; i < s.size(); ++i)
        EXPECT_NEAR(h(s.x[i]), s.y[i], 1e-4);
}

TEST(Fit, SvrTracksSmoothFunction)
{
    auto s = pivots(5, 400, 8);
    auto h = fit(HypothesisSpec::svm_gaussian(), s);
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i)
    {
        double x = i / 100.0;
        worst = std::max(worst, std::abs(h({x}) - x * std::sin(2.5 * std::numbers::pi * x)));
    }
    // ε-insensitive loss with ε = 0.1 sd(y), so errors near ε are expected
    EXPECT_LT(worst, 0.2);
}

TEST(Fit, LinearSvrOnLinearData)
{
    auto s = pivots(2, 300, 9);
    auto h = fit(HypothesisSpec::svm_linear(), s);
    auto const* svr = dynamic_cast<detail::Svr const*>(h.model());
    ASSERT_NE(svr, nullptr);
    EXPECT_LT(svr->kkt_gap(), 1e-3);
    for (std::size_t i = 0; i < s.size(); i += 10)
        EXPECT_NEAR(h(s.x[i]), s.y[i], svr->epsilon() + 1e-2);
}

TEST(Fit, ValidatesInputs)
{
    TrainingSet s;
    s.x = {{0.0}};
    s.y = {1.0};
    EXPECT_THROW(fit(HypothesisSpec::linear(), s), Error);
    auto t = from_function({0, 1, 2}, [](double x) { return x; });
    EXPECT_THROW(fit(HypothesisSpec::knn(5), t), Error);
    t.x[1] = {1.0, 2.0};
    EXPECT_THROW(fit(HypothesisSpec::linear(), t), Error);
    EXPECT_THROW(HypothesisSpec::knn(0).validate(), Error);
}

TEST(Hypothesis, ParseAndDescribe)
{
    auto p = parse_hypothesis("poly5");
    EXPECT_EQ(p.cls, HypothesisClass::Polynomial);
    EXPECT_EQ(p.degree, 5);
    EXPECT_EQ(parse_hypothesis("knn7").k, 7);
    EXPECT_EQ(parse_hypothesis("linear").cls, HypothesisClass::Linear);
    EXPECT_EQ(parse_hypothesis("svm_gauss").cls, HypothesisClass::SvmGaussian);
    EXPECT_THROW(parse_hypothesis("forest"), Error);
    for (auto const& s : {HypothesisSpec::linear(), HypothesisSpec::polynomial(3), HypothesisSpec::svm_polynomial(2),
                          HypothesisSpec::svm_gaussian(), HypothesisSpec::knn(4)})
        EXPECT_EQ(parse_hypothesis(s.describe()).describe(), s.describe());
}

TEST(KFold, NoiselessLinearSelectsLinearWithZeroError)
{
    TrainingSet s;
    Rng rng(1);
    for (int i = 0; i < 200; ++i)
    {
        Point x{standard_normal(rng), standard_normal(rng)};
        s.y.push_back(1.0 + 2.0 * x[0] - 3.0 * x[1]);
        s.x.push_back(std::move(x));
    }
    auto sel = kfold_select({HypothesisSpec::linear(), HypothesisSpec::polynomial(2), HypothesisSpec::knn(3)}, s, 10);
    EXPECT_EQ(sel.winner.cls, HypothesisClass::Linear);
    ASSERT_FALSE(sel.table.empty());
    EXPECT_LT(sel.table.front().cv_mse, 1e-20);
}

TEST(KFold, ErrorMatchesManualFolds)
{
    auto s = pivots(5, 103, 2);  // k does not divide M: last fold absorbs the remainder
    int k = 10;
    auto spec = HypothesisSpec::polynomial(3);
    double manual = 0.0;
    std::size_t fold = s.size() / static_cast<std::size_t>(k);
    for (int f = 0; f < k; ++f)
    {
        std::size_t lo = static_cast<std::size_t>(f) * fold;
        std::size_t hi = f + 1 == k ? s.size() : lo + fold;
        TrainingSet train;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i < lo || i >= hi)
            {
                train.x.push_back(s.x[i]);
                train.y.push_back(s.y[i]);
            }
        auto h = fit(spec, train);
        double e = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            e += (h(s.x[i]) - s.y[i]) * (h(s.x[i]) - s.y[i]);
        manual += e / static_cast<double>(hi - lo);
    }
    manual /= k;
    EXPECT_NEAR(kfold_error(spec, s, k), manual, 1e-12 * manual);
}

TEST(KFold, TiesGoToEarlierCandidate)
{
    auto s = pivots(1, 100, 3);
    auto sel = kfold_select({HypothesisSpec::linear(), HypothesisSpec::linear()}, s, 5);
    EXPECT_EQ(sel.winner.cls, HypothesisClass::Linear);
    auto sel2 = kfold_select({HypothesisSpec::polynomial(2), HypothesisSpec::linear()}, s, 5);
    // exact linear data: both fits are exact, the earlier one wins
    EXPECT_EQ(sel2.winner.cls, HypothesisClass::Polynomial);
}

TEST(KFold, SearchPicksPolynomialOnSine)
{
    auto s = pivots(5, 1000, 12);
    SearchOptions opt;
    opt.svm = false;
    auto sel = kfold_search(s, 20, opt);
    EXPECT_EQ(sel.winner.cls, HypothesisClass::Polynomial);
    EXPECT_GE(sel.winner.degree, 4);
}
