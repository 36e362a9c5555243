#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bench.hpp"
#include "pipeline.hpp"

namespace drmis
{

/// Outcome of one invariant check.
struct CheckResult
{
    std::string module;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct ValidateOptions
{
    std::uint64_t seed = 1;
    /// Only run checks whose module matches; empty runs everything.
    std::string module;
};

namespace detail
{

struct Outcome
{
    bool pass;
    std::string detail;
};

template <class... Args>
std::string cat(Args const&... args)
{
    std::ostringstream os;
    os.precision(6);
    (os << ... << args);
    return os.str();
}

inline double sq(double v)
{
    return v * v;
}

/// Mean with a batch-means standard error over contiguous blocks of a chain.
struct BatchMean
{
    double mean = 0.0;
    double var = 0.0;  // variance of the block contribution to the overall mean
};

inline BatchMean batch_mean(std::span<double const> v, int batches)
{
    BatchMean out;
    std::size_t n = v.size();
    out.mean = mean(v);
    auto b = static_cast<std::size_t>(batches);
    if (n < 2 * b)
    {
        out.var = n > 1 ? variance(v) / static_cast<double>(n) : 0.0;
        return out;
    }
    std::size_t len = n / b;
    std::vector<double> bm;
    for (std::size_t k = 0; k < b; ++k)
    {
        auto first = v.begin() + static_cast<std::ptrdiff_t>(k * len);
        auto last = k + 1 == b ? v.end() : first + static_cast<std::ptrdiff_t>(len);
        bm.push_back(std::accumulate(first, last, 0.0) / static_cast<double>(last - first));
    }
    out.var = variance(bm) / static_cast<double>(b);
    return out;
}

/// Mean of the weights of a mixture draw with a standard error that
/// accounts for chain correlation and multinomial level counts.
inline std::pair<double, double> weight_mean_se(std::vector<WeightedSample> const& s)
{
    std::map<int, std::vector<double>> by;
    for (auto const& x : s)
        by[x.origin].push_back(x.w);
    double n = static_cast<double>(s.size());
    double m = 0.0, v = 0.0, between = 0.0;
    for (auto const& [o, w] : by)
    {
        auto bm = batch_mean(w, o < 0 ? 50 : 10);
        double share = static_cast<double>(w.size()) / n;
        m += share * bm.mean;
        v += share * share * bm.var;
    }
    if (by.size() > 1)
        for (auto const& [o, w] : by)
            between += static_cast<double>(w.size()) / n * sq(mean(w) - m);
    v += between / n;
    return {m, std::sqrt(v)};
}

inline std::vector<Distortion> sample_distortions()
{
    return {Distortion::power_tail(0.05, 0.5), Distortion::power_tail(0.002, 2.0), Distortion::power_tail(0.3, 1.0),
            Distortion::value_at_risk(0.1), Distortion::average_value_at_risk(0.05),
            Distortion::tabulated({{0.0, 0.0}, {0.2, 0.5}, {0.6, 0.9}, {1.0, 1.0}})};
}

/// A partition scheme the distortion supports.
inline Partition any_partition(Distortion const& g, int m)
{
    return make_partition(g, m, g.tail_level() < 1.0 ? PartitionScheme::UniformOnAlpha : PartitionScheme::InverseG);
}

inline PipelineConfig small_pipeline(std::uint64_t seed)
{
    PipelineConfig c;
    c.g = Distortion::average_value_at_risk(0.05);
    c.M = 1000;
    c.N = 5000;
    c.m = 10;
    c.surrogate = HypothesisSpec::linear();
    c.seed = seed;
    return c;
}

//---------------------------------------------------------------------------//
// distortion

inline Outcome distortion_monotone()
{
    for (auto const& g : sample_distortions())
    {
        if (g(0.0) != 0.0 || g(1.0) != 1.0)
            return {false, g.describe() + " misses an endpoint"};
        double prev = 0.0;
        for (int i = 0; i <= 100000; ++i)
        {
            double v = g(i / 100000.0);
            if (v < prev)
                return {false, cat(g.describe(), " decreases at u=", i / 100000.0)};
            prev = v;
        }
    }
    return {true, "6 distortions on 100001 grid points"};
}

inline Outcome drm_monotone_in_quantiles(std::uint64_t seed)
{
    Rng rng(seed);
    for (auto const& g : sample_distortions())
    {
        auto part = any_partition(g, 12);
        std::size_t k = part.tail_probs().size();
        for (int trial = 0; trial < 20; ++trial)
        {
            std::vector<double> q(k);
            for (auto& v : q)
                v = 3.0 * standard_normal(rng);
            std::sort(q.begin(), q.end(), std::greater<>());
            double base = drm_from_quantiles(q, g, part);
            for (std::size_t i = 0; i < k; ++i)
            {
                auto r = q;
                r[i] += 0.5 + uniform01(rng);
                if (drm_from_quantiles(r, g, part) < base - 1e-12 * (1.0 + std::abs(base)))
                    return {false, cat(g.describe(), ": raising quantile ", i, " lowered the estimate")};
            }
        }
    }
    return {true, "20 random quantile vectors per distortion"};
}

inline Outcome power_tail_concave()
{
    for (double gamma : {0.25, 0.5, 0.9, 1.0})
        for (double alpha : {0.002, 0.05, 0.5})
        {
            auto g = Distortion::power_tail(alpha, gamma);
            for (int i = 0; i < 2000; ++i)
                for (int j = i + 1; j <= 2000; j += 37)
                {
                    double a = i / 2000.0, b = j / 2000.0;
                    double mid = g(0.5 * (a + b)), chord = 0.5 * (g(a) + g(b));
                    if (mid < chord - 1e-12)
                        return {false, cat(g.describe(), " fails midpoint concavity at ", a, ", ", b)};
                }
        }
    return {true, "gamma in {0.25, 0.5, 0.9, 1}"};
}

inline Outcome drm_constant_inputs()
{
    for (auto const& g : sample_distortions())
        for (int m : {1, 17, 200})
        {
            auto part = any_partition(g, m);
            for (double c : {-3.5, 0.0, 2.0, 1e6})
            {
                std::vector<double> q(part.tail_probs().size(), c);
                double v = drm_from_quantiles(q, g, part);
                if (std::abs(v - c) > 1e-12 * (1.0 + std::abs(c)))
                    return {false, cat(g.describe(), ": constant ", c, " maps to ", v)};
            }
        }
    return {true, "m in {1, 17, 200}"};
}

//---------------------------------------------------------------------------//
// models

struct MomentTarget
{
    int id;
    double mean;
    double var;
};

inline Outcome model_moments(std::uint64_t seed)
{
    using boost::math::quadrature::gauss_kronrod;
    double const pi = std::numbers::pi;
    auto f5 = [&](double x) { return x * std::sin(2.5 * pi * x); };
    double m5 = gauss_kronrod<double, 61>::integrate(f5, 0.0, 1.0, 15, 1e-14);
    double s5 = gauss_kronrod<double, 61>::integrate([&](double x) { return f5(x) * f5(x); }, 0.0, 1.0, 15, 1e-14);
    std::vector<MomentTarget> targets{{1, 0.0, 1.0},        {2, 0.0, 2.6},  {3, 3.7, 6.69}, {4, 4.0, 8.0},
                                      {5, m5, s5 - m5 * m5}, {6, 0.0, pi * pi / 3.0}, {7, -0.3, 1.09}};
    std::size_t const n = 1000000;
    std::ostringstream worst;
    double zmax = 0.0;
    for (auto const& t : targets)
    {
        auto model = builtin_model(t.id);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t.id)));
        std::vector<double> y(n);
        for (auto& v : y)
            v = model->loss(model->sample_base(rng));
        double m = mean(y);
        double s2 = 0.0, s4 = 0.0;
        for (double v : y)
        {
            double d = sq(v - m);
            s2 += d;
            s4 += d * d;
        }
        s2 /= static_cast<double>(n);
        s4 /= static_cast<double>(n);
        double se_mean = std::sqrt(s2 / static_cast<double>(n));
        double se_var = std::sqrt(std::max(s4 - s2 * s2, 0.0) / static_cast<double>(n));
        double z1 = std::abs(m - t.mean) / se_mean, z2 = std::abs(s2 - t.var) / se_var;
        if (std::max(z1, z2) > zmax)
        {
            zmax = std::max(z1, z2);
            worst.str("");
            worst << "model " << t.id;
        }
        if (z1 > 4.0 || z2 > 4.0)
            return {false, cat("model ", t.id, ": mean ", m, " vs ", t.mean, ", variance ", s2, " vs ", t.var)};
    }
    return {true, cat("largest deviation ", zmax, " SE (", worst.str(), ")")};
}

inline Outcome alm_claims_ks(std::uint64_t seed)
{
    AlmModel alm;
    auto const& p = alm.params();
    Rng rng(seed);
    std::size_t const n = 100000;
    std::vector<double> c(n);
    for (auto& v : c)
        v = alm.sample_base(rng)[2];
    std::sort(c.begin(), c.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n;)
    {
        std::size_t j = i;
        while (j < n && c[j] == c[i])
            ++j;
        double f = compound_poisson_exp_cdf(c[i], p.lambda, p.theta_prime);
        double f_left = c[i] == 0.0 ? 0.0 : f;
        d = std::max({d, std::abs(static_cast<double>(j) / n - f), std::abs(static_cast<double>(i) / n - f_left)});
        i = j;
    }
    return {d < 0.005, cat("KS statistic ", d, " on ", n, " draws")};
}

inline Outcome densities_integrate_to_one(std::uint64_t seed)
{
    double worst = 0.0;
    for (int id : {1, 2, 3, 5, 6, 7})
    {
        auto model = builtin_model(id);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
        NormConstInputs in;
        for (int t = 0; t < 2000; ++t)
            in.draws.push_back(model->sample_base(rng));
        auto r = estimate_norm_const([](Point const&) { return 0.0; }, *model, NormConstMethod::AdaptiveQuadrature,
                                     in, rng);
        worst = std::max(worst, std::abs(r.value - 1.0));
        if (!(std::abs(r.value - 1.0) <= 1e-6))
            return {false, cat("model ", id, " integrates to ", r.value)};
    }
    return {true, cat("largest error ", worst)};
}

//---------------------------------------------------------------------------//
// surrogate

inline TrainingSet sine_training(std::size_t n, std::uint64_t seed)
{
    auto model = builtin_model(5);
    Rng rng(seed);
    TrainingSet s;
    for (std::size_t i = 0; i < n; ++i)
    {
        auto x = model->sample_base(rng);
        s.y.push_back(model->loss(x));
        s.x.push_back(std::move(x));
    }
    return s;
}

inline Outcome fit_permutation_invariant(std::uint64_t seed)
{
    auto s = sine_training(300, seed);
    // second data set in two dimensions for the multivariate paths
    auto m2 = builtin_model(7);
    Rng rng(derive_seed(seed, 2));
    TrainingSet s2;
    for (int i = 0; i < 300; ++i)
    {
        auto x = m2->sample_base(rng);
        s2.y.push_back(m2->loss(x));
        s2.x.push_back(std::move(x));
    }
    std::vector<HypothesisSpec> specs{HypothesisSpec::linear(), HypothesisSpec::polynomial(3), HypothesisSpec::knn(5),
                                      HypothesisSpec::svm_linear(), HypothesisSpec::svm_polynomial(2),
                                      HypothesisSpec::svm_gaussian()};
    double worst = 0.0;
    for (auto const* set : {&s, &s2})
    {
        std::vector<std::size_t> perm(set->size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        TrainingSet p;
        for (auto i : perm)
        {
            p.x.push_back(set->x[i]);
            p.y.push_back(set->y[i]);
        }
        for (auto const& spec : specs)
        {
            auto a = fit(spec, *set), b = fit(spec, p);
            for (std::size_t i = 0; i < set->size(); i += 3)
            {
                double diff = std::abs(a(set->x[i]) - b(set->x[i]));
                worst = std::max(worst, diff);
                if (!(diff <= 1e-6))
                    return {false, cat(spec.describe(), ": predictions differ by ", diff)};
            }
        }
    }
    return {true, cat("largest difference ", worst)};
}

inline Outcome svr_kkt(std::uint64_t seed)
{
    auto s = sine_training(300, seed);
    for (auto const& spec : {HypothesisSpec::svm_gaussian(), HypothesisSpec::svm_polynomial(3)})
    {
        auto h = fit(spec, s);
        auto const* svr = dynamic_cast<Svr const*>(h.model());
        if (!svr)
            return {false, "fit did not produce an SVR"};
        if (!(svr->kkt_gap() < 1e-3))
            return {false, cat(spec.describe(), ": KKT gap ", svr->kkt_gap())};
        for (std::size_t i = 0; i < s.size(); ++i)
        {
            double r = std::abs(s.y[i] - h(s.x[i]));
            if (r > svr->epsilon() + 2e-3)
            {
                if (!svr->at_bound(s.x[i]))
                    return {false, cat(spec.describe(), ": residual ", r, " beyond the tube with a free dual")};
            }
        }
    }
    return {true, "points outside the tube sit at the box bound"};
}

inline Outcome polynomial_recovery(std::uint64_t seed)
{
    Rng rng(seed);
    auto poly = [](Point const& x) {
        return 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[0] - 0.25 * x[0] * x[1] * x[1] + 0.1 * std::pow(x[1], 4);
    };
    TrainingSet s;
    for (int i = 0; i < 200; ++i)
    {
        Point x{2.0 * standard_normal(rng), standard_normal(rng) + 1.0};
        s.y.push_back(poly(x));
        s.x.push_back(std::move(x));
    }
    double worst = 0.0;
    for (int q : {4, 5})
    {
        auto h = fit(HypothesisSpec::polynomial(q), s);
        for (int t = 0; t < 200; ++t)
        {
            Point x{2.0 * standard_normal(rng), standard_normal(rng) + 1.0};
            double e = std::abs(h(x) - poly(x)) / (1.0 + std::abs(poly(x)));
            worst = std::max(worst, e);
        }
    }
    return {worst < 1e-8, cat("largest relative error ", worst, " for degrees 4 and 5")};
}

inline Outcome gaussian_svr_lipschitz(std::uint64_t seed)
{
    auto s = sine_training(300, seed);
    auto h = fit(HypothesisSpec::svm_gaussian(), s);
    auto const* svr = dynamic_cast<Svr const*>(h.model());
    if (!svr)
        return {false, "fit did not produce an SVR"};
    double bound = svr->lipschitz_bound();
    double slope = 0.0;
    int const n = 20000;
    double prev = h(Point{-0.5});
    for (int i = 1; i <= n; ++i)
    {
        double x = -0.5 + 2.0 * i / n;
        double v = h(Point{x});
        slope = std::max(slope, std::abs(v - prev) * n / 2.0);
        prev = v;
    }
    return {std::isfinite(bound) && slope <= bound, cat("largest grid slope ", slope, ", bound ", bound)};
}

//---------------------------------------------------------------------------//
// tilt

inline std::vector<double> model_losses(int id, std::size_t n, std::uint64_t seed)
{
    auto model = builtin_model(id);
    Rng rng(seed);
    std::vector<double> y(n);
    for (auto& v : y)
        v = model->loss(model->sample_base(rng));
    return y;
}

inline Outcome theta_monotone(std::uint64_t seed)
{
    for (int id : {1, 4, 7})
    {
        auto y = model_losses(id, 2000, derive_seed(seed, static_cast<std::uint64_t>(id)));
        auto sorted = y;
        std::sort(sorted.begin(), sorted.end());
        double prev = -kInf;
        for (int i = 1; i < 200; ++i)
        {
            double target = sorted[static_cast<std::size_t>(i * 10 - 5)];
            double th = calibrate_theta(y, target);
            if (th < prev)
                return {false, cat("model ", id, ": theta drops at target ", target)};
            prev = th;
        }
    }
    return {true, "199 targets on models 1, 4 and the centred product"};
}

inline Outcome psi_derivative(std::uint64_t seed)
{
    double worst = 0.0;
    for (int id : {1, 2, 4, 6})
    {
        auto y = model_losses(id, 2000, derive_seed(seed, static_cast<std::uint64_t>(id)));
        auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        double range = *hi - *lo;
        for (double u : {0.5, 0.9, 0.99, 0.998})
        {
            auto sorted = y;
            std::sort(sorted.begin(), sorted.end());
            double target = sorted[static_cast<std::size_t>(u * static_cast<double>(y.size()))];
            double th = calibrate_theta(y, target);
            double step = 1e-4 / range;
            double fd = (estimate_psi(y, th + step) - estimate_psi(y, th - step)) / (2.0 * step);
            double tm = tilted_mean(y, th);
            double rel = std::abs(fd - tm) / std::max(1.0, std::abs(tm));
            worst = std::max(worst, rel);
            if (!(rel <= 1e-4))
                return {false, cat("model ", id, " at u=", u, ": difference quotient ", fd, " vs tilted mean ", tm)};
        }
    }
    return {true, cat("largest relative error ", worst)};
}

inline Outcome psi_convex(std::uint64_t seed)
{
    for (int id : {1, 4, 6})
    {
        auto y = model_losses(id, 2000, derive_seed(seed, static_cast<std::uint64_t>(id)));
        double const h = 0.01;
        for (int i = -200; i <= 200; ++i)
        {
            double th = i * h;
            double d2 = estimate_psi(y, th + h) - 2.0 * estimate_psi(y, th) + estimate_psi(y, th - h);
            if (d2 < -1e-8)
                return {false, cat("model ", id, ": second difference ", d2, " at theta ", th)};
        }
    }
    return {true, "theta grid [-2, 2] step 0.01"};
}

inline Outcome mixture_weight_mean(int model_id, DrawStrategy strategy, std::uint64_t seed)
{
    auto model = builtin_model(model_id);
    auto cfg = small_pipeline(seed);
    cfg.N = 100000;
    cfg.draw.strategy = strategy;
    cfg.keep_samples = true;
    auto rep = estimate_drm(*model, cfg);
    auto [m, se] = weight_mean_se(rep.samples);
    double z = std::abs(m - 1.0) / se;
    return {z <= 3.0, cat("mean weight ", m, " (", z, " SE) over ", rep.samples.size(), " draws")};
}

//---------------------------------------------------------------------------//
// allocation

inline Outcome allocation_scaling(std::uint64_t seed)
{
    Rng rng(seed);
    for (int t = 0; t < 200; ++t)
    {
        std::size_t k = 2 + static_cast<std::size_t>(uniform01(rng) * 30);
        std::vector<double> c(k);
        for (auto& v : c)
            v = std::exp(4.0 * standard_normal(rng));
        double lambda = std::exp(10.0 * standard_normal(rng));
        auto scaled = c;
        for (auto& v : scaled)
            v *= lambda;
        auto a = allocate(c, 20000), b = allocate(scaled, 20000);
        for (std::size_t i = 0; i < k; ++i)
            if (std::abs(a.weights[i] - b.weights[i]) > 1e-12)
                return {false, cat("weight ", i, " moves from ", a.weights[i], " to ", b.weights[i])};
    }
    return {true, "200 random coefficient vectors, scale factors up to e^30"};
}

inline Outcome allocation_sums(std::uint64_t seed)
{
    Rng rng(seed);
    for (int t = 0; t < 500; ++t)
    {
        std::size_t k = 1 + static_cast<std::size_t>(uniform01(rng) * 40);
        std::vector<double> c(k);
        for (auto& v : c)
            v = uniform01(rng) < 0.2 ? 0.0 : std::exp(3.0 * standard_normal(rng));
        auto n = static_cast<long long>(uniform01(rng) * 50000);
        auto plan = allocate(c, n);
        double ps = std::accumulate(plan.weights.begin(), plan.weights.end(), 0.0);
        long long ns = std::accumulate(plan.counts.begin(), plan.counts.end(), 0LL);
        if (std::abs(ps - 1.0) > 1e-12 || ns != n)
            return {false, cat("weights sum to ", ps, ", counts to ", ns, " of ", n)};
        for (auto v : plan.counts)
            if (v < 0)
                return {false, "negative count"};
    }
    return {true, "500 random plans"};
}

inline Outcome allocation_optimal(std::uint64_t seed)
{
    Rng rng(seed);
    for (int t = 0; t < 200; ++t)
    {
        std::size_t k = 2 + static_cast<std::size_t>(uniform01(rng) * 10);
        std::vector<double> c(k);
        for (auto& v : c)
            v = std::exp(2.0 * standard_normal(rng));
        long long n = 2000;
        auto plan = allocate(c, n);
        auto objective = [&](std::vector<long long> const& cnt) {
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i)
                s += cnt[i] > 0 ? c[i] / static_cast<double>(cnt[i]) : kInf;
            return s;
        };
        double best = objective(plan.counts);
        double slack = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            if (plan.counts[i] > 1)
                slack = std::max(slack, c[i] / static_cast<double>(plan.counts[i] * (plan.counts[i] - 1)));
        for (int p = 0; p < 100; ++p)
        {
            auto cnt = plan.counts;
            auto from = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(k));
            auto to = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(k));
            long long move = 1 + static_cast<long long>(uniform01(rng) * 50);
            move = std::min(move, cnt[from]);
            cnt[from] -= move;
            cnt[to] += move;
            if (best > objective(cnt) + slack)
                return {false, cat("perturbed allocation beats the optimum: ", objective(cnt), " < ", best)};
        }
    }
    return {true, "20000 perturbed allocations"};
}

inline Outcome aux_c_lower_bound(std::uint64_t seed)
{
    int rows = 0;
    for (int id : {1, 2})
    {
        auto model = builtin_model(id);
        auto cfg = small_pipeline(derive_seed(seed, static_cast<std::uint64_t>(id)));
        auto rep = estimate_drm(*model, cfg);
        for (auto const& r : rep.jensen)
        {
            if (!std::isfinite(r.aux_c))
                continue;
            ++rows;
            if (r.aux_c < r.tail * r.tail - 3.0 * r.aux_c_se)
                return {false, cat("model ", id, " tail ", r.tail, ": aux_c ", r.aux_c, " below ", r.tail * r.tail)};
        }
    }
    return {true, cat(rows, " levels")};
}

//---------------------------------------------------------------------------//
// sampler

inline Outcome detailed_balance(std::uint64_t seed)
{
    MhConfig cfg;
    cfg.burn_in = 2000;
    cfg.thinning = 1;
    cfg.step_scale = {2.4};
    Rng rng(seed);
    auto target = [](Point const& x) { return normal_log_pdf(x[0]) + (x[0] > 1.0 ? -0.5 * x[0] : 0.0); };
    auto res = mh_sample(target, Point{0.0}, 200000, cfg, rng);
    int const bins = 8;
    std::vector<double> edges;
    for (int b = 1; b < bins; ++b)
        edges.push_back(normal_quantile(static_cast<double>(b) / bins));
    auto bin_of = [&](double v) { return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin()); };
    std::vector<std::vector<double>> t(bins, std::vector<double>(bins, 0.0));
    for (std::size_t i = 1; i < res.draws.size(); ++i)
        t[static_cast<std::size_t>(bin_of(res.draws[i - 1][0]))][static_cast<std::size_t>(bin_of(res.draws[i][0]))] += 1;
    double worst = 0.0;
    for (std::size_t a = 0; a < bins; ++a)
        for (std::size_t b = a + 1; b < bins; ++b)
        {
            double tot = t[a][b] + t[b][a];
            if (tot == 0.0)
                continue;
            double z = std::abs(t[a][b] - t[b][a]) / std::sqrt(tot);
            worst = std::max(worst, z);
        }
    return {worst <= 4.0, cat("largest flow imbalance ", worst, " SE over 8 bins")};
}

inline Outcome sampler_reproducible(std::uint64_t seed)
{
    auto model = builtin_model(2);
    auto cfg = small_pipeline(seed);
    cfg.keep_samples = true;
    auto a = estimate_drm(*model, cfg);
    auto b = estimate_drm(*model, cfg);
    if (a.samples.size() != b.samples.size())
        return {false, "sample sizes differ"};
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        if (a.samples[i].x != b.samples[i].x || a.samples[i].w != b.samples[i].w)
            return {false, cat("samples differ at index ", i)};
    auto cp = cfg;
    cp.draw.strategy = DrawStrategy::Pooled;
    auto c = estimate_drm(*model, cp), d = estimate_drm(*model, cp);
    for (std::size_t i = 0; i < c.samples.size(); ++i)
        if (c.samples[i].x != d.samples[i].x)
            return {false, cat("pooled samples differ at index ", i)};
    return {a.estimate == b.estimate && c.estimate == d.estimate, "ancestral and pooled draws repeat bit for bit"};
}

//---------------------------------------------------------------------------//
// estimator

inline Outcome quantile_monotone(std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> y(5000), w(5000);
    for (std::size_t j = 0; j < y.size(); ++j)
    {
        y[j] = std::round(10.0 * (standard_normal(rng) + 1.0)) / 10.0;  // with ties
        w[j] = std::exp(-y[j] + 0.5);
    }
    double prev = -kInf;
    WeightedQuantiles wq(y, w);
    for (int i = 0; i <= 10000; ++i)
    {
        double u = i / 10000.0;
        double q = wq.quantile(u);
        if (q < prev)
            return {false, cat("estimate drops at u=", u)};
        prev = q;
    }
    return {true, "10001 levels on a weighted sample with ties"};
}

inline Outcome quantile_equivariant(std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> y(3000), w(3000);
    for (std::size_t j = 0; j < y.size(); ++j)
    {
        y[j] = standard_normal(rng) + 1.5;
        w[j] = std::exp(-1.5 * y[j] + 1.125);
    }
    for (auto [a, b] : {std::pair{2.0, -1.0}, std::pair{0.5, 10.0}, std::pair{4.0, 0.0}})
    {
        std::vector<double> z(y.size());
        for (std::size_t j = 0; j < y.size(); ++j)
            z[j] = a * y[j] + b;
        WeightedQuantiles qy(y, w), qz(z, w);
        for (double u : {0.5, 0.9, 0.95, 0.99, 0.999})
        {
            double lhs = qz.quantile(u), rhs = a * qy.quantile(u) + b;
            if (std::abs(lhs - rhs) > 1e-12 * (1.0 + std::abs(rhs)))
                return {false, cat("a=", a, " b=", b, " u=", u, ": ", lhs, " vs ", rhs)};
        }
    }
    return {true, "three affine maps, five levels"};
}

inline Outcome jensen_bounds(std::uint64_t seed)
{
    int rows = 0;
    for (int id : {1, 2, 4})
    {
        auto model = builtin_model(id);
        auto cfg = small_pipeline(derive_seed(seed, static_cast<std::uint64_t>(id)));
        if (id == 4)
            cfg.surrogate = HypothesisSpec::polynomial(2);
        auto rep = estimate_drm(*model, cfg);
        for (auto const& r : rep.jensen)
        {
            if (!std::isfinite(r.second_moment))
                continue;
            ++rows;
            if (r.second_moment < r.bound_i - 3.0 * r.se || r.second_moment < r.bound_ii - 3.0 * r.se)
                return {false, cat("model ", id, " tail ", r.tail, ": second moment ", r.second_moment, " vs bounds ",
                                   r.bound_i, ", ", r.bound_ii)};
        }
    }
    return {true, cat(rows, " levels on models 1, 2 and 4")};
}

/// IS quantile of N(0,1) at level u from the exact tilt N(theta, 1).
inline double exact_tilt_quantile(double u, double theta, std::size_t n, Rng& rng)
{
    std::vector<double> y(n), w(n);
    for (std::size_t j = 0; j < n; ++j)
    {
        y[j] = theta + standard_normal(rng);
        w[j] = std::exp(-theta * y[j] + 0.5 * theta * theta);
    }
    return WeightedQuantiles(y, w).quantile(u);
}

inline Outcome quantile_consistency(std::uint64_t seed)
{
    double const u = 0.99, q = normal_quantile(u);
    double rmse[2] = {0.0, 0.0};
    std::size_t sizes[2] = {1000, 4000};
    int const reps = 200;
    for (int s = 0; s < 2; ++s)
    {
        for (int r = 0; r < reps; ++r)
        {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s * 1000 + r)));
            rmse[s] += sq(exact_tilt_quantile(u, q, sizes[s], rng) - q);
        }
        rmse[s] = std::sqrt(rmse[s] / reps);
    }
    double ratio = rmse[0] / rmse[1];
    return {ratio >= 1.6 && ratio <= 2.5, cat("RMSE ", rmse[0], " at N=1000, ", rmse[1], " at N=4000, ratio ", ratio)};
}

/// Anderson-Darling statistic for normality with estimated mean and
/// variance, including the small-sample correction.
inline double anderson_darling_normal(std::vector<double> v)
{
    double n = static_cast<double>(v.size());
    double m = mean(v), s = std::sqrt(variance(v));
    std::sort(v.begin(), v.end());
    double a = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
    {
        double lo = normal_cdf((v[i] - m) / s);
        double hi = normal_cdf((v[v.size() - 1 - i] - m) / s);
        a += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log1p(-hi));
    }
    a = -n - a / n;
    return a * (1.0 + 0.75 / n + 2.25 / (n * n));
}

inline Outcome quantile_normality(std::uint64_t seed)
{
    double const u = 0.95, q = normal_quantile(u);
    std::vector<double> z;
    for (int r = 0; r < 500; ++r)
    {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        z.push_back(std::sqrt(1e4) * (exact_tilt_quantile(u, q, 10000, rng) - q));
    }
    double a2 = anderson_darling_normal(z);
    return {a2 < 1.035, cat("A*^2 = ", a2, " (1% critical value 1.035)")};
}

//---------------------------------------------------------------------------//
// pipeline

inline Outcome budget_exact(std::uint64_t seed)
{
    auto model = builtin_model(2);
    auto cfg = small_pipeline(seed);
    cfg.surrogate.reset();
    cfg.candidates = {HypothesisSpec::linear(), HypothesisSpec::polynomial(2), HypothesisSpec::knn(5)};
    model->reset_count();
    auto rep = estimate_drm(*model, cfg);
    auto want = static_cast<long long>(cfg.M + cfg.N);
    if (model->eval_count() != want || rep.counter_calls != want || rep.ledger_calls != want)
        return {false, cat("one stage: ", model->eval_count(), " calls, ledger ", rep.ledger_calls, ", want ", want)};
    model->reset_count();
    auto it = estimate_drm_iterative(*model, cfg, {0.2, 0.05}, {600, 400});
    long long want2 = 600 + 400 + static_cast<long long>(cfg.N);
    if (model->eval_count() != want2 || it.ledger_calls != want2)
        return {false, cat("iterative: ", model->eval_count(), " calls, ledger ", it.ledger_calls, ", want ", want2)};
    return {true, cat(want, " and ", want2, " calls")};
}

inline Outcome option2_crosscheck(std::uint64_t seed)
{
    auto model = builtin_model(4);
    auto cfg = small_pipeline(seed);
    cfg.surrogate = HypothesisSpec::polynomial(2);
    cfg.keep_samples = true;
    auto rep = estimate_drm(*model, cfg);
    std::vector<double> y, w;
    for (auto const& s : rep.samples)
    {
        y.push_back(s.y);
        w.push_back(s.w);
    }
    auto part = make_partition(cfg.g, cfg.m, cfg.scheme, cfg.tag);
    auto qs = is_quantiles(y, w, rep.levels);
    std::vector<double> q;
    for (auto const& e : qs)
        q.push_back(e.value);
    double v = drm_from_quantiles(q, cfg.g, part);
    return {v == rep.estimate, cat("pipeline ", rep.estimate, ", recomputed ", v)};
}

inline Outcome is_beats_crude(std::uint64_t seed)
{
    auto model = builtin_model(1);
    PipelineConfig cfg;
    cfg.g = Distortion::average_value_at_risk(0.05);
    cfg.m = 20;
    cfg.M = 500;
    cfg.N = 2000;
    cfg.surrogate = HypothesisSpec::linear();
    auto ref = analytic_drm(*model, cfg.g, make_partition(cfg.g, cfg.m, cfg.scheme, cfg.tag));
    if (!ref)
        return {false, "no analytic reference"};
    double se_is = 0.0, se_crude = 0.0;
    int const reps = 200;
    for (int r = 0; r < reps; ++r)
    {
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(r));
        se_is += sq(estimate_drm(*model, cfg).estimate - *ref);
        se_crude += sq(crude_drm(*model, cfg).estimate - *ref);
    }
    double a = std::sqrt(se_is / reps), b = std::sqrt(se_crude / reps);
    return {a < b, cat("RMSE importance sampling ", a, ", crude ", b, " over ", reps, " replications")};
}

inline Outcome constant_loss(std::uint64_t seed)
{
    ConstantLossModel model(3.5, 2);
    auto cfg = small_pipeline(seed);
    auto a = estimate_drm(model, cfg), b = crude_drm(model, cfg);
    auto near = [](double v) { return std::abs(v - 3.5) <= 1e-12; };
    return {near(a.estimate) && near(b.estimate), cat("estimates ", a.estimate, " and ", b.estimate)};
}

//---------------------------------------------------------------------------//
// bench

inline ExperimentConfig tiny_experiment(std::uint64_t seed)
{
    ExperimentConfig e;
    e.name = "tiny";
    e.model = "1";
    e.alphas = {0.05};
    e.gammas = {0.5, 1.0};
    e.pipeline.M = 300;
    e.pipeline.N = 1000;
    e.pipeline.m = 5;
    e.surrogates = {"linear"};
    e.replications = 4;
    e.seed = seed;
    e.threads = 1;
    return e;
}

inline Outcome csv_round_trip(std::uint64_t seed)
{
    auto rep = run_experiment(tiny_experiment(seed));
    std::vector<SummaryRow> rows = rep.rows;
    SummaryRow odd;
    odd.model = "x";
    odd.arm = "crude";
    odd.surrogate = "-";
    odd.gamma = 1.0 / 3.0;
    odd.mean = -kInf;
    rows.push_back(odd);
    std::stringstream ss;
    write_summary_csv(ss, rows);
    auto back = read_summary_csv(ss);
    return {back == rows, cat(rows.size(), " rows")};
}

inline Outcome wall_time_accounting(std::uint64_t seed)
{
    auto rep = run_experiment(tiny_experiment(seed));
    double sum = 0.0;
    for (auto const& a : rep.arms)
        for (double t : a.wall_s)
            sum += t;
    return {rep.threads == 1 && sum <= rep.total_wall_s,
            cat("replications ", sum, " s within the serial total ", rep.total_wall_s, " s")};
}

inline Outcome bench_deterministic(std::uint64_t seed)
{
    auto cfg = tiny_experiment(seed);
    auto a = run_experiment(cfg);
    cfg.threads = 2;
    auto b = run_experiment(cfg);
    if (a.rows.size() != b.rows.size())
        return {false, "row counts differ"};
    for (std::size_t i = 0; i < a.rows.size(); ++i)
    {
        auto x = a.rows[i], y = b.rows[i];
        x.wall_time_s = y.wall_time_s = 0.0;
        if (!(x == y))
            return {false, cat("row ", i, " differs between one and two threads")};
    }
    return {true, "one and two worker threads agree"};
}

}  // namespace detail

struct InvariantCheck
{
    std::string module;
    std::string name;
    std::function<detail::Outcome(std::uint64_t)> run;
};

inline std::vector<InvariantCheck> invariant_checks()
{
    using namespace detail;
    auto noseed = [](Outcome (*f)()) { return [f](std::uint64_t) { return f(); }; };
    return {
        {"distortion", "g monotone with g(0)=0 and g(1)=1", noseed(distortion_monotone)},
        {"distortion", "drm monotone in each quantile", drm_monotone_in_quantiles},
        {"distortion", "power tail with gamma <= 1 is concave", noseed(power_tail_concave)},
        {"distortion", "constant quantiles give the constant", noseed(drm_constant_inputs)},
        {"models", "loss moments within 4 SE", model_moments},
        {"models", "ALM claims match the series CDF", alm_claims_ks},
        {"models", "base densities integrate to one", densities_integrate_to_one},
        {"surrogate", "fit invariant to training order", fit_permutation_invariant},
        {"surrogate", "SVR KKT conditions", svr_kkt},
        {"surrogate", "polynomial fit recovers a polynomial", polynomial_recovery},
        {"surrogate", "Gaussian SVR is Lipschitz", gaussian_svr_lipschitz},
        {"tilt", "theta non-decreasing in the target", theta_monotone},
        {"tilt", "psi derivative equals the tilted mean", psi_derivative},
        {"tilt", "psi convex in theta", psi_convex},
        {"tilt", "likelihood ratio has mean one", [](std::uint64_t s) {
             return mixture_weight_mean(2, DrawStrategy::Ancestral, s);
         }},
        {"allocation", "weights invariant to coefficient scale", allocation_scaling},
        {"allocation", "weights and counts sum correctly", allocation_sums},
        {"allocation", "allocation beats perturbations", allocation_optimal},
        {"allocation", "aux_c above squared tail", aux_c_lower_bound},
        {"sampler", "detailed balance", detailed_balance},
        {"sampler", "pooled mixture weights have mean one", [](std::uint64_t s) {
             return mixture_weight_mean(1, DrawStrategy::Pooled, s);
         }},
        {"sampler", "seeded draws repeat", sampler_reproducible},
        {"estimator", "quantile monotone in level", quantile_monotone},
        {"estimator", "quantile affine equivariant", quantile_equivariant},
        {"estimator", "tail second moment bounds", jensen_bounds},
        {"estimator", "error halves as N quadruples", quantile_consistency},
        {"estimator", "standardized quantile is normal", quantile_normality},
        {"pipeline", "h-call budget is exact", budget_exact},
        {"pipeline", "mixture estimate recomputes from its sample", option2_crosscheck},
        {"pipeline", "importance sampling beats crude on model 1", is_beats_crude},
        {"pipeline", "constant loss gives the constant", constant_loss},
        {"bench", "summary CSV round trip", csv_round_trip},
        {"bench", "wall time not double counted", wall_time_accounting},
        {"bench", "results independent of thread count", bench_deterministic},
    };
}

/// Runs the invariant suite. A check that throws fails with the message.
inline std::vector<CheckResult> run_invariant_suite(ValidateOptions const& opt = {},
                                                    std::function<void(CheckResult const&)> const& on_result = {})
{
    std::vector<CheckResult> out;
    std::uint64_t k = 0;
    for (auto const& c : invariant_checks())
    {
        ++k;
        if (!opt.module.empty() && c.module != opt.module)
            continue;
        CheckResult r;
        r.module = c.module;
        r.name = c.name;
        auto t0 = std::chrono::steady_clock::now();
        try
        {
            auto o = c.run(derive_seed(opt.seed, 0x7a11 + k));
            r.pass = o.pass;
            r.detail = o.detail;
        }
        catch (std::exception const& e)
        {
            r.pass = false;
            r.detail = std::string("threw: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (on_result)
            on_result(r);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace drmis
