#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "estimator.hpp"
#include "tilt.hpp"

namespace drmis
{

struct MhConfig
{
    std::vector<double> step_scale;  // per coordinate; empty means 1
    int burn_in = 2000;
    int thinning = 5;
    int chains = 1;
    double target_accept = 0.35;
    int max_adapt_steps = -1;  // -1: adapt during the whole burn-in
    double atom_jump_prob = 0.1;

    void validate() const
    {
        require(burn_in >= 0, ErrorKind::Config, "burn_in must be >= 0");
        require(thinning >= 1, ErrorKind::Config, "thinning must be >= 1");
        require(chains >= 1, ErrorKind::Config, "chains must be >= 1");
        require(target_accept > 0.0 && target_accept < 1.0, ErrorKind::Config, "target_accept must lie in (0,1)");
        require(atom_jump_prob >= 0.0 && atom_jump_prob < 1.0, ErrorKind::Config, "atom_jump_prob must lie in [0,1)");
        for (double s : step_scale)
            require(s > 0.0 && std::isfinite(s), ErrorKind::Config, "step scales must be positive");
    }
};

struct MhResult
{
    std::vector<Point> draws;
    double acceptance = 0.0;
    std::vector<double> step_scale;
    bool low_acceptance = false;
};

/// Coordinate with a point mass at 0 and support [0, inf): random-walk
/// moves reflect at 0 and separate jump moves enter or leave the atom.
struct AtomSpec
{
    std::size_t coord;
};

/// Random-walk Metropolis-Hastings with Gaussian proposals. The common
/// step factor is adapted by Robbins-Monro during burn-in and then frozen.
inline MhResult mh_sample(std::function<double(Point const&)> const& log_target, Point init, std::size_t n,
                          MhConfig const& cfg, Rng& rng, std::optional<AtomSpec> atom = std::nullopt)
{
    cfg.validate();
    require(n >= 1, ErrorKind::Config, "MH needs n >= 1");
    std::size_t d = init.size();
    std::vector<double> scale = cfg.step_scale.empty() ? std::vector<double>(d, 1.0) : cfg.step_scale;
    require(scale.size() == d, ErrorKind::Config, "step scale dimension mismatch");

    Point x = std::move(init);
    double lp = log_target(x);
    require(lp > -kInf && !std::isnan(lp), ErrorKind::Sampling, "MH target is not finite at the initial point");

    double log_factor = 0.0;
    int adapt_steps = cfg.max_adapt_steps < 0 ? cfg.burn_in : std::min(cfg.max_adapt_steps, cfg.burn_in);
    std::size_t total = static_cast<std::size_t>(cfg.burn_in) + n * static_cast<std::size_t>(cfg.thinning);
    std::size_t accepted_after = 0, proposed_after = 0;
    MhResult res;
    res.draws.reserve(n);
    Point prop(d);

    auto half_normal_log_pdf = [](double v, double s) {
        return std::log(2.0) + normal_log_pdf(v / s) - std::log(s);
    };

    for (std::size_t t = 0; t < total; ++t)
    {
        double factor = std::exp(log_factor);
        prop = x;
        double log_q_ratio = 0.0;  // log q(x | prop) - log q(prop | x)
        bool jump = atom && uniform01(rng) < cfg.atom_jump_prob;
        if (jump)
        {
            std::size_t a = atom->coord;
            double s = scale[a] * factor;
            if (x[a] == 0.0)
            {
                prop[a] = std::abs(standard_normal(rng)) * s;
                log_q_ratio = -half_normal_log_pdf(prop[a], s);
            }
            else
            {
                prop[a] = 0.0;
                log_q_ratio = half_normal_log_pdf(x[a], s);
            }
        }
        else
        {
            for (std::size_t j = 0; j < d; ++j)
            {
                if (atom && j == atom->coord)
                {
                    if (x[j] != 0.0)
                        prop[j] = std::abs(x[j] + scale[j] * factor * standard_normal(rng));
                }
                else
                {
                    prop[j] = x[j] + scale[j] * factor * standard_normal(rng);
                }
            }
        }
        double lp_new = log_target(prop);
        double log_acc = lp_new - lp + log_q_ratio;
        bool accept = lp_new > -kInf && (log_acc >= 0.0 || std::log(uniform01(rng)) < log_acc);
        if (accept)
        {
            std::swap(x, prop);
            lp = lp_new;
        }
        if (t < static_cast<std::size_t>(adapt_steps) && !jump)
        {
            double gain = 1.0 / std::pow(static_cast<double>(t) + 10.0, 0.6);
            log_factor += gain * ((accept ? 1.0 : 0.0) - cfg.target_accept) * 3.0;
            log_factor = std::clamp(log_factor, -20.0, 10.0);
        }
        if (t >= static_cast<std::size_t>(cfg.burn_in))
        {
            ++proposed_after;
            accepted_after += accept ? 1 : 0;
            if ((t - static_cast<std::size_t>(cfg.burn_in) + 1) % static_cast<std::size_t>(cfg.thinning) == 0)
                res.draws.push_back(x);
        }
    }
    res.acceptance = proposed_after ? static_cast<double>(accepted_after) / static_cast<double>(proposed_after) : 0.0;
    res.step_scale = scale;
    for (auto& s : res.step_scale)
        s *= std::exp(log_factor);
    res.low_acceptance = res.acceptance < 0.01;
    return res;
}

//---------------------------------------------------------------------------//
// Normalizing constants
//---------------------------------------------------------------------------//

enum class NormConstMethod
{
    TrapezoidOnSamples,
    AdaptiveQuadrature,
    KdeRatio,
    MonteCarlo,
};

inline std::string to_string(NormConstMethod m)
{
    switch (m)
    {
    case NormConstMethod::TrapezoidOnSamples: return "trapezoid";
    case NormConstMethod::AdaptiveQuadrature: return "quadrature";
    case NormConstMethod::KdeRatio: return "kde_ratio";
    case NormConstMethod::MonteCarlo: return "monte_carlo";
    }
    return "unknown";
}

inline NormConstMethod parse_norm_const_method(std::string const& s)
{
    if (s == "trapezoid")
        return NormConstMethod::TrapezoidOnSamples;
    if (s == "quadrature")
        return NormConstMethod::AdaptiveQuadrature;
    if (s == "kde_ratio")
        return NormConstMethod::KdeRatio;
    if (s == "monte_carlo")
        return NormConstMethod::MonteCarlo;
    fail(ErrorKind::Config, "unknown normalizing-constant method '" + s + "'");
}

inline NormConstMethod default_norm_const_method(BlackBoxModel const& model)
{
    return model.dim() <= 2 ? NormConstMethod::AdaptiveQuadrature : NormConstMethod::MonteCarlo;
}

/// Inputs for estimating integral of exp(log_kernel(x)) f(x) dx.
struct NormConstInputs
{
    std::vector<Point> draws;      // draws from the (approximately) normalized target
    std::vector<Point> grid;       // extra grid points for the trapezoid rule
    std::size_t mc_samples = 20000;
    std::size_t kde_points = 100;
    bool kde_median = false;
    double defensive_mix = 0.1;    // share of F in the Monte Carlo proposal
    double widen = 1.2;            // scale of the fitted Gaussian proposal
};

struct NormConstResult
{
    double value = kNaN;
    double std_error = 0.0;
    NormConstMethod method = NormConstMethod::AdaptiveQuadrature;
};

namespace detail
{

inline void draw_moments(std::vector<Point> const& pts, std::size_t d, std::vector<double>& mu, std::vector<double>& sd)
{
    mu.assign(d, 0.0);
    sd.assign(d, 1.0);
    if (pts.size() < 2)
    {
        if (pts.size() == 1)
            mu = pts.front();
        return;
    }
    for (auto const& p : pts)
        for (std::size_t j = 0; j < d; ++j)
            mu[j] += p[j];
    for (auto& m : mu)
        m /= static_cast<double>(pts.size());
    std::vector<double> v(d, 0.0);
    for (auto const& p : pts)
        for (std::size_t j = 0; j < d; ++j)
            v[j] += (p[j] - mu[j]) * (p[j] - mu[j]);
    for (std::size_t j = 0; j < d; ++j)
    {
        double s = std::sqrt(v[j] / static_cast<double>(pts.size() - 1));
        sd[j] = s > 0.0 ? s : 1.0;
    }
}

/// Integral of exp(lg(x) - shift) over [lo, hi] split at `peak`, in the
/// variable u = (x - peak)/s.
template <class F>
double integrate_split(F const& lg, double shift, double peak, double s, double lo, double hi, double tol)
{
    using boost::math::quadrature::gauss_kronrod;
    auto f = [&](double u) {
        double v = lg(peak + s * u) - shift;
        return v > -700.0 ? std::exp(v) : 0.0;
    };
    double ulo = std::isfinite(lo) ? (lo - peak) / s : -kInf;
    double uhi = std::isfinite(hi) ? (hi - peak) / s : kInf;
    double left = ulo < 0.0 ? gauss_kronrod<double, 31>::integrate(f, ulo, 0.0, 12, tol) : 0.0;
    double right = uhi > 0.0 ? gauss_kronrod<double, 31>::integrate(f, 0.0, uhi, 12, tol) : 0.0;
    return s * (left + right);
}

/// Arg-max of lg on a grid of +-half_width s around `centre` within
/// [lo, hi], refined by golden section around the best node.
template <class F>
double locate_peak(F const& lg, double centre, double s, double lo, double hi, int half_width = 40)
{
    double best = centre, best_v = -kInf;
    for (int k = -2 * half_width; k <= 2 * half_width; ++k)
    {
        double x = centre + 0.5 * s * k;
        if (x < lo || x > hi)
            continue;
        double v = lg(x);
        if (v > best_v)
        {
            best_v = v;
            best = x;
        }
    }
    if (best_v == -kInf)
    {
        // support narrower than the grid: probe inside it
        double a = std::isfinite(lo) ? lo : hi - 1.0, b = std::isfinite(hi) ? hi : lo + 1.0;
        for (int k = 0; k <= 200; ++k)
        {
            double x = a + (b - a) * k / 200.0;
            double v = lg(x);
            if (v > best_v)
            {
                best_v = v;
                best = x;
            }
        }
        require(best_v > -kInf, ErrorKind::Numeric, "integrand vanishes on its support");
        return best;
    }
    double a = std::max(lo, best - 0.5 * s), b = std::min(hi, best + 0.5 * s);
    double const r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), e = a + r * (b - a);
    double fc = lg(c), fe = lg(e);
    for (int it = 0; it < 60; ++it)
    {
        if (fc > fe)
        {
            b = e;
            e = c;
            fe = fc;
            c = b - r * (b - a);
            fc = lg(c);
        }
        else
        {
            a = c;
            c = e;
            fc = fe;
            e = a + r * (b - a);
            fe = lg(e);
        }
    }
    double x = 0.5 * (a + b);
    return lg(x) >= best_v ? x : best;
}

/// Product-Gaussian kernel density with Scott bandwidths.
class ProductKde
{
  public:
    explicit ProductKde(std::vector<Point> const& pts) : pts_(pts)
    {
        require(pts.size() >= 2, ErrorKind::Estimation, "KDE needs at least two points");
        std::size_t d = pts.front().size();
        std::vector<double> mu;
        draw_moments(pts, d, mu, bw_);
        double f = std::pow(static_cast<double>(pts.size()), -1.0 / (static_cast<double>(d) + 4.0));
        for (auto& b : bw_)
        {
            b *= f;
            require(b > 0.0 && std::isfinite(b), ErrorKind::Estimation, "KDE bandwidth degenerate");
        }
        log_norm_ = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
        for (double b : bw_)
            log_norm_ -= std::log(b);
    }

    double operator()(Point const& x) const
    {
        LogSum s;
        for (auto const& p : pts_)
        {
            double q = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j)
            {
                double z = (x[j] - p[j]) / bw_[j];
                q += z * z;
            }
            s.add(-0.5 * q);
        }
        return std::exp(s.value() + log_norm_ - std::log(static_cast<double>(pts_.size())));
    }

  private:
    std::vector<Point> pts_;
    std::vector<double> bw_;
    double log_norm_ = 0.0;
};

}  // namespace detail

/// Estimates integral of exp(log_kernel(x)) F(dx), where log_kernel is
/// theta h-hat - psi for a component or the log mixture kernel.
inline NormConstResult estimate_norm_const(std::function<double(Point const&)> const& log_kernel,
                                           BlackBoxModel const& model, NormConstMethod method,
                                           NormConstInputs const& in, Rng& rng)
{
    std::size_t d = model.dim();
    NormConstResult res;
    res.method = method;
    auto lg = [&](Point const& x) {
        double lf = model.base_log_density(x);
        return lf == -kInf ? -kInf : log_kernel(x) + lf;
    };
    std::vector<double> mu, sd;
    detail::draw_moments(in.draws, d, mu, sd);
    if (in.draws.empty())
        for (std::size_t j = 0; j < d; ++j)
        {
            double lo = model.lower_bound(j), hi = model.upper_bound(j);
            if (std::isfinite(lo) && std::isfinite(hi))
            {
                mu[j] = 0.5 * (lo + hi);
                sd[j] = 0.25 * (hi - lo);
            }
            else if (std::isfinite(lo))
                mu[j] = lo + 1.0;
            else if (std::isfinite(hi))
                mu[j] = hi - 1.0;
        }

    switch (method)
    {
    case NormConstMethod::AdaptiveQuadrature: {
        require(d <= 2, ErrorKind::Method, "adaptive quadrature needs dimension <= 2");
        require(!model.atom_coordinate(), ErrorKind::Method, "adaptive quadrature does not handle atoms");
        double const tol = 1e-10;
        if (d == 1)
        {
            auto g1 = [&](double x) { return lg(Point{x}); };
            double lo = model.lower_bound(0), hi = model.upper_bound(0);
            double peak = detail::locate_peak(g1, mu[0], sd[0], lo, hi);
            double shift = g1(peak);
            res.value = std::exp(shift) * detail::integrate_split(g1, shift, peak, sd[0], lo, hi, tol);
        }
        else
        {
            double lo0 = model.lower_bound(0), hi0 = model.upper_bound(0);
            double lo1 = model.lower_bound(1), hi1 = model.upper_bound(1);
            // conditional centre of the second coordinate from the draws
            double slope = 0.0;
            if (in.draws.size() >= 2)
            {
                double cov = 0.0;
                for (auto const& p : in.draws)
                    cov += (p[0] - mu[0]) * (p[1] - mu[1]);
                cov /= static_cast<double>(in.draws.size() - 1);
                slope = cov / (sd[0] * sd[0]);
            }
            auto inner_peak = [&](double x0) {
                return detail::locate_peak([&](double x1) { return lg(Point{x0, x1}); },
                                           mu[1] + slope * (x0 - mu[0]), sd[1], lo1, hi1, 8);
            };
            // global peak by alternating coordinate searches
            double p0 = mu[0], p1 = mu[1];
            for (int it = 0; it < 4; ++it)
            {
                p1 = inner_peak(p0);
                p0 = detail::locate_peak([&](double x0) { return lg(Point{x0, p1}); }, p0, sd[0], lo0, hi0);
            }
            double shift = lg(Point{p0, p1});
            auto outer = [&](double x0) {
                double c1 = inner_peak(x0);
                auto g = [&](double x1) { return lg(Point{x0, x1}); };
                double v = detail::integrate_split(g, shift, c1, sd[1], lo1, hi1, 1e-9);
                return v > 0.0 ? std::log(v) + shift : -kInf;
            };
            res.value = std::exp(shift) * detail::integrate_split(outer, shift, p0, sd[0], lo0, hi0, 1e-9);
        }
        break;
    }
    case NormConstMethod::TrapezoidOnSamples: {
        require(d == 1, ErrorKind::Method, "the trapezoid rule on samples needs dimension 1");
        std::vector<double> g;
        for (auto const* src : {&in.draws, &in.grid})
            for (auto const& p : *src)
                g.push_back(p[0]);
        require(g.size() >= 2, ErrorKind::Method, "the trapezoid rule needs at least two grid points");
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        double s = 0.0;
        double prev = std::exp(lg(Point{g[0]}));
        for (std::size_t k = 1; k < g.size(); ++k)
        {
            double cur = std::exp(lg(Point{g[k]}));
            s += 0.5 * (prev + cur) * (g[k] - g[k - 1]);
            prev = cur;
        }
        res.value = s;
        break;
    }
    case NormConstMethod::KdeRatio: {
        require(!model.atom_coordinate(), ErrorKind::Method, "the KDE ratio does not handle atoms");
        require(in.draws.size() >= 2, ErrorKind::Method, "the KDE ratio needs drawn samples");
        detail::ProductKde kde(in.draws);
        std::size_t npts = std::min(in.kde_points, in.draws.size());
        std::size_t stride = in.draws.size() / npts;
        std::vector<double> r;
        for (std::size_t k = 0; k < npts; ++k)
        {
            auto const& x = in.draws[k * stride];
            double dens = kde(x);
            if (dens > 0.0)
                r.push_back(std::exp(lg(x)) / dens);
        }
        require(!r.empty(), ErrorKind::Estimation, "KDE vanishes at every evaluation point");
        if (in.kde_median)
        {
            auto mid = r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2);
            std::nth_element(r.begin(), mid, r.end());
            res.value = *mid;
        }
        else
        {
            res.value = mean(r);
            res.std_error = std::sqrt(variance(r) / static_cast<double>(r.size()));
        }
        break;
    }
    case NormConstMethod::MonteCarlo: {
        // defensive importance sampling: q = a F + (1-a) N(mu, (widen sd)^2)
        double a = in.draws.size() >= 2 ? in.defensive_mix : 1.0;
        std::vector<double> s(d);
        for (std::size_t j = 0; j < d; ++j)
            s[j] = in.widen * sd[j];
        auto atom = model.atom_coordinate();
        std::vector<double> vals;
        vals.reserve(in.mc_samples);
        for (std::size_t k = 0; k < in.mc_samples; ++k)
        {
            Point x;
            if (uniform01(rng) < a)
            {
                x = model.sample_base(rng);
            }
            else
            {
                x.resize(d);
                for (std::size_t j = 0; j < d; ++j)
                    x[j] = mu[j] + s[j] * standard_normal(rng);
            }
            double lf = model.base_log_density(x);
            if (lf == -kInf)
            {
                vals.push_back(0.0);
                continue;
            }
            double lgauss = -kInf;
            if (!(atom && x[*atom] == 0.0))
            {
                lgauss = 0.0;
                for (std::size_t j = 0; j < d; ++j)
                    lgauss += normal_log_pdf((x[j] - mu[j]) / s[j]) - std::log(s[j]);
            }
            LogSum lq;
            lq.add(std::log(a) + lf);
            if (a < 1.0)
                lq.add(std::log1p(-a) + lgauss);
            vals.push_back(std::exp(log_kernel(x) + lf - lq.value()));
        }
        res.value = mean(vals);
        res.std_error = std::sqrt(variance(vals) / static_cast<double>(vals.size()));
        break;
    }
    }
    require(res.value > 0.0 && std::isfinite(res.value), ErrorKind::Estimation,
            "normalizing constant estimate is not a positive finite number");
    return res;
}

inline NormConstResult estimate_norm_const(TiltComponent const& comp, Surrogate const& h, BlackBoxModel const& model,
                                           NormConstMethod method, NormConstInputs const& in, Rng& rng)
{
    return estimate_norm_const([&](Point const& x) { return comp.theta * h(x) - comp.psi; }, model, method, in, rng);
}

//---------------------------------------------------------------------------//
// Drawing from the mixture
//---------------------------------------------------------------------------//

enum class DrawStrategy
{
    Ancestral,  // level index with probability p_i, then the level's own chain
    Pooled,     // one chain on the mixture density
};

struct ChainDiagnostics
{
    int level = -1;  // -1 for the pooled chain
    std::size_t draws = 0;
    double acceptance = 0.0;
    std::vector<double> step_scale;
    bool low_acceptance = false;
};

struct MixturePoints
{
    std::vector<Point> points;
    std::vector<int> origin;
    std::vector<std::vector<Point>> pilot;  // per component, for normalizing constants
    std::vector<ChainDiagnostics> chains;
    std::vector<long long> counts;
};

struct DrawOptions
{
    DrawStrategy strategy = DrawStrategy::Ancestral;
    std::size_t pilot_min = 400;  // draws per component kept for its normalizing constant
};

/// Starting point for a chain: the pivot whose loss is closest to `target`.
inline Point closest_pivot(std::vector<Point> const& px, std::vector<double> const& py, double target)
{
    require(!px.empty(), ErrorKind::Sampling, "chain initialisation needs pivots");
    std::size_t best = 0;
    for (std::size_t j = 1; j < py.size(); ++j)
        if (std::abs(py[j] - target) < std::abs(py[best] - target))
            best = j;
    return px[best];
}

/// Samples N factor points from F* without calling h. Each component
/// chain runs on its own RNG stream derived from one draw of `rng`.
/// With pooled draws, `on_pilots` runs after the pilot chains and before
/// the mixture chain, which needs the normalizing constants.
inline MixturePoints sample_mixture_points(MixtureIS const& mix, BlackBoxModel const& model, std::size_t n,
                                           MhConfig const& cfg, Rng& rng, std::vector<Point> const& pivot_x,
                                           std::vector<double> const& pivot_y, DrawOptions const& opt = {},
                                           std::function<void(MixturePoints const&)> const& on_pilots = {})
{
    std::size_t k = mix.components.size();
    std::uint64_t base = rng();
    std::optional<AtomSpec> atom;
    if (auto a = model.atom_coordinate())
        atom = AtomSpec{*a};
    MhConfig c = cfg;
    if (c.step_scale.empty())
    {
        std::vector<double> mu, sd;
        detail::draw_moments(pivot_x, model.dim(), mu, sd);
        c.step_scale = sd;
        for (auto& s : c.step_scale)
            s *= 2.38 / std::sqrt(static_cast<double>(model.dim()));
    }

    MixturePoints out;
    out.pilot.resize(k);
    out.counts.assign(k, 0);
    {
        std::discrete_distribution<std::size_t> pick(mix.weights.begin(), mix.weights.end());
        for (std::size_t t = 0; t < n; ++t)
            ++out.counts[pick(rng)];
    }

    auto run_component = [&](std::size_t i, std::size_t want) {
        auto const& comp = mix.components[i];
        Rng r(derive_seed(base, i));
        auto target = [&](Point const& x) { return tilted_log_density_unnorm(comp, mix.surrogate, model, x); };
        auto res = mh_sample(target, closest_pivot(pivot_x, pivot_y, comp.target), want, c, r, atom);
        if (res.low_acceptance)
        {
            std::ostringstream os;
            os << "chain for level " << comp.level << " accepted only " << res.acceptance << " of proposals";
            fail(ErrorKind::Sampling, os.str());
        }
        out.chains.push_back({static_cast<int>(i), want, res.acceptance, res.step_scale, res.low_acceptance});
        return std::move(res.draws);
    };

    if (opt.strategy == DrawStrategy::Ancestral)
    {
        for (std::size_t i = 0; i < k; ++i)
        {
            auto cnt = static_cast<std::size_t>(out.counts[i]);
            if (mix.weights[i] == 0.0)
                continue;
            auto draws = run_component(i, std::max(cnt, opt.pilot_min));
            for (std::size_t t = 0; t < cnt; ++t)
            {
                out.points.push_back(draws[t]);
                out.origin.push_back(static_cast<int>(i));
            }
            out.pilot[i] = std::move(draws);
        }
    }
    else
    {
        for (std::size_t i = 0; i < k; ++i)
            if (mix.weights[i] > 0.0)
                out.pilot[i] = run_component(i, opt.pilot_min);
        if (on_pilots)
            on_pilots(out);
        Rng r(derive_seed(base, k + 1));
        double mid_target = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < k; ++i)
        {
            mid_target += mix.weights[i] * mix.components[i].target;
            wsum += mix.weights[i];
        }
        auto target = [&](Point const& x) { return mix.log_density_unnorm(model, x); };
        if (n > 0)
        {
            auto res = mh_sample(target, closest_pivot(pivot_x, pivot_y, mid_target / wsum), n, c, r, atom);
            require(!res.low_acceptance, ErrorKind::Sampling, "pooled mixture chain has acceptance below 1%");
            out.chains.push_back({-1, n, res.acceptance, res.step_scale, res.low_acceptance});
            out.points = std::move(res.draws);
            out.origin.assign(out.points.size(), -1);
        }
    }
    return out;
}

/// Sets every component's normalizing constant from its pilot draws.
inline std::vector<NormConstResult> calibrate_norm_consts(MixtureIS& mix, BlackBoxModel const& model,
                                                          MixturePoints const& pts, NormConstMethod method,
                                                          NormConstInputs base_inputs, Rng& rng)
{
    std::vector<NormConstResult> out(mix.components.size());
    for (std::size_t i = 0; i < mix.components.size(); ++i)
    {
        if (mix.weights[i] == 0.0)
        {
            out[i] = {1.0, 0.0, method};
            continue;
        }
        auto in = base_inputs;
        in.draws = pts.pilot[i];
        out[i] = with_context("normalizing constant at level " + std::to_string(mix.components[i].level), [&] {
            return estimate_norm_const(mix.components[i], mix.surrogate, model, method, in, rng);
        });
        mix.components[i].norm_const = out[i].value;
    }
    return out;
}

/// Evaluates h once per point and attaches dF/dF*.
inline std::vector<WeightedSample> weigh_points(MixtureIS const& mix, BlackBoxModel const& model,
                                                MixturePoints const& pts)
{
    std::vector<WeightedSample> out;
    out.reserve(pts.points.size());
    for (std::size_t t = 0; t < pts.points.size(); ++t)
    {
        WeightedSample s;
        s.x = pts.points[t];
        s.w = likelihood_ratio(mix, s.x);
        s.y = model.evaluate(s.x);
        s.origin = pts.origin[t];
        out.push_back(std::move(s));
    }
    return out;
}

/// N weighted draws from a calibrated mixture (normalizing constants set).
inline std::vector<WeightedSample> draw_mixture(MixtureIS const& mix, BlackBoxModel const& model, std::size_t n,
                                                MhConfig const& cfg, Rng& rng, std::vector<Point> const& pivot_x,
                                                std::vector<double> const& pivot_y, DrawOptions const& opt = {})
{
    mix.validate();
    auto pts = sample_mixture_points(mix, model, n, cfg, rng, pivot_x, pivot_y, opt);
    return weigh_points(mix, model, pts);
}

}  // namespace drmis
