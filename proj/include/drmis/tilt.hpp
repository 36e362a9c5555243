#pragma once

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include "models.hpp"
#include "surrogate.hpp"

namespace drmis
{

namespace detail
{
inline double weight_at(std::span<double const> w, std::size_t j)
{
    return w.empty() ? 1.0 : w[j];
}

/// Tilted mean and variance of y under weights w * exp(theta y).
inline std::pair<double, double> tilted_moments(std::span<double const> y, std::span<double const> w, double theta)
{
    double hi = -kInf;
    for (std::size_t j = 0; j < y.size(); ++j)
        if (weight_at(w, j) > 0.0)
            hi = std::max(hi, theta * y[j] + std::log(weight_at(w, j)));
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j)
    {
        double wj = weight_at(w, j);
        if (wj <= 0.0)
            continue;
        double e = std::exp(theta * y[j] + std::log(wj) - hi);
        s0 += e;
        s1 += e * y[j];
        s2 += e * y[j] * y[j];
    }
    double m = s1 / s0;
    return {m, std::max(0.0, s2 / s0 - m * m)};
}
}  // namespace detail

/// sum_j w_j y_j e^{theta y_j} / sum_j w_j e^{theta y_j}; unit weights when w is empty.
inline double tilted_mean(std::span<double const> y, double theta, std::span<double const> w = {})
{
    require(!y.empty(), ErrorKind::Estimation, "tilted mean of an empty sample");
    return detail::tilted_moments(y, w, theta).first;
}

/// log( sum_j w_j e^{theta y_j} / sum_j w_j ).
inline double estimate_psi(std::span<double const> y, double theta, std::span<double const> w = {})
{
    require(!y.empty(), ErrorKind::Estimation, "psi of an empty sample");
    LogSum num, den;
    for (std::size_t j = 0; j < y.size(); ++j)
    {
        double wj = detail::weight_at(w, j);
        if (wj <= 0.0)
            continue;
        num.add(theta * y[j] + std::log(wj));
        den.add(std::log(wj));
    }
    return num.value() - den.value();
}

/// Root of tilted_mean(y, theta) = target. The tilted mean is increasing
/// in theta, so the root is unique when target lies strictly inside the
/// hull of the (positively weighted) pivots.
inline double calibrate_theta(std::span<double const> y, double target, std::span<double const> w = {})
{
    require(!y.empty(), ErrorKind::Estimation, "calibration needs pivot values");
    double lo_y = kInf, hi_y = -kInf;
    for (std::size_t j = 0; j < y.size(); ++j)
        if (detail::weight_at(w, j) > 0.0)
        {
            lo_y = std::min(lo_y, y[j]);
            hi_y = std::max(hi_y, y[j]);
        }
    double range = hi_y - lo_y;
    require(range > 0.0, ErrorKind::Degenerate, "pivot values are constant");
    if (!(target > lo_y && target < hi_y))
    {
        std::ostringstream os;
        os << "calibration target " << target << " outside the open pivot hull (" << lo_y << ", " << hi_y << ")";
        fail(ErrorKind::Boundary, os.str());
    }
    double tol = 1e-8 * range;
    double const theta_cap = 1e4 / range;

    auto resid = [&](double th) { return detail::tilted_moments(y, w, th).first - target; };
    double r0 = resid(0.0);
    if (std::abs(r0) < tol)
        return 0.0;
    double a = 0.0, b = 0.0;
    double step = 1.0 / range;
    if (r0 < 0.0)
    {
        b = step;
        while (resid(b) < 0.0)
        {
            a = b;
            b *= 2.0;
            require(b <= theta_cap, ErrorKind::Numeric, "tilt parameter hit its cap while bracketing");
        }
    }
    else
    {
        a = -step;
        while (resid(a) > 0.0)
        {
            b = a;
            a *= 2.0;
            require(-a <= theta_cap, ErrorKind::Numeric, "tilt parameter hit its cap while bracketing");
        }
    }
    // safeguarded Newton inside [a, b]
    double th = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it)
    {
        auto [m, v] = detail::tilted_moments(y, w, th);
        double r = m - target;
        if (std::abs(r) < tol)
            return th;
        (r < 0.0 ? a : b) = th;
        double next = v > 0.0 ? th - r / v : kNaN;
        if (!(next > a && next < b))
            next = 0.5 * (a + b);
        if (next == th)
            return th;
        th = next;
    }
    return th;
}

/// One calibrated exponential tilt exp(theta h-hat - psi) dF.
struct TiltComponent
{
    double level = kNaN;   // tail probability alpha_i
    double target = kNaN;  // pivot quantile the tilt is centred on
    double theta = 0.0;
    double psi = 0.0;
    double norm_const = 1.0;
};

/// log( exp(theta h-hat(x) - psi) f(x) ); h-hat is not called outside the support.
inline double tilted_log_density_unnorm(TiltComponent const& comp, Surrogate const& h, BlackBoxModel const& model,
                                        Point const& x)
{
    double lf = model.base_log_density(x);
    if (lf == -kInf)
        return -kInf;
    return comp.theta * h(x) - comp.psi + lf;
}

/// Magnitude bounds for positive and negative tilts.
struct TiltLimits
{
    double upper = kInf;
    double lower = kInf;

    double clamp(double theta) const { return theta >= 0.0 ? std::min(theta, upper) : -std::min(-theta, lower); }
};

/// Bounds on theta such that theta h-hat rises by at most (1 - kappa) times
/// the fall of log f along probe rays of `radius` scale units from `centre`.
/// A tilt beyond them typically has no normalizable density.
inline TiltLimits tilt_limits(Surrogate const& h, BlackBoxModel const& model, Point const& centre,
                              std::vector<double> const& scale, double kappa = 0.1, double radius = 32.0)
{
    require(kappa > 0.0 && kappa < 1.0, ErrorKind::Config, "tilt margin kappa must lie in (0,1)");
    require(radius > 0.0, ErrorKind::Config, "probe radius must be positive");
    std::size_t d = centre.size();
    std::vector<Point> dirs;
    for (std::size_t j = 0; j < d; ++j)
        for (double s : {1.0, -1.0})
        {
            Point v(d, 0.0);
            v[j] = s;
            dirs.push_back(v);
        }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = j + 1; k < d; ++k)
            for (double sj : {1.0, -1.0})
                for (double sk : {1.0, -1.0})
                {
                    Point v(d, 0.0);
                    v[j] = sj / std::sqrt(2.0);
                    v[k] = sk / std::sqrt(2.0);
                    dirs.push_back(v);
                }
    Rng rng(derive_seed(0x7117, d));
    for (int t = 0; t < 32; ++t)
    {
        Point v(d);
        double n2 = 0.0;
        for (auto& c : v)
        {
            c = standard_normal(rng);
            n2 += c * c;
        }
        for (auto& c : v)
            c /= std::sqrt(n2);
        dirs.push_back(v);
    }

    double lf0 = model.base_log_density(centre);
    require(std::isfinite(lf0), ErrorKind::Numeric, "tilt probe centre lies outside the support");
    double h0 = h(centre);
    TiltLimits out;
    for (auto const& v : dirs)
    {
        Point x(d);
        for (std::size_t j = 0; j < d; ++j)
            x[j] = centre[j] + radius * (scale[j] > 0.0 ? scale[j] : 1.0) * v[j];
        double lf = model.base_log_density(x);
        if (!std::isfinite(lf))
            continue;
        double dh = h(x) - h0;
        double drop = (1.0 - kappa) * (lf0 - lf);
        if (!std::isfinite(dh) || dh == 0.0)
            continue;
        double bound = std::max(0.0, drop) / std::abs(dh);
        (dh > 0.0 ? out.upper : out.lower) = std::min(dh > 0.0 ? out.upper : out.lower, bound);
    }
    return out;
}

/// Sampling law F* = sum_i p_i F_i with F_i = exp(theta_i h-hat - psi_i) dF / c_i.
struct MixtureIS
{
    std::vector<TiltComponent> components;
    std::vector<double> weights;
    Surrogate surrogate;

    void validate() const
    {
        require(components.size() == weights.size() && !weights.empty(), ErrorKind::Config,
                "mixture needs one weight per component");
        double s = 0.0;
        for (double p : weights)
        {
            require(p >= 0.0, ErrorKind::Config, "mixture weights must be non-negative");
            s += p;
        }
        require(std::abs(s - 1.0) < 1e-12 * static_cast<double>(weights.size()) + 1e-12, ErrorKind::Config,
                "mixture weights must sum to one");
        for (auto const& c : components)
            require(c.norm_const > 0.0 && std::isfinite(c.theta), ErrorKind::Config,
                    "mixture component is not calibrated");
    }

    /// log sum_i p_i exp(theta_i hv - psi_i) / c_i for a surrogate value hv.
    double log_kernel(double hv) const
    {
        LogSum s;
        for (std::size_t i = 0; i < components.size(); ++i)
            if (weights[i] > 0.0)
                s.add(std::log(weights[i] / components[i].norm_const) + components[i].theta * hv - components[i].psi);
        return s.value();
    }

    /// Log density of F* with respect to Lebesgue measure, up to the
    /// accuracy of the c_i.
    double log_density_unnorm(BlackBoxModel const& model, Point const& x) const
    {
        double lf = model.base_log_density(x);
        if (lf == -kInf)
            return -kInf;
        return log_kernel(surrogate(x)) + lf;
    }

    /// log dF/dF* at x.
    double log_likelihood_ratio(Point const& x) const
    {
        double lk = log_kernel(surrogate(x));
        require(std::isfinite(lk), ErrorKind::Ratio, "likelihood ratio denominator underflowed");
        return -lk;
    }
};

inline double likelihood_ratio(MixtureIS const& mix, Point const& x)
{
    double lr = mix.log_likelihood_ratio(x);
    double r = std::exp(lr);
    require(std::isfinite(r), ErrorKind::Ratio, "likelihood ratio overflowed");
    return r;
}

}  // namespace drmis
