#pragma once

#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "error.hpp"

namespace drmis
{

//---------------------------------------------------------------------------//
// Distortion functions
//---------------------------------------------------------------------------//

/// g(u) = (u/alpha)^gamma on [0, alpha], 1 above.
struct PowerTail
{
    double alpha;
    double gamma;
};

/// g(u) = 1{u > alpha}.
struct ValueAtRisk
{
    double alpha;
};

/// g(u) = u/alpha on [0, alpha], 1 above.
struct AverageValueAtRisk
{
    double alpha;
};

/// Piecewise-linear g through (u, g(u)) knots. Must contain (0,0) and (1,1).
struct Tabulated
{
    std::vector<std::pair<double, double>> knots;
};

class Distortion
{
  public:
    using Kind = std::variant<PowerTail, ValueAtRisk, AverageValueAtRisk, Tabulated>;

    explicit Distortion(Kind kind) : kind_(std::move(kind)) { validate(); }

    static Distortion power_tail(double alpha, double gamma) { return Distortion{PowerTail{alpha, gamma}}; }
    static Distortion value_at_risk(double alpha) { return Distortion{ValueAtRisk{alpha}}; }
    static Distortion average_value_at_risk(double alpha) { return Distortion{AverageValueAtRisk{alpha}}; }
    static Distortion tabulated(std::vector<std::pair<double, double>> knots)
    {
        return Distortion{Tabulated{std::move(knots)}};
    }

    Kind const& kind() const { return kind_; }

    double operator()(double u) const
    {
        require(u >= 0.0 && u <= 1.0 && !std::isnan(u), ErrorKind::Domain,
                "distortion argument must lie in [0,1]");
        return std::visit([u](auto const& k) { return eval(k, u); }, kind_);
    }

    /// The level alpha beyond which g is identically one. For tabulated
    /// distortions this is the first knot where g reaches 1.
    double tail_level() const
    {
        return std::visit(
            [](auto const& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Tabulated>)
                {
                    for (auto const& [u, gu] : k.knots)
                        if (gu >= 1.0)
                            return u;
                    return 1.0;
                }
                else
                {
                    return k.alpha;
                }
            },
            kind_);
    }

    /// Same family with alpha replaced. Tabulated distortions have no alpha.
    Distortion with_tail_level(double alpha) const
    {
        return std::visit(
            [alpha](auto k) -> Distortion {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Tabulated>)
                {
                    fail(ErrorKind::Config, "tabulated distortion has no tail level to replace");
                }
                else
                {
                    k.alpha = alpha;
                    return Distortion{k};
                }
            },
            kind_);
    }

    /// Generalized inverse inf{u : g(u) >= p}. Throws a configuration error
    /// when p is skipped by a jump of g.
    double inverse(double p) const
    {
        require(p >= 0.0 && p <= 1.0, ErrorKind::Domain, "inverse level must lie in [0,1]");
        if (p == 0.0)
            return 0.0;
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200 && hi - lo > 0.0; ++it)
        {
            double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi)
                break;
            if ((*this)(mid) >= p)
                hi = mid;
            else
                lo = mid;
        }
        if (std::abs((*this)(hi) - p) > 1e-9)
        {
            std::ostringstream os;
            os << "distortion " << describe() << " is not invertible at level " << p;
            fail(ErrorKind::Config, os.str());
        }
        return hi;
    }

    std::string describe() const
    {
        std::ostringstream os;
        std::visit(
            [&os](auto const& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, PowerTail>)
                    os << "power_tail(alpha=" << k.alpha << ", gamma=" << k.gamma << ")";
                else if constexpr (std::is_same_v<T, ValueAtRisk>)
                    os << "var(alpha=" << k.alpha << ")";
                else if constexpr (std::is_same_v<T, AverageValueAtRisk>)
                    os << "avar(alpha=" << k.alpha << ")";
                else
                    os << "tabulated(" << k.knots.size() << " knots)";
            },
            kind_);
        return os.str();
    }

    /// Exponent gamma for the power family (1 for AV@R); NaN otherwise.
    double gamma() const
    {
        if (auto const* p = std::get_if<PowerTail>(&kind_))
            return p->gamma;
        if (std::holds_alternative<AverageValueAtRisk>(kind_))
            return 1.0;
        return std::nan("");
    }

  private:
    static double eval(PowerTail const& k, double u)
    {
        return u <= k.alpha ? std::pow(u / k.alpha, k.gamma) : 1.0;
    }
    static double eval(ValueAtRisk const& k, double u) { return u > k.alpha ? 1.0 : 0.0; }
    static double eval(AverageValueAtRisk const& k, double u) { return u <= k.alpha ? u / k.alpha : 1.0; }
    static double eval(Tabulated const& k, double u)
    {
        auto const& kn = k.knots;
        // first knot with abscissa >= u
        std::size_t j = 1;
        while (j < kn.size() - 1 && kn[j].first < u)
            ++j;
        auto [u0, g0] = kn[j - 1];
        auto [u1, g1] = kn[j];
        if (u <= u0)
            return g0;
        return g0 + (g1 - g0) * (u - u0) / (u1 - u0);
    }

    void validate() const
    {
        std::visit(
            [this](auto const& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Tabulated>)
                {
                    auto const& kn = k.knots;
                    require(kn.size() >= 2, ErrorKind::Config, "tabulated distortion needs at least two knots");
                    require(kn.front() == std::pair{0.0, 0.0} && kn.back() == std::pair{1.0, 1.0},
                            ErrorKind::Config, "tabulated distortion must contain knots (0,0) and (1,1)");
                    for (std::size_t i = 1; i < kn.size(); ++i)
                        require(kn[i].first > kn[i - 1].first, ErrorKind::Config,
                                "tabulated knots must be strictly increasing in u");
                    for (int i = 1; i <= 1000; ++i)
                    {
                        double a = (*this)((i - 1) / 1000.0);
                        double b = (*this)(i / 1000.0);
                        require(b >= a && a >= 0.0 && b <= 1.0, ErrorKind::Config,
                                "tabulated distortion must be non-decreasing with values in [0,1]");
                    }
                }
                else
                {
                    require(k.alpha > 0.0 && k.alpha <= 1.0, ErrorKind::Config, "alpha must lie in (0,1]");
                    if constexpr (std::is_same_v<T, PowerTail>)
                        require(k.gamma > 0.0 && std::isfinite(k.gamma), ErrorKind::Config,
                                "gamma must be a positive real");
                }
            },
            kind_);
    }

    Kind kind_;
};

//---------------------------------------------------------------------------//
// Partitions
//---------------------------------------------------------------------------//

enum class PartitionScheme
{
    UniformOnAlpha,  // alpha_i = i * alpha / m
    InverseG,        // alpha_i = g^{-1}(i / (m+1))
};

/// Which quantile stands for the interval [alpha_i, alpha_{i+1}).
///
/// LeftEndpoint uses q(1 - alpha_i); at alpha_0 = 0 this is level 1 and the
/// estimators fall back to the sample maximum (or 1 - 1/n with a cap).
/// RightEndpoint uses q(1 - alpha_{i+1}) except on the last interval, which
/// keeps q(1 - alpha_m) so that a jump of g at alpha is still captured.
enum class QuantileTag
{
    LeftEndpoint,
    RightEndpoint,
};

class Partition
{
  public:
    Partition(std::vector<double> levels, PartitionScheme scheme, QuantileTag tag)
        : levels_(std::move(levels)), scheme_(scheme), tag_(tag)
    {
        require(levels_.size() >= 3, ErrorKind::Config, "partition needs m >= 1");
        require(levels_.front() >= 0.0, ErrorKind::Config, "partition must start at a level >= 0");
        require(levels_.back() == 1.0, ErrorKind::Config, "partition must end at 1");
        for (std::size_t i = 1; i < levels_.size(); ++i)
            require(levels_[i] > levels_[i - 1], ErrorKind::Config, "partition levels must be strictly increasing");
    }

    /// Number of intervals, m + 1.
    std::size_t size() const { return levels_.size() - 1; }
    std::size_t m() const { return levels_.size() - 2; }
    std::span<double const> levels() const { return levels_; }
    double level(std::size_t i) const { return levels_.at(i); }
    PartitionScheme scheme() const { return scheme_; }
    QuantileTag tag() const { return tag_; }

    /// Tail probability whose quantile q(1 - t) represents interval i.
    double tail_prob(std::size_t i) const
    {
        require(i < size(), ErrorKind::Domain, "partition interval index out of range");
        if (tag_ == QuantileTag::LeftEndpoint)
            return levels_[i];
        return levels_[std::min(i + 1, m())];
    }

    std::vector<double> tail_probs() const
    {
        std::vector<double> t(size());
        for (std::size_t i = 0; i < size(); ++i)
            t[i] = tail_prob(i);
        return t;
    }

    /// g(alpha_{i+1}) - g(alpha_i) for every interval.
    std::vector<double> increments(Distortion const& g) const
    {
        std::vector<double> gv(levels_.size());
        for (std::size_t i = 0; i < levels_.size(); ++i)
            gv[i] = g(levels_[i]);
        std::vector<double> d(size());
        for (std::size_t i = 0; i < size(); ++i)
            d[i] = gv[i + 1] - gv[i];
        return d;
    }

  private:
    std::vector<double> levels_;
    PartitionScheme scheme_;
    QuantileTag tag_;
};

inline Partition make_partition(Distortion const& g, int m, PartitionScheme scheme,
                                QuantileTag tag = QuantileTag::RightEndpoint)
{
    require(m >= 1, ErrorKind::Config, "partition size m must be >= 1");
    std::vector<double> levels(static_cast<std::size_t>(m) + 2);
    if (scheme == PartitionScheme::UniformOnAlpha)
    {
        double alpha = g.tail_level();
        require(alpha < 1.0, ErrorKind::Config, "UniformOnAlpha needs a tail level below 1; use InverseG");
        for (int i = 0; i <= m; ++i)
            levels[static_cast<std::size_t>(i)] = i * alpha / m;
    }
    else
    {
        for (int i = 0; i <= m; ++i)
            levels[static_cast<std::size_t>(i)] = g.inverse(static_cast<double>(i) / (m + 1));
    }
    levels.back() = 1.0;
    return Partition(std::move(levels), scheme, tag);
}

/// Discretized quantile-mixture estimator sum_i qhat_i (g(alpha_{i+1}) - g(alpha_i)).
inline double drm_from_quantiles(std::span<double const> qhat, Distortion const& g, Partition const& part)
{
    require(qhat.size() == part.size(), ErrorKind::Estimation, "one quantile per partition interval is required");
    auto dg = part.increments(g);
    double s = 0.0;
    for (std::size_t i = 0; i < qhat.size(); ++i)
    {
        if (!std::isfinite(qhat[i]))
        {
            std::ostringstream os;
            os << "non-finite quantile estimate at interval " << i << " (tail level " << part.tail_prob(i) << ")";
            fail(ErrorKind::Estimation, os.str());
        }
        s += qhat[i] * dg[i];
    }
    return s;
}

}  // namespace drmis
