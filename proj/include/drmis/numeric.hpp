#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "error.hpp"

namespace drmis
{

using Point = std::vector<double>;

/// Random engine used throughout. Streams are derived with derive_seed so
/// that replications are reproducible independent of scheduling.
using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept
{
    return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline double standard_normal(Rng& rng)
{
    return std::normal_distribution<double>{}(rng);
}

inline double uniform01(Rng& rng)
{
    return std::uniform_real_distribution<double>{}(rng);
}

//---------------------------------------------------------------------------//
// Log-space helpers
//---------------------------------------------------------------------------//

inline double log_sum_exp(std::span<double const> v)
{
    double hi = -kInf;
    for (double x : v)
        hi = std::max(hi, x);
    if (!std::isfinite(hi))
        return hi;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - hi);
    return hi + std::log(s);
}

/// Running log-sum-exp accumulator.
class LogSum
{
  public:
    void add(double log_term)
    {
        if (log_term == -kInf)
            return;
        if (log_term <= hi_)
        {
            sum_ += std::exp(log_term - hi_);
        }
        else
        {
            sum_ = sum_ * std::exp(hi_ - log_term) + 1.0;
            hi_ = log_term;
        }
    }
    double value() const { return sum_ > 0 ? hi_ + std::log(sum_) : -kInf; }

  private:
    double hi_ = -kInf;
    double sum_ = 0.0;
};

//---------------------------------------------------------------------------//
// Standard normal
//---------------------------------------------------------------------------//

inline double normal_log_pdf(double x)
{
    return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double normal_pdf(double x)
{
    return std::exp(normal_log_pdf(x));
}

inline double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double normal_quantile(double u)
{
    require(u > 0.0 && u < 1.0, ErrorKind::Domain, "normal quantile level must be in (0,1)");
    return boost::math::quantile(boost::math::normal_distribution<double>{}, u);
}

//---------------------------------------------------------------------------//
// Summary statistics
//---------------------------------------------------------------------------//

inline double mean(std::span<double const> v)
{
    double s = 0.0;
    for (double x : v)
        s += x;
    return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<double const> v)
{
    if (v.size() < 2)
        return 0.0;
    double mu = mean(v);
    double s = 0.0;
    for (double x : v)
        s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
}

/// Kish effective sample size (sum w)^2 / sum w^2.
inline double effective_sample_size(std::span<double const> w)
{
    double s = 0.0, s2 = 0.0;
    for (double x : w)
    {
        s += x;
        s2 += x * x;
    }
    return s2 > 0 ? s * s / s2 : 0.0;
}

//---------------------------------------------------------------------------//
// Kernel density estimation
//---------------------------------------------------------------------------//

/// One-dimensional Gaussian kernel density estimate with optional sample
/// weights and Silverman's rule-of-thumb bandwidth
/// h = 0.9 * min(sd, IQR / 1.34) * n_eff^(-1/5).
class GaussianKde
{
  public:
    GaussianKde() = default;

    explicit GaussianKde(std::span<double const> x, std::span<double const> w = {})
    {
        require(!x.empty(), ErrorKind::Estimation, "KDE needs at least one point");
        require(w.empty() || w.size() == x.size(), ErrorKind::Estimation, "KDE weight size mismatch");

        std::vector<std::size_t> order(x.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });

        x_.reserve(x.size());
        w_.reserve(x.size());
        double total = 0.0;
        for (auto i : order)
        {
            double wi = w.empty() ? 1.0 : w[i];
            require(wi >= 0 && std::isfinite(wi), ErrorKind::Estimation, "KDE weights must be finite and >= 0");
            if (wi == 0.0)
                continue;
            x_.push_back(x[i]);
            w_.push_back(wi);
            total += wi;
        }
        require(total > 0, ErrorKind::Estimation, "KDE total weight is zero");
        for (auto& wi : w_)
            wi /= total;

        double mu = 0.0;
        for (std::size_t i = 0; i < x_.size(); ++i)
            mu += w_[i] * x_[i];
        double var = 0.0;
        for (std::size_t i = 0; i < x_.size(); ++i)
            var += w_[i] * (x_[i] - mu) * (x_[i] - mu);
        double sd = std::sqrt(var);
        double iqr = weighted_sorted_quantile(0.75) - weighted_sorted_quantile(0.25);
        double spread = sd;
        if (iqr > 0)
            spread = std::min(sd, iqr / 1.34);
        double n_eff = effective_sample_size(w_);
        bandwidth_ = 0.9 * spread * std::pow(n_eff, -0.2);
        require(bandwidth_ > 0 && std::isfinite(bandwidth_), ErrorKind::Estimation,
                "KDE bandwidth degenerate (constant data)");
    }

    double bandwidth() const { return bandwidth_; }

    double operator()(double at) const
    {
        // Points further than 40 bandwidths contribute < exp(-800).
        double reach = 40.0 * bandwidth_;
        auto lo = std::lower_bound(x_.begin(), x_.end(), at - reach);
        auto hi = std::upper_bound(x_.begin(), x_.end(), at + reach);
        double s = 0.0;
        for (auto it = lo; it != hi; ++it)
        {
            double z = (at - *it) / bandwidth_;
            s += w_[static_cast<std::size_t>(it - x_.begin())] * std::exp(-0.5 * z * z);
        }
        return s / (bandwidth_ * std::sqrt(2.0 * std::numbers::pi));
    }

  private:
    double weighted_sorted_quantile(double p) const
    {
        double c = 0.0;
        for (std::size_t i = 0; i < x_.size(); ++i)
        {
            c += w_[i];
            if (c >= p)
                return x_[i];
        }
        return x_.back();
    }

    std::vector<double> x_;
    std::vector<double> w_;
    double bandwidth_ = 0.0;
};

}  // namespace drmis
