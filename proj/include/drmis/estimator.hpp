#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "numeric.hpp"

namespace drmis
{

inline constexpr int kCrudeOrigin = -1;

/// One draw under the sampling law F*: factor point, loss h(x) and the
/// likelihood ratio dF/dF* at x.
struct WeightedSample
{
    Point x;
    double y = kNaN;
    double w = 1.0;
    int origin = kCrudeOrigin;
};

struct QuantileEstimate
{
    double level = kNaN;
    double value = kNaN;
    double variance_est = 0.0;
    double n_effective = 0.0;
    bool finite = false;
};

/// Importance-sampling quantiles inf{x : (1/N) sum_{y_j > x} w_j <= 1 - u}
/// for many levels on one sorted sample. Equal y values form one block.
class WeightedQuantiles
{
  public:
    WeightedQuantiles(std::span<double const> y, std::span<double const> w) : n_(static_cast<double>(y.size()))
    {
        require(!y.empty(), ErrorKind::Estimation, "quantile of an empty sample");
        require(w.empty() || w.size() == y.size(), ErrorKind::Estimation, "weight/value size mismatch");
        std::vector<std::size_t> idx(y.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return y[a] > y[b]; });
        double above = 0.0;
        for (std::size_t k = 0; k < idx.size();)
        {
            double v = y[idx[k]];
            require(!std::isnan(v), ErrorKind::Estimation, "NaN loss value in quantile sample");
            values_.push_back(v);
            mass_above_.push_back(above);
            for (; k < idx.size() && y[idx[k]] == v; ++k)
            {
                double wk = w.empty() ? 1.0 : w[idx[k]];
                require(wk >= 0.0 && std::isfinite(wk), ErrorKind::Estimation, "weights must be finite and >= 0");
                above += wk;
            }
        }
        total_ = above;
    }

    double total_weight() const { return total_; }
    double size() const { return n_; }

    /// The weighted mass condition under which the estimate is finite.
    bool finite_at(double u) const { return total_ / n_ > 1.0 - u; }

    /// Returns -inf when the mass condition fails.
    double quantile(double u) const
    {
        require(u >= 0.0 && u <= 1.0, ErrorKind::Domain, "quantile level must lie in [0,1]");
        double target = (1.0 - u) * n_ + 1e-12 * n_;
        // last block whose mass strictly above it stays within the target
        auto it = std::upper_bound(mass_above_.begin(), mass_above_.end(), target);
        auto k = static_cast<std::size_t>(it - mass_above_.begin());
        if (k == mass_above_.size() && total_ <= target)
            return -kInf;
        return values_[k - 1];
    }

  private:
    std::vector<double> values_;      // distinct y, descending
    std::vector<double> mass_above_;  // sum of w with y strictly above values_[k]
    double total_ = 0.0;
    double n_;
};

/// Plug-in asymptotic variance (E_{F*}[w^2 1{y > q}] - (1-u)^2) / G'(q)^2, floored at 0.
/// This is the asymptotic variance of sqrt(N)(qhat - q).
inline double clt_variance(std::span<double const> y, std::span<double const> w, double qhat, double u,
                           double gprime_at_q)
{
    require(gprime_at_q > 0.0 && std::isfinite(gprime_at_q), ErrorKind::Estimation,
            "density at the quantile must be positive");
    require(!y.empty(), ErrorKind::Estimation, "variance of an empty sample");
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j)
        if (y[j] > qhat)
        {
            double wj = w.empty() ? 1.0 : w[j];
            s += wj * wj;
        }
    s /= static_cast<double>(y.size());
    double num = s - (1.0 - u) * (1.0 - u);
    return std::max(0.0, num) / (gprime_at_q * gprime_at_q);
}

inline double clt_variance(std::span<WeightedSample const> samples, double qhat, double u, double gprime_at_q)
{
    std::vector<double> y(samples.size()), w(samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j)
    {
        y[j] = samples[j].y;
        w[j] = samples[j].w;
    }
    return clt_variance(y, w, qhat, u, gprime_at_q);
}

/// Quantile estimates at several levels sharing one sort and one density
/// estimate of Y under F (weighted KDE of the sample).
inline std::vector<QuantileEstimate> is_quantiles(std::span<double const> y, std::span<double const> w,
                                                  std::span<double const> levels)
{
    WeightedQuantiles wq(y, w);
    double ess = w.empty() ? static_cast<double>(y.size()) : effective_sample_size(w);
    GaussianKde kde;
    bool have_kde = false;
    try
    {
        kde = GaussianKde(y, w);
        have_kde = true;
    }
    catch (Error const&)
    {
        // constant data: variance is reported as 0
    }
    std::vector<QuantileEstimate> out;
    out.reserve(levels.size());
    for (double u : levels)
    {
        QuantileEstimate q;
        q.level = u;
        q.value = wq.finite_at(u) ? wq.quantile(u) : -kInf;
        q.finite = std::isfinite(q.value);
        q.n_effective = ess;
        if (q.finite && have_kde)
        {
            // kde integrates to 1 over the weighted sample; rescale to F
            double gp = kde(q.value) * wq.total_weight() / wq.size();
            if (gp > 0.0)
                q.variance_est = clt_variance(y, w, q.value, u, gp) / wq.size();
        }
        out.push_back(q);
    }
    return out;
}

inline QuantileEstimate is_quantile(std::span<WeightedSample const> samples, double u)
{
    std::vector<double> y(samples.size()), w(samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j)
    {
        y[j] = samples[j].y;
        w[j] = samples[j].w;
    }
    double lv[] = {u};
    return is_quantiles(y, w, lv).front();
}

/// Empirical quantile inf{x : #{y > x}/n <= 1 - u}; sorts a copy.
inline double crude_quantile(std::span<double const> ys, double u)
{
    require(!ys.empty(), ErrorKind::Estimation, "crude quantile of an empty sample");
    require(u >= 0.0 && u <= 1.0, ErrorKind::Domain, "quantile level must lie in [0,1]");
    double n = static_cast<double>(ys.size());
    auto k = static_cast<std::size_t>(std::floor((1.0 - u) * n + 1e-12 * n)) + 1;  // k-th largest
    if (k > ys.size())
        return -kInf;
    std::vector<double> v(ys.begin(), ys.end());
    auto pos = v.begin() + static_cast<std::ptrdiff_t>(v.size() - k);
    std::nth_element(v.begin(), pos, v.end());
    return *pos;
}

/// Crude quantiles at several levels; sorts the input in place.
inline std::vector<double> crude_quantiles_inplace(std::vector<double>& ys, std::span<double const> levels)
{
    require(!ys.empty(), ErrorKind::Estimation, "crude quantile of an empty sample");
    std::sort(ys.begin(), ys.end());
    double n = static_cast<double>(ys.size());
    std::vector<double> out;
    out.reserve(levels.size());
    for (double u : levels)
    {
        auto k = static_cast<std::size_t>(std::floor((1.0 - u) * n + 1e-12 * n)) + 1;
        out.push_back(k > ys.size() ? -kInf : ys[ys.size() - k]);
    }
    return out;
}

}  // namespace drmis
