#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include "tilt.hpp"

namespace drmis
{

struct AllocationPlan
{
    std::vector<double> coeffs;
    std::vector<double> weights;
    std::vector<long long> counts;
    bool uniform_fallback = false;
};

/// p_i = sqrt(c_i) / sum_j sqrt(c_j) and N_i = round(p_i N) by largest
/// remainder, so that sum N_i = N exactly.
inline AllocationPlan allocate(std::span<double const> coeffs, long long n)
{
    require(!coeffs.empty(), ErrorKind::Allocation, "allocation needs at least one coefficient");
    require(n >= 0, ErrorKind::Allocation, "sample budget must be non-negative");
    AllocationPlan plan;
    plan.coeffs.assign(coeffs.begin(), coeffs.end());
    std::size_t k = coeffs.size();
    double total = 0.0;
    for (double c : coeffs)
    {
        require(c >= 0.0 && std::isfinite(c), ErrorKind::Allocation, "allocation coefficients must be finite and >= 0");
        total += std::sqrt(c);
    }
    plan.weights.resize(k);
    if (total > 0.0)
    {
        for (std::size_t i = 0; i < k; ++i)
            plan.weights[i] = std::sqrt(coeffs[i]) / total;
    }
    else
    {
        plan.uniform_fallback = true;
        std::fill(plan.weights.begin(), plan.weights.end(), 1.0 / static_cast<double>(k));
    }

    plan.counts.resize(k);
    std::vector<double> frac(k);
    long long assigned = 0;
    for (std::size_t i = 0; i < k; ++i)
    {
        double exact = plan.weights[i] * static_cast<double>(n);
        plan.counts[i] = static_cast<long long>(std::floor(exact));
        frac[i] = exact - static_cast<double>(plan.counts[i]);
        assigned += plan.counts[i];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned)
        ++plan.counts[order[r % k]];
    return plan;
}

struct CoeffEstimate
{
    std::vector<double> coeffs;
    std::vector<double> aux_c;   // estimate of E_F[dF/dF_i 1{Y > aux_i}]
    std::vector<double> gprime;  // density of Y at aux_i
};

/// Allocation coefficients
///   c_i = (aux_c_i - t_i^2) / G'(aux_i) * dg_i
/// with aux_c_i = sum_j w_j exp(psi_i - theta_i y_j) 1{y_j > aux_i} / sum_j w_j
/// on (possibly weighted) pivots. t_i is the tail probability at aux_i.
/// Levels with dg_i = 0 get c_i = 0; the others are floored at 1e-12 max c.
inline CoeffEstimate estimate_coeffs(std::span<double const> y, std::span<double const> w,
                                     std::span<TiltComponent const> tilts, std::span<double const> tails,
                                     std::span<double const> dg, GaussianKde const& gprime)
{
    std::size_t k = tilts.size();
    require(tails.size() == k && dg.size() == k, ErrorKind::Allocation, "coefficient inputs differ in length");
    double wsum = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j)
        wsum += w.empty() ? 1.0 : w[j];
    require(wsum > 0.0, ErrorKind::Allocation, "pivot weights sum to zero");

    CoeffEstimate out;
    out.coeffs.assign(k, 0.0);
    out.aux_c.assign(k, 0.0);
    out.gprime.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
    {
        auto const& t = tilts[i];
        double s = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j)
            if (y[j] > t.target)
                s += (w.empty() ? 1.0 : w[j]) * std::exp(t.psi - t.theta * y[j]);
        out.aux_c[i] = s / wsum;
        out.gprime[i] = gprime(t.target);
        if (dg[i] == 0.0)
            continue;
        if (!(out.gprime[i] > 0.0))
        {
            std::ostringstream os;
            os << "density estimate vanishes at level " << t.level << " (quantile " << t.target << ")";
            fail(ErrorKind::Allocation, os.str());
        }
        out.coeffs[i] = (out.aux_c[i] - tails[i] * tails[i]) / out.gprime[i] * dg[i];
    }
    double cmax = 0.0;
    for (double c : out.coeffs)
        cmax = std::max(cmax, c);
    require(cmax > 0.0, ErrorKind::Allocation, "all allocation coefficients are non-positive");
    for (std::size_t i = 0; i < k; ++i)
        if (dg[i] != 0.0)
            out.coeffs[i] = std::max(out.coeffs[i], 1e-12 * cmax);
    return out;
}

enum class QuantileChoice
{
    Individual,
    Mixture,
};

/// Compares E_F[dF/dF_i 1{Y > q}] - a^2 with p_i (E_F[dF/dF* 1{Y > q}] - a^2),
/// each estimated by the mean of squared ratios over draws from its own law.
inline QuantileChoice compare_variances(double alpha, double q, std::span<double const> y_ind,
                                        std::span<double const> w_ind, std::span<double const> y_mix,
                                        std::span<double const> w_mix, double p)
{
    if (p == 0.0)
        return QuantileChoice::Individual;
    require(!y_ind.empty() && !y_mix.empty(), ErrorKind::Comparison, "variance comparison needs both samples");
    auto second = [q](std::span<double const> y, std::span<double const> w) {
        double s = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j)
            if (y[j] > q)
                s += w[j] * w[j];
        return s / static_cast<double>(y.size());
    };
    double ind = second(y_ind, w_ind) - alpha * alpha;
    double mix = p * (second(y_mix, w_mix) - alpha * alpha);
    require(std::isfinite(ind) && std::isfinite(mix), ErrorKind::Comparison, "variance comparison is not finite");
    return ind < mix ? QuantileChoice::Individual : QuantileChoice::Mixture;
}

}  // namespace drmis
