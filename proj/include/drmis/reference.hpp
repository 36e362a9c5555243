#pragma once

#include <optional>
#include <vector>

#include "distortion.hpp"
#include "estimator.hpp"
#include "models.hpp"

namespace drmis
{

/// Quantile levels 1 - t_i used by the discretized estimator.
inline std::vector<double> quantile_levels(Partition const& part, bool top_level_cap = false, double cap_n = 0.0)
{
    std::vector<double> u;
    for (double t : part.tail_probs())
    {
        double level = 1.0 - t;
        if (top_level_cap && level >= 1.0 && cap_n > 0.0)
            level = 1.0 - 1.0 / cap_n;
        u.push_back(level);
    }
    return u;
}

/// Discretized DRM from the exact quantile function, when the model has one
/// and every level lies in (0,1).
inline std::optional<double> analytic_drm(BlackBoxModel const& model, Distortion const& g, Partition const& part)
{
    std::vector<double> q;
    for (double u : quantile_levels(part))
    {
        if (!(u > 0.0 && u < 1.0))
            return std::nullopt;
        auto v = model.exact_quantile(u);
        if (!v)
            return std::nullopt;
        q.push_back(*v);
    }
    return drm_from_quantiles(q, g, part);
}

/// Crude Monte Carlo DRM with n base-law draws.
inline double reference_drm(BlackBoxModel const& model, Distortion const& g, Partition const& part, std::size_t n,
                            std::uint64_t seed)
{
    require(n >= 1, ErrorKind::Config, "reference needs at least one sample");
    Rng rng(derive_seed(seed, 0x5eed));
    std::vector<double> y(n);
    for (auto& v : y)
        v = model.evaluate(model.sample_base(rng));
    auto levels = quantile_levels(part, true, static_cast<double>(n));
    auto q = crude_quantiles_inplace(y, levels);
    return drm_from_quantiles(q, g, part);
}

/// Analytic value when available, else crude with n draws.
inline double reference_drm_auto(BlackBoxModel const& model, Distortion const& g, Partition const& part,
                                 std::size_t n, std::uint64_t seed, bool* analytic = nullptr)
{
    auto a = analytic_drm(model, g, part);
    if (analytic)
        *analytic = a.has_value();
    return a ? *a : reference_drm(model, g, part, n, seed);
}

}  // namespace drmis
