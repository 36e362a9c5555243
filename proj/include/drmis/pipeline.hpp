#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "allocation.hpp"
#include "distortion.hpp"
#include "estimator.hpp"
#include "models.hpp"
#include "reference.hpp"
#include "sampler.hpp"
#include "surrogate.hpp"
#include "tilt.hpp"

namespace drmis
{

enum class QuantileOption
{
    Mixture,             // every level from the pooled sample
    PerLevelComparison,  // per level, the lower-variance of pooled and own-component sample
};

inline std::string to_string(QuantileOption o)
{
    return o == QuantileOption::Mixture ? "mixture" : "per_level";
}

inline QuantileOption parse_quantile_option(std::string const& s)
{
    if (s == "mixture" || s == "2")
        return QuantileOption::Mixture;
    if (s == "per_level" || s == "1")
        return QuantileOption::PerLevelComparison;
    fail(ErrorKind::Config, "unknown quantile option '" + s + "'");
}

struct PipelineConfig
{
    Distortion g = Distortion::average_value_at_risk(0.05);
    std::size_t M = 2000;
    std::size_t N = 20000;
    int m = 20;
    PartitionScheme scheme = PartitionScheme::UniformOnAlpha;
    QuantileTag tag = QuantileTag::RightEndpoint;
    bool top_level_cap = false;

    std::optional<HypothesisSpec> surrogate;  // fixed class, skips selection
    std::vector<HypothesisSpec> candidates;   // empty: staged search
    SearchOptions search;
    int k = 20;

    QuantileOption option = QuantileOption::Mixture;
    double tilt_kappa = 0.1;    // see tilt_limits
    double tilt_radius = 32.0;
    MhConfig mcmc;
    std::optional<NormConstMethod> norm_const;
    NormConstInputs nc;
    DrawOptions draw;
    std::uint64_t seed = 1;
    bool keep_samples = false;

    void validate() const
    {
        require(M >= 1 && N >= 1 && m >= 1, ErrorKind::Config, "M, N and m must be at least 1");
        require(k >= 2, ErrorKind::Config, "k-fold selection needs k >= 2");
        if (surrogate)
            surrogate->validate();
        for (auto const& c : candidates)
            c.validate();
        if (!surrogate)
            require(static_cast<std::size_t>(k) <= M, ErrorKind::Config, "k exceeds the pivot count");
        mcmc.validate();
        if (option == QuantileOption::PerLevelComparison)
            require(draw.strategy == DrawStrategy::Ancestral, ErrorKind::Config,
                    "per-level comparison needs ancestral draws");
    }
};

struct JensenRow
{
    double tail = kNaN;
    double second_moment = kNaN;  // mean of w^2 1{y > q} over the final sample
    double se = kNaN;
    double bound_i = kNaN;        // (1-u)^2
    double bound_ii = kNaN;       // (1-u)^2 / share of the sample above q
    double literal_ii = kNaN;     // 1 / share of the sample above q
    double aux_c = kNaN;          // pivot estimate for the level's own tilt
    double aux_c_se = kNaN;
};

struct DrmReport
{
    double estimate = kNaN;
    std::string arm;
    std::string model;
    std::string distortion;

    std::vector<double> tails;
    std::vector<double> levels;
    std::vector<double> quantiles;
    std::vector<double> variances;
    std::vector<double> dg;
    std::vector<std::string> choices;

    std::vector<TiltComponent> tilts;
    std::vector<int> clamped;
    std::vector<int> capped;
    AllocationPlan plan;
    std::vector<double> aux_c;
    std::vector<double> gprime;

    std::string surrogate;
    std::vector<CvRow> cv_table;
    bool ridge_fallback = false;

    std::string norm_method;
    std::vector<double> norm_se;
    std::vector<ChainDiagnostics> chains;

    long long pivot_calls = 0;
    long long is_calls = 0;
    long long ledger_calls = 0;   // planned budget
    long long counter_calls = 0;  // observed on the model
    std::vector<long long> stage_calls;

    double mean_weight = kNaN;
    double ess = kNaN;
    std::vector<JensenRow> jensen;
    std::vector<std::string> notes;
    std::vector<WeightedSample> samples;

    nlohmann::json to_json() const
    {
        using nlohmann::json;
        auto num = [](double v) -> json {
            if (std::isfinite(v))
                return v;
            return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
        };
        auto nums = [&](std::vector<double> const& v) {
            json a = json::array();
            for (double x : v)
                a.push_back(num(x));
            return a;
        };
        json j;
        j["arm"] = arm;
        j["model"] = model;
        j["distortion"] = distortion;
        j["estimate"] = num(estimate);
        j["tails"] = nums(tails);
        j["levels"] = nums(levels);
        j["quantiles"] = nums(quantiles);
        j["variances"] = nums(variances);
        j["dg"] = nums(dg);
        j["choices"] = choices;
        json tj = json::array();
        for (auto const& t : tilts)
            tj.push_back({{"tail", num(t.level)},
                          {"target", num(t.target)},
                          {"theta", num(t.theta)},
                          {"psi", num(t.psi)},
                          {"norm_const", num(t.norm_const)}});
        j["tilts"] = tj;
        j["clamped_levels"] = clamped;
        j["capped_levels"] = capped;
        j["allocation"] = {{"coeffs", nums(plan.coeffs)},
                           {"weights", nums(plan.weights)},
                           {"counts", plan.counts},
                           {"uniform_fallback", plan.uniform_fallback}};
        j["aux_c"] = nums(aux_c);
        j["gprime"] = nums(gprime);
        json cv = json::array();
        for (auto const& r : cv_table)
            cv.push_back({{"spec", r.spec.describe()}, {"cv_mse", num(r.cv_mse)}});
        j["surrogate"] = {{"winner", surrogate}, {"cv", cv}, {"ridge_fallback", ridge_fallback}};
        json ch = json::array();
        for (auto const& c : chains)
            ch.push_back({{"level", c.level},
                          {"draws", c.draws},
                          {"acceptance", num(c.acceptance)},
                          {"step_scale", nums(c.step_scale)},
                          {"low_acceptance", c.low_acceptance}});
        j["sampler"] = {{"chains", ch}, {"norm_method", norm_method}, {"norm_se", nums(norm_se)}};
        j["calls"] = {{"pivot", pivot_calls},
                      {"is", is_calls},
                      {"ledger", ledger_calls},
                      {"counter", counter_calls},
                      {"stages", stage_calls}};
        j["weights"] = {{"mean", num(mean_weight)}, {"ess", num(ess)}};
        json jr = json::array();
        for (auto const& r : jensen)
            jr.push_back({{"tail", num(r.tail)},
                          {"second_moment", num(r.second_moment)},
                          {"se", num(r.se)},
                          {"bound_i", num(r.bound_i)},
                          {"bound_ii", num(r.bound_ii)},
                          {"literal_ii", num(r.literal_ii)},
                          {"aux_c", num(r.aux_c)},
                          {"aux_c_se", num(r.aux_c_se)}});
        j["jensen"] = jr;
        j["notes"] = notes;
        return j;
    }
};

namespace detail
{

struct Pivots
{
    std::vector<Point> x;
    std::vector<double> y;
    std::vector<double> w;  // dF / d(law the point came from)

    TrainingSet training() const { return {x, y}; }

    std::vector<double> normalized_weights() const
    {
        double s = 0.0;
        for (double v : w)
            s += v;
        require(s > 0.0, ErrorKind::Estimation, "pivot weights sum to zero");
        std::vector<double> out(w.size());
        for (std::size_t j = 0; j < w.size(); ++j)
            out[j] = w[j] * static_cast<double>(w.size()) / s;
        return out;
    }

    bool constant() const
    {
        for (std::size_t j = 0; j < y.size(); ++j)
            if (w[j] > 0.0 && y[j] != y[0])
                return false;
        return true;
    }
};

inline void draw_base_pivots(BlackBoxModel const& model, std::size_t n, Rng& rng, Pivots& p)
{
    for (std::size_t j = 0; j < n; ++j)
    {
        auto x = model.sample_base(rng);
        p.y.push_back(model.evaluate(x));
        p.x.push_back(std::move(x));
        p.w.push_back(1.0);
    }
}

struct StageDesign
{
    Partition part;
    std::vector<double> tails;  // nominal t_i
    std::vector<double> dg;
    std::vector<int> clamped;
    std::vector<int> capped;
    CoeffEstimate coeffs;
    AllocationPlan plan;
    MixtureIS mix;
    std::vector<double> aux_c_se;
};

/// Calibrates one IS law from (weighted) pivots: a tilt per level, the
/// allocation coefficients and the weights p_i.
inline StageDesign design_stage(BlackBoxModel const& model, Pivots const& piv, Distortion const& g, PipelineConfig const& cfg, Surrogate h,
                                long long budget)
{
    auto part = make_partition(g, cfg.m, cfg.scheme, cfg.tag);
    StageDesign s{part, part.tail_probs(), part.increments(g), {}, {}, {}, {}, {}, {}};
    std::size_t k = s.tails.size();
    auto w = piv.normalized_weights();
    double wsum = static_cast<double>(w.size());

    if (piv.constant())
    {
        s.mix.components.assign(k, TiltComponent{});
        for (std::size_t i = 0; i < k; ++i)
        {
            s.mix.components[i].level = s.tails[i];
            s.mix.components[i].target = piv.y[0];
        }
        s.coeffs.coeffs.assign(k, 0.0);
        s.coeffs.aux_c = s.tails;
        s.coeffs.gprime.assign(k, kNaN);
        s.aux_c_se.assign(k, 0.0);
        s.plan = allocate(s.coeffs.coeffs, budget);
        s.mix.weights = s.plan.weights;
        s.mix.surrogate = std::move(h);
        return s;
    }

    std::vector<double> distinct;
    for (std::size_t j = 0; j < piv.y.size(); ++j)
        if (w[j] > 0.0)
            distinct.push_back(piv.y[j]);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    double ymin = distinct.front(), ymax = distinct.back();
    double below_max = distinct[distinct.size() - 2], above_min = distinct[1];
    if (distinct.size() == 2)
        below_max = above_min = 0.5 * (ymin + ymax);

    std::vector<double> centre, spread;
    draw_moments(piv.x, piv.x.front().size(), centre, spread);
    auto limits = tilt_limits(h, model, centre, spread, cfg.tilt_kappa, cfg.tilt_radius);

    WeightedQuantiles wq(piv.y, w);
    std::vector<double> eff_tails(k);
    std::vector<TiltComponent> comps(k);
    for (std::size_t i = 0; i < k; ++i)
    {
        double t = s.tails[i];
        double aux = wq.finite_at(1.0 - t) ? wq.quantile(1.0 - t) : ymin;
        bool clamp = false;
        if (aux >= ymax)
        {
            aux = below_max;
            clamp = true;
        }
        else if (aux <= ymin)
        {
            aux = above_min;
            clamp = true;
        }
        eff_tails[i] = t;
        if (clamp)
        {
            double above = 0.0;
            for (std::size_t j = 0; j < piv.y.size(); ++j)
                if (piv.y[j] > aux)
                    above += w[j];
            eff_tails[i] = above / wsum;
            s.clamped.push_back(static_cast<int>(i));
        }
        comps[i].level = t;
        comps[i].target = aux;
        with_context("tilt at level " + std::to_string(t), [&] {
            comps[i].theta = calibrate_theta(piv.y, aux, w);
            double th = limits.clamp(comps[i].theta);
            if (th != comps[i].theta)
            {
                comps[i].theta = th;
                s.capped.push_back(static_cast<int>(i));
            }
            comps[i].psi = estimate_psi(piv.y, comps[i].theta, w);
        });
    }

    GaussianKde kde(piv.y, w);
    s.coeffs = estimate_coeffs(piv.y, w, comps, eff_tails, s.dg, kde);
    s.aux_c_se.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
    {
        std::vector<double> terms(piv.y.size(), 0.0);
        for (std::size_t j = 0; j < piv.y.size(); ++j)
            if (piv.y[j] > comps[i].target)
                terms[j] = w[j] * std::exp(comps[i].psi - comps[i].theta * piv.y[j]);
        s.aux_c_se[i] = std::sqrt(variance(terms) / wsum);
    }
    s.plan = allocate(s.coeffs.coeffs, budget);
    s.mix = MixtureIS{std::move(comps), s.plan.weights, std::move(h)};
    return s;
}

struct StageDraw
{
    std::vector<WeightedSample> samples;
    MixturePoints points;
    std::vector<NormConstResult> norm;
};

inline StageDraw draw_stage(StageDesign& s, BlackBoxModel const& model, Pivots const& piv, std::size_t n,
                            PipelineConfig const& cfg, NormConstMethod method, std::uint64_t draw_seed,
                            std::uint64_t norm_seed)
{
    StageDraw out;
    Rng rd(draw_seed), rn(norm_seed);
    bool flat = std::all_of(s.mix.components.begin(), s.mix.components.end(),
                            [](auto const& c) { return c.theta == 0.0 && c.psi == 0.0; });
    auto calibrate = [&](MixturePoints const& pts) {
        if (flat)
            out.norm.assign(s.mix.components.size(), NormConstResult{1.0, 0.0, method});
        else
            out.norm = calibrate_norm_consts(s.mix, model, pts, method, cfg.nc, rn);
    };
    out.points = sample_mixture_points(s.mix, model, n, cfg.mcmc, rd, piv.x, piv.y, cfg.draw, calibrate);
    if (cfg.draw.strategy == DrawStrategy::Ancestral)
        calibrate(out.points);
    s.mix.validate();
    out.samples = weigh_points(s.mix, model, out.points);
    return out;
}

inline Distortion stage_distortion(Distortion const& g, double level)
{
    if (std::abs(level - g.tail_level()) <= 1e-15)
        return g;
    return g.with_tail_level(level);
}

inline void fill_weight_stats(DrmReport& r, std::vector<WeightedSample> const& s)
{
    std::vector<double> w(s.size());
    for (std::size_t j = 0; j < s.size(); ++j)
        w[j] = s[j].w;
    r.mean_weight = mean(w);
    r.ess = effective_sample_size(w);
}

}  // namespace detail

/// Algorithm with iterative pivots: stage_budgets[0] pivots from F, then
/// stage_budgets[k] pivots from the IS law built at stage_levels[k-1], and
/// finally cfg.N draws from the IS law at g's own level.
inline DrmReport estimate_drm_iterative(BlackBoxModel const& model, PipelineConfig const& cfg,
                                        std::vector<double> const& stage_levels,
                                        std::vector<std::size_t> const& stage_budgets)
{
    cfg.validate();
    std::size_t K = stage_levels.size();
    require(K >= 1 && stage_budgets.size() == K, ErrorKind::Config, "one budget per stage level is required");
    require(stage_budgets[0] >= 2, ErrorKind::Config, "the first stage needs at least two pivots");
    for (std::size_t s = 0; s < K; ++s)
    {
        require(stage_levels[s] > 0.0 && stage_levels[s] <= 1.0, ErrorKind::Config, "stage levels must lie in (0,1]");
        if (s > 0)
            require(stage_levels[s] <= stage_levels[s - 1], ErrorKind::Config, "stage levels must decrease");
    }
    require(std::abs(stage_levels.back() - cfg.g.tail_level()) <= 1e-12, ErrorKind::Config,
            "the last stage level must be the distortion's tail level");
    if (!cfg.surrogate)
        require(static_cast<std::size_t>(cfg.k) <= stage_budgets[0], ErrorKind::Config,
                "k exceeds the first-stage pivot count");

    DrmReport rep;
    rep.arm = K > 1 ? "iterative" : "is";
    rep.model = model.name();
    rep.distortion = cfg.g.describe();
    long long start = model.eval_count();
    NormConstMethod method = cfg.norm_const.value_or(default_norm_const_method(model));
    rep.norm_method = to_string(method);

    detail::Pivots piv;
    {
        Rng rp(derive_seed(cfg.seed, 1));
        detail::draw_base_pivots(model, stage_budgets[0], rp, piv);
    }
    rep.stage_calls.push_back(model.eval_count() - start);

    HypothesisSpec spec = HypothesisSpec::linear();
    if (piv.constant())
        rep.notes.push_back("pivot losses are constant; tilts are flat");
    else if (cfg.surrogate)
        spec = *cfg.surrogate;
    else
    {
        auto sel = with_context("surrogate selection", [&] {
            return cfg.candidates.empty() ? kfold_search(piv.training(), cfg.k, cfg.search)
                                          : kfold_select(cfg.candidates, piv.training(), cfg.k);
        });
        spec = sel.winner;
        rep.cv_table = std::move(sel.table);
    }
    if (spec.is_svm() && (!spec.epsilon || !spec.c_reg || !spec.sigma))
        rep.notes.push_back("svr hyperparameters use default heuristics");

    for (std::size_t s = 0; s + 1 < K; ++s)
    {
        std::size_t n = stage_budgets[s + 1];
        if (n == 0)
            continue;
        long long before = model.eval_count();
        auto h = with_context("surrogate fit", [&] { return fit(spec, piv.training()); });
        auto gs = detail::stage_distortion(cfg.g, stage_levels[s]);
        auto design = with_context("stage " + std::to_string(s + 1) + " design", [&] {
            return detail::design_stage(model, piv, gs, cfg, h, static_cast<long long>(n));
        });
        auto drawn = with_context("stage " + std::to_string(s + 1) + " draws", [&] {
            return detail::draw_stage(design, model, piv, n, cfg, method, derive_seed(cfg.seed, 100 + s),
                                      derive_seed(cfg.seed, 200 + s));
        });
        for (auto& smp : drawn.samples)
        {
            piv.x.push_back(std::move(smp.x));
            piv.y.push_back(smp.y);
            piv.w.push_back(smp.w);
        }
        rep.stage_calls.push_back(model.eval_count() - before);
    }
    rep.pivot_calls = model.eval_count() - start;

    auto h = with_context("surrogate fit", [&] { return fit(spec, piv.training()); });
    rep.surrogate = spec.describe();
    rep.ridge_fallback = h.ridge_fallback();
    auto design = with_context("final design", [&] {
        return detail::design_stage(model, piv, cfg.g, cfg, h, static_cast<long long>(cfg.N));
    });
    long long before = model.eval_count();
    auto drawn = with_context("final draws", [&] {
        return detail::draw_stage(design, model, piv, cfg.N, cfg, method, derive_seed(cfg.seed, 2),
                                  derive_seed(cfg.seed, 3));
    });
    rep.is_calls = model.eval_count() - before;
    rep.stage_calls.push_back(rep.is_calls);

    auto const& smp = drawn.samples;
    std::vector<double> y(smp.size()), w(smp.size());
    for (std::size_t j = 0; j < smp.size(); ++j)
    {
        y[j] = smp[j].y;
        w[j] = smp[j].w;
    }
    rep.tails = design.tails;
    rep.levels = quantile_levels(design.part, cfg.top_level_cap, static_cast<double>(cfg.N));
    rep.dg = design.dg;
    auto qs = is_quantiles(y, w, rep.levels);
    std::size_t k = rep.levels.size();
    rep.quantiles.resize(k);
    rep.variances.resize(k);
    rep.choices.assign(k, "mixture");
    for (std::size_t i = 0; i < k; ++i)
    {
        rep.quantiles[i] = qs[i].value;
        rep.variances[i] = qs[i].variance_est;
    }

    if (cfg.option == QuantileOption::PerLevelComparison && !piv.constant())
    {
        std::optional<GaussianKde> kde;
        try
        {
            kde.emplace(y, w);
        }
        catch (Error const&)
        {
        }
        for (std::size_t i = 0; i < k; ++i)
        {
            auto const& c = design.mix.components[i];
            std::vector<double> yi, wi;
            for (std::size_t j = 0; j < smp.size(); ++j)
                if (smp[j].origin == static_cast<int>(i))
                {
                    yi.push_back(smp[j].y);
                    wi.push_back(c.norm_const * std::exp(c.psi - c.theta * design.mix.surrogate(smp[j].x)));
                }
            if (yi.empty() || !qs[i].finite)
                continue;
            WeightedQuantiles wqi(yi, wi);
            if (!wqi.finite_at(rep.levels[i]))
                continue;
            double q_ind = wqi.quantile(rep.levels[i]);
            auto choice = with_context("variance comparison at level " + std::to_string(rep.tails[i]), [&] {
                return compare_variances(1.0 - rep.levels[i], qs[i].value, yi, wi, y, w, design.mix.weights[i]);
            });
            if (choice == QuantileChoice::Individual)
            {
                rep.choices[i] = "individual";
                rep.quantiles[i] = q_ind;
                double gp = kde ? (*kde)(q_ind) * mean(w) : 0.0;
                rep.variances[i] =
                    gp > 0.0 ? clt_variance(yi, wi, q_ind, rep.levels[i], gp) / static_cast<double>(yi.size()) : 0.0;
            }
        }
    }
    rep.estimate = drm_from_quantiles(rep.quantiles, cfg.g, design.part);

    rep.tilts = design.mix.components;
    rep.clamped = design.clamped;
    rep.capped = design.capped;
    rep.plan = design.plan;
    rep.aux_c = design.coeffs.aux_c;
    rep.gprime = design.coeffs.gprime;
    rep.chains = drawn.points.chains;
    for (auto const& r : drawn.norm)
        rep.norm_se.push_back(r.std_error);
    detail::fill_weight_stats(rep, smp);

    double nn = static_cast<double>(smp.size());
    for (std::size_t i = 0; i < k; ++i)
    {
        JensenRow jr;
        double a = 1.0 - rep.levels[i];
        jr.tail = a;
        std::vector<double> terms(smp.size(), 0.0);
        double above = 0.0;
        for (std::size_t j = 0; j < smp.size(); ++j)
            if (y[j] > qs[i].value)
            {
                terms[j] = w[j] * w[j];
                above += 1.0;
            }
        jr.second_moment = mean(terms);
        jr.se = std::sqrt(variance(terms) / nn);
        jr.bound_i = a * a;
        jr.bound_ii = above > 0.0 ? a * a / (above / nn) : kInf;
        jr.literal_ii = above > 0.0 ? 1.0 / (above / nn) : kInf;
        jr.aux_c = design.coeffs.aux_c[i];
        jr.aux_c_se = design.aux_c_se[i];
        rep.jensen.push_back(jr);
    }

    rep.counter_calls = model.eval_count() - start;
    for (auto b : stage_budgets)
        rep.ledger_calls += static_cast<long long>(b);
    rep.ledger_calls += static_cast<long long>(cfg.N);
    if (cfg.keep_samples)
        rep.samples = smp;
    return rep;
}

/// Single-stage algorithm: M pivots from F, then N draws from F*.
inline DrmReport estimate_drm(BlackBoxModel const& model, PipelineConfig const& cfg)
{
    auto rep = estimate_drm_iterative(model, cfg, {cfg.g.tail_level()}, {cfg.M});
    rep.arm = "is";
    return rep;
}

/// Baseline with M + N draws from F and empirical quantiles.
inline DrmReport crude_drm(BlackBoxModel const& model, PipelineConfig const& cfg)
{
    require(cfg.M + cfg.N >= 1, ErrorKind::Config, "crude estimate needs at least one draw");
    DrmReport rep;
    rep.arm = "crude";
    rep.model = model.name();
    rep.distortion = cfg.g.describe();
    long long start = model.eval_count();
    auto part = make_partition(cfg.g, cfg.m, cfg.scheme, cfg.tag);
    Rng rng(derive_seed(cfg.seed, 7));
    std::size_t n = cfg.M + cfg.N;
    std::vector<double> y(n);
    for (auto& v : y)
        v = model.evaluate(model.sample_base(rng));
    rep.tails = part.tail_probs();
    rep.levels = quantile_levels(part, cfg.top_level_cap, static_cast<double>(n));
    rep.dg = part.increments(cfg.g);
    rep.quantiles = crude_quantiles_inplace(y, rep.levels);
    rep.choices.assign(rep.levels.size(), "crude");
    rep.estimate = drm_from_quantiles(rep.quantiles, cfg.g, part);
    rep.pivot_calls = 0;
    rep.is_calls = static_cast<long long>(n);
    rep.ledger_calls = static_cast<long long>(n);
    rep.counter_calls = model.eval_count() - start;
    rep.stage_calls = {rep.counter_calls};
    rep.mean_weight = 1.0;
    rep.ess = static_cast<double>(n);
    return rep;
}

}  // namespace drmis
