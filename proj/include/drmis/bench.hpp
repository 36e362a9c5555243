#pragma once

#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "pipeline.hpp"

namespace drmis
{

//---------------------------------------------------------------------------//
// Formatting helpers
//---------------------------------------------------------------------------//

inline std::string trim_copy(std::string const& s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline double parse_double(std::string const& s)
{
    std::string t = trim_copy(s);
    if (t == "nan")
        return kNaN;
    if (t == "inf")
        return kInf;
    if (t == "-inf")
        return -kInf;
    double v = 0.0;
    auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    require(ec == std::errc{} && end == t.data() + t.size(), ErrorKind::Config, "not a number: '" + s + "'");
    return v;
}

inline std::vector<std::string> split_list(std::string const& s, char sep = ',')
{
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, sep))
    {
        item = trim_copy(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Experiment configuration
//---------------------------------------------------------------------------//

enum class ReferenceSource
{
    Analytic,  // exact quantiles when the model has them, else crude
    Crude,
    Value,
    Arm,  // mean of one arm's estimates
};

struct ReferenceSpec
{
    ReferenceSource source = ReferenceSource::Analytic;
    std::size_t n = 10'000'000;
    double value = kNaN;
    std::string arm = "is";
    std::uint64_t seed = 0x5eed;
};

struct ExperimentConfig
{
    std::string name = "experiment";
    std::string model = "1";  // builtin id or "alm"
    AlmParams alm;
    std::vector<double> gammas{1.0};
    std::vector<double> alphas{0.05};
    PipelineConfig pipeline;
    std::vector<std::string> arms{"crude", "is"};
    std::vector<std::string> surrogates{"auto"};
    std::vector<double> iter_levels{0.01};
    std::vector<std::size_t> iter_budgets;  // empty: 2/3 and 1/3 of M
    std::size_t replications = 50;
    ReferenceSpec reference;
    std::string out = "out";
    std::uint64_t seed = 1;
    unsigned threads = 0;  // 0: hardware concurrency

    ModelPtr make_model() const
    {
        if (model == "alm")
            return alm_model(alm);
        int id = 0;
        auto [end, ec] = std::from_chars(model.data(), model.data() + model.size(), id);
        require(ec == std::errc{} && end == model.data() + model.size(), ErrorKind::Config,
                "model must be a builtin id or 'alm', got '" + model + "'");
        return builtin_model(id);
    }

    std::vector<std::size_t> stage_budgets() const
    {
        if (!iter_budgets.empty())
            return iter_budgets;
        std::size_t first = (2 * pipeline.M) / 3;
        return {first, pipeline.M - first};
    }

    void validate() const
    {
        require(replications >= 1, ErrorKind::Config, "replications must be at least 1");
        require(!gammas.empty() && !alphas.empty(), ErrorKind::Config, "need at least one (gamma, alpha) point");
        for (double a : alphas)
            require(a > 0.0 && a < 1.0, ErrorKind::Config, "alpha grid must lie in (0,1)");
        for (double g : gammas)
            require(g > 0.0, ErrorKind::Config, "gamma must be positive");
        require(!arms.empty(), ErrorKind::Config, "need at least one arm");
        for (auto const& a : arms)
            require(a == "crude" || a == "is" || a == "iterative", ErrorKind::Config, "unknown arm '" + a + "'");
        for (auto const& s : surrogates)
            if (s != "auto")
                parse_hypothesis(s).validate();
        if (std::find(arms.begin(), arms.end(), "iterative") != arms.end())
        {
            auto b = stage_budgets();
            require(b.size() == iter_levels.size() + 1, ErrorKind::Config,
                    "iterative budgets need one entry per intermediate level plus one");
            std::size_t total = 0;
            for (auto v : b)
                total += v;
            require(total == pipeline.M, ErrorKind::Config, "iterative budgets must sum to the pivot count M");
            for (double l : iter_levels)
                for (double a : alphas)
                    require(l > a, ErrorKind::Config, "intermediate levels must exceed every alpha");
        }
        if (reference.source == ReferenceSource::Value)
            require(std::isfinite(reference.value), ErrorKind::Config, "reference.value must be set");
        if (reference.source == ReferenceSource::Arm)
            require(std::find(arms.begin(), arms.end(), reference.arm) != arms.end(), ErrorKind::Config,
                    "reference arm is not among the arms");
        if (reference.source == ReferenceSource::Crude || reference.source == ReferenceSource::Analytic)
            require(reference.n >= 1, ErrorKind::Config, "reference.n must be positive");
        make_model();
    }

    /// Applies one dotted key. Unknown keys are config errors.
    void set(std::string const& key, std::string const& value)
    {
        auto& p = pipeline;
        auto size = [&]() -> std::uint64_t {
            std::uint64_t n = 0;
            auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
            if (ec == std::errc{} && end == value.data() + value.size())
                return n;
            double v = parse_double(value);  // accepts 1e7
            require(v >= 0 && v == std::floor(v) && v < 1.8e19, ErrorKind::Config,
                    key + " must be a non-negative integer");
            return static_cast<std::uint64_t>(v);
        };
        auto flag = [&] {
            if (value == "true" || value == "1" || value == "yes")
                return true;
            if (value == "false" || value == "0" || value == "no")
                return false;
            fail(ErrorKind::Config, key + " must be true or false");
        };
        auto doubles = [&] {
            std::vector<double> v;
            for (auto const& s : split_list(value))
                v.push_back(parse_double(s));
            return v;
        };

        if (key == "experiment.name")
            name = value;
        else if (key == "experiment.model")
            model = value;
        else if (key == "experiment.gammas")
            gammas = doubles();
        else if (key == "experiment.alphas")
            alphas = doubles();
        else if (key == "experiment.replications")
            replications = size();
        else if (key == "experiment.arms")
            arms = split_list(value);
        else if (key == "experiment.surrogates")
            surrogates = split_list(value);
        else if (key == "experiment.seed")
            seed = size();
        else if (key == "experiment.threads")
            threads = static_cast<unsigned>(size());
        else if (key == "experiment.out")
            out = value;
        else if (key == "reference.source")
        {
            if (value == "analytic")
                reference.source = ReferenceSource::Analytic;
            else if (value == "crude")
                reference.source = ReferenceSource::Crude;
            else if (value == "value")
                reference.source = ReferenceSource::Value;
            else if (value == "arm")
                reference.source = ReferenceSource::Arm;
            else
                fail(ErrorKind::Config, "reference.source must be analytic, crude, value or arm");
        }
        else if (key == "reference.n")
            reference.n = size();
        else if (key == "reference.value")
            reference.value = parse_double(value);
        else if (key == "reference.arm")
            reference.arm = value;
        else if (key == "reference.seed")
            reference.seed = size();
        else if (key == "pipeline.M")
            p.M = size();
        else if (key == "pipeline.N")
            p.N = size();
        else if (key == "pipeline.m")
            p.m = static_cast<int>(size());
        else if (key == "pipeline.k")
            p.k = static_cast<int>(size());
        else if (key == "pipeline.scheme")
        {
            if (value == "uniform")
                p.scheme = PartitionScheme::UniformOnAlpha;
            else if (value == "inverse_g")
                p.scheme = PartitionScheme::InverseG;
            else
                fail(ErrorKind::Config, "pipeline.scheme must be uniform or inverse_g");
        }
        else if (key == "pipeline.tag")
        {
            if (value == "right")
                p.tag = QuantileTag::RightEndpoint;
            else if (value == "left")
                p.tag = QuantileTag::LeftEndpoint;
            else
                fail(ErrorKind::Config, "pipeline.tag must be right or left");
        }
        else if (key == "pipeline.top_level_cap")
            p.top_level_cap = flag();
        else if (key == "pipeline.option")
            p.option = parse_quantile_option(value);
        else if (key == "pipeline.candidates")
        {
            p.candidates.clear();
            for (auto const& s : split_list(value))
                p.candidates.push_back(parse_hypothesis(s));
        }
        else if (key == "pipeline.search.linear")
            p.search.linear = flag();
        else if (key == "pipeline.search.svm")
            p.search.svm = flag();
        else if (key == "pipeline.search.max_poly_degree")
            p.search.max_poly_degree = static_cast<int>(size());
        else if (key == "pipeline.search.max_svm_poly_degree")
            p.search.max_svm_poly_degree = static_cast<int>(size());
        else if (key == "pipeline.search.max_knn")
            p.search.max_knn = static_cast<int>(size());
        else if (key == "pipeline.norm_const")
        {
            if (value == "auto")
                p.norm_const.reset();
            else
                p.norm_const = parse_norm_const_method(value);
        }
        else if (key == "pipeline.draw")
        {
            if (value == "ancestral")
                p.draw.strategy = DrawStrategy::Ancestral;
            else if (value == "pooled")
                p.draw.strategy = DrawStrategy::Pooled;
            else
                fail(ErrorKind::Config, "pipeline.draw must be ancestral or pooled");
        }
        else if (key == "pipeline.pilot_min")
            p.draw.pilot_min = size();
        else if (key == "pipeline.tilt_kappa")
            p.tilt_kappa = parse_double(value);
        else if (key == "pipeline.tilt_radius")
            p.tilt_radius = parse_double(value);
        else if (key == "mcmc.burn_in")
            p.mcmc.burn_in = static_cast<int>(size());
        else if (key == "mcmc.thinning")
            p.mcmc.thinning = static_cast<int>(size());
        else if (key == "mcmc.target_accept")
            p.mcmc.target_accept = parse_double(value);
        else if (key == "mcmc.atom_jump_prob")
            p.mcmc.atom_jump_prob = parse_double(value);
        else if (key == "norm.mc_samples")
            p.nc.mc_samples = size();
        else if (key == "norm.kde_points")
            p.nc.kde_points = size();
        else if (key == "norm.kde_median")
            p.nc.kde_median = flag();
        else if (key == "iterative.levels")
            iter_levels = doubles();
        else if (key == "iterative.budgets")
        {
            iter_budgets.clear();
            for (double v : doubles())
            {
                require(v >= 0 && v == std::floor(v), ErrorKind::Config, "iterative budgets must be integers");
                iter_budgets.push_back(static_cast<std::size_t>(v));
            }
        }
        else if (key == "alm.E0")
            alm.E0 = parse_double(value);
        else if (key == "alm.mu")
            alm.mu = parse_double(value);
        else if (key == "alm.sigma")
            alm.sigma = parse_double(value);
        else if (key == "alm.dt")
            alm.dt = parse_double(value);
        else if (key == "alm.b")
            alm.b = parse_double(value);
        else if (key == "alm.lambda")
            alm.lambda = parse_double(value);
        else if (key == "alm.theta_prime")
            alm.theta_prime = parse_double(value);
        else if (key == "alm.premium_loading")
            alm.premium_loading = parse_double(value);
        else if (key == "alm.reserve_loading")
            alm.reserve_loading = parse_double(value);
        else
            fail(ErrorKind::Config, "unknown config key '" + key + "'");
    }
};

/// Reads `key = value` lines; '#' starts a comment. Keys are dotted.
inline ExperimentConfig parse_experiment(std::istream& in, ExperimentConfig cfg = {})
{
    std::string line;
    int lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos)
            line.erase(h);
        line = trim_copy(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::Config,
                "line " + std::to_string(lineno) + ": expected key = value");
        auto key = trim_copy(line.substr(0, eq));
        auto value = trim_copy(line.substr(eq + 1));
        with_context("line " + std::to_string(lineno), [&] { cfg.set(key, value); });
    }
    return cfg;
}

inline ExperimentConfig load_experiment(std::string const& path, ExperimentConfig cfg = {})
{
    std::ifstream in(path);
    require(in.good(), ErrorKind::Config, "cannot read config file '" + path + "'");
    return parse_experiment(in, std::move(cfg));
}

//---------------------------------------------------------------------------//
// Running
//---------------------------------------------------------------------------//

struct SummaryRow
{
    std::string model;
    double gamma = kNaN;
    double alpha = kNaN;
    std::string arm;
    std::string surrogate;
    double mean = kNaN;
    double rmse = kNaN;
    double ratio = kNaN;
    double h_calls = kNaN;
    double wall_time_s = kNaN;

    bool operator==(SummaryRow const& o) const
    {
        auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
        return model == o.model && same(gamma, o.gamma) && same(alpha, o.alpha) && arm == o.arm &&
               surrogate == o.surrogate && same(mean, o.mean) && same(rmse, o.rmse) && same(ratio, o.ratio) &&
               same(h_calls, o.h_calls) && same(wall_time_s, o.wall_time_s);
    }
};

struct ArmResult
{
    std::string model;
    double gamma = kNaN;
    double alpha = kNaN;
    std::string arm;
    std::string surrogate;  // "-" for crude
    double reference = kNaN;
    std::vector<double> estimates;  // successful replications, in seed order
    std::vector<std::size_t> replication;
    std::vector<double> wall_s;
    std::vector<long long> h_calls;
    std::vector<std::string> failures;
};

struct ExperimentReport
{
    std::string name;
    std::vector<ArmResult> arms;
    std::vector<SummaryRow> rows;
    double total_wall_s = 0.0;
    unsigned threads = 1;
};

inline double rmse_of(std::vector<double> const& est, double ref)
{
    if (est.empty())
        return kNaN;
    double s = 0.0;
    for (double e : est)
        s += (e - ref) * (e - ref);
    return std::sqrt(s / static_cast<double>(est.size()));
}

/// One replication of one arm at one distortion point.
inline DrmReport run_arm(BlackBoxModel const& model, ExperimentConfig const& cfg, Distortion const& g,
                         std::string const& arm, std::string const& surrogate, std::uint64_t seed)
{
    PipelineConfig p = cfg.pipeline;
    p.g = g;
    p.seed = seed;
    if (surrogate == "auto" || surrogate == "-")
        p.surrogate.reset();
    else
        p.surrogate = parse_hypothesis(surrogate);
    if (arm == "crude")
        return crude_drm(model, p);
    if (arm == "is")
        return estimate_drm(model, p);
    auto levels = cfg.iter_levels;
    levels.push_back(g.tail_level());
    return estimate_drm_iterative(model, p, levels, cfg.stage_budgets());
}

namespace detail
{
/// Reference values for all points from one shared crude sample.
inline std::vector<double> crude_references(BlackBoxModel const& model, std::vector<Distortion> const& gs,
                                            ExperimentConfig const& cfg)
{
    std::vector<Partition> parts;
    std::vector<double> all;
    for (auto const& g : gs)
    {
        parts.push_back(make_partition(g, cfg.pipeline.m, cfg.pipeline.scheme, cfg.pipeline.tag));
        auto lv = quantile_levels(parts.back(), true, static_cast<double>(cfg.reference.n));
        all.insert(all.end(), lv.begin(), lv.end());
    }
    Rng rng(derive_seed(cfg.reference.seed, 0x5eed));
    std::vector<double> y(cfg.reference.n);
    for (auto& v : y)
        v = model.evaluate(model.sample_base(rng));
    auto q = crude_quantiles_inplace(y, all);
    std::vector<double> out;
    std::size_t at = 0;
    for (std::size_t i = 0; i < gs.size(); ++i)
    {
        std::size_t k = parts[i].tail_probs().size();
        std::vector<double> qi(q.begin() + static_cast<std::ptrdiff_t>(at),
                               q.begin() + static_cast<std::ptrdiff_t>(at + k));
        out.push_back(drm_from_quantiles(qi, gs[i], parts[i]));
        at += k;
    }
    return out;
}

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body)
{
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < n; t = next++)
            body(t);
    };
    if (threads == 1)
    {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k)
        pool.emplace_back(worker);
    for (auto& th : pool)
        th.join();
}
}  // namespace detail

/// R replications per (point, arm, surrogate) with seed_r = derive_seed(master, r).
/// The same seed_r is used by every arm of a replication.
inline ExperimentReport run_experiment(ExperimentConfig const& cfg)
{
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    ExperimentReport rep;
    rep.name = cfg.name;
    rep.threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());

    auto probe = cfg.make_model();
    std::vector<Distortion> gs;
    struct PointRef
    {
        double gamma, alpha;
    };
    std::vector<PointRef> pts;
    for (double a : cfg.alphas)
        for (double gm : cfg.gammas)
        {
            gs.push_back(Distortion::power_tail(a, gm));
            pts.push_back({gm, a});
        }

    std::vector<double> refs(gs.size(), kNaN);
    switch (cfg.reference.source)
    {
    case ReferenceSource::Value: std::fill(refs.begin(), refs.end(), cfg.reference.value); break;
    case ReferenceSource::Arm: break;
    case ReferenceSource::Analytic: {
        bool all = true;
        for (std::size_t i = 0; i < gs.size(); ++i)
        {
            auto part = make_partition(gs[i], cfg.pipeline.m, cfg.pipeline.scheme, cfg.pipeline.tag);
            auto a = analytic_drm(*probe, gs[i], part);
            all = all && a.has_value();
            refs[i] = a.value_or(kNaN);
        }
        if (!all)
            refs = detail::crude_references(*probe, gs, cfg);
        break;
    }
    case ReferenceSource::Crude: refs = detail::crude_references(*probe, gs, cfg); break;
    }

    for (std::size_t i = 0; i < gs.size(); ++i)
        for (auto const& arm : cfg.arms)
        {
            auto surs = arm == "crude" ? std::vector<std::string>{"-"} : cfg.surrogates;
            for (auto const& s : surs)
            {
                ArmResult a;
                a.model = probe->name();
                a.gamma = pts[i].gamma;
                a.alpha = pts[i].alpha;
                a.arm = arm;
                a.surrogate = s;
                a.reference = refs[i];
                rep.arms.push_back(std::move(a));
            }
        }

    struct Outcome
    {
        bool ok = false;
        double estimate = kNaN;
        double wall = 0.0;
        long long calls = 0;
        std::string error;
    };
    std::size_t R = cfg.replications;
    std::vector<Outcome> outcomes(rep.arms.size() * R);
    detail::parallel_for(outcomes.size(), rep.threads, [&](std::size_t t) {
        auto const& a = rep.arms[t / R];
        std::size_t r = t % R;
        auto& o = outcomes[t];
        auto start = std::chrono::steady_clock::now();
        try
        {
            auto model = cfg.make_model();
            auto g = Distortion::power_tail(a.alpha, a.gamma);
            auto d = run_arm(*model, cfg, g, a.arm, a.surrogate, derive_seed(cfg.seed, r));
            o.estimate = d.estimate;
            o.calls = d.counter_calls;
            o.ok = std::isfinite(d.estimate);
            if (!o.ok)
                o.error = "non-finite estimate";
        }
        catch (std::exception const& e)
        {
            o.error = e.what();
        }
        o.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });

    for (std::size_t ai = 0; ai < rep.arms.size(); ++ai)
    {
        auto& a = rep.arms[ai];
        for (std::size_t r = 0; r < R; ++r)
        {
            auto const& o = outcomes[ai * R + r];
            a.wall_s.push_back(o.wall);
            if (o.ok)
            {
                a.estimates.push_back(o.estimate);
                a.replication.push_back(r);
                a.h_calls.push_back(o.calls);
            }
            else
                a.failures.push_back("replication " + std::to_string(r) + ": " + o.error);
        }
        if (10 * a.failures.size() > R)
        {
            std::ostringstream os;
            os << a.failures.size() << " of " << R << " replications failed for arm " << a.arm << " ("
               << a.surrogate << ") at gamma " << a.gamma << ", alpha " << a.alpha << "; first: " << a.failures[0];
            fail(ErrorKind::Estimation, os.str());
        }
    }

    if (cfg.reference.source == ReferenceSource::Arm)
        for (std::size_t ai = 0; ai < rep.arms.size(); ++ai)
        {
            auto it = std::find_if(rep.arms.begin(), rep.arms.end(), [&](auto const& b) {
                return b.arm == cfg.reference.arm && b.gamma == rep.arms[ai].gamma && b.alpha == rep.arms[ai].alpha;
            });
            rep.arms[ai].reference = mean(it->estimates);
        }

    for (auto const& a : rep.arms)
    {
        SummaryRow row;
        row.model = a.model;
        row.gamma = a.gamma;
        row.alpha = a.alpha;
        row.arm = a.arm;
        row.surrogate = a.surrogate;
        row.mean = a.estimates.empty() ? kNaN : mean(a.estimates);
        row.rmse = rmse_of(a.estimates, a.reference);
        double calls = 0.0;
        for (auto c : a.h_calls)
            calls += static_cast<double>(c);
        row.h_calls = a.h_calls.empty() ? kNaN : calls / static_cast<double>(a.h_calls.size());
        row.wall_time_s = 0.0;
        for (double w : a.wall_s)
            row.wall_time_s += w;
        auto crude = std::find_if(rep.arms.begin(), rep.arms.end(), [&](auto const& b) {
            return b.arm == "crude" && b.gamma == a.gamma && b.alpha == a.alpha;
        });
        if (crude != rep.arms.end())
        {
            double rc = rmse_of(crude->estimates, crude->reference);
            row.ratio = row.rmse > 0.0 ? rc / row.rmse : kInf;
        }
        rep.rows.push_back(row);
    }
    rep.total_wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// Concatenates reports of several experiments (one per model).
inline ExperimentReport merge_reports(std::string name, std::vector<ExperimentReport> const& parts)
{
    ExperimentReport out;
    out.name = std::move(name);
    for (auto const& p : parts)
    {
        out.arms.insert(out.arms.end(), p.arms.begin(), p.arms.end());
        out.rows.insert(out.rows.end(), p.rows.begin(), p.rows.end());
        out.total_wall_s += p.total_wall_s;
        out.threads = p.threads;
    }
    return out;
}

//---------------------------------------------------------------------------//
// Tables
//---------------------------------------------------------------------------//

inline char const* const kSummaryHeader = "model,gamma,alpha,arm,surrogate,mean,rmse,ratio,h_calls,wall_time_s";

inline void write_summary_csv(std::ostream& os, std::vector<SummaryRow> const& rows)
{
    os << kSummaryHeader << '\n';
    for (auto const& r : rows)
        os << r.model << ',' << format_double(r.gamma) << ',' << format_double(r.alpha) << ',' << r.arm << ','
           << r.surrogate << ',' << format_double(r.mean) << ',' << format_double(r.rmse) << ','
           << format_double(r.ratio) << ',' << format_double(r.h_calls) << ',' << format_double(r.wall_time_s)
           << '\n';
}

inline std::vector<SummaryRow> read_summary_csv(std::istream& in)
{
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == kSummaryHeader, ErrorKind::Io,
            "summary CSV header mismatch");
    std::vector<SummaryRow> rows;
    while (std::getline(in, line))
    {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        require(f.size() == 10, ErrorKind::Io, "summary CSV row has " + std::to_string(f.size()) + " fields");
        rows.push_back({f[0], parse_double(f[1]), parse_double(f[2]), f[3], f[4], parse_double(f[5]),
                        parse_double(f[6]), parse_double(f[7]), parse_double(f[8]), parse_double(f[9])});
    }
    return rows;
}

/// alpha-indexed crude/IS ratios, one series per (model, gamma, arm, surrogate).
inline void write_ratio_curve_csv(std::ostream& os, std::vector<SummaryRow> const& rows)
{
    os << "model,gamma,arm,surrogate,alpha,ratio\n";
    std::vector<SummaryRow> r;
    for (auto const& x : rows)
        if (x.arm != "crude")
            r.push_back(x);
    std::stable_sort(r.begin(), r.end(), [](auto const& a, auto const& b) {
        return std::tie(a.model, a.gamma, a.arm, a.surrogate, a.alpha) <
               std::tie(b.model, b.gamma, b.arm, b.surrogate, b.alpha);
    });
    for (auto const& x : r)
        os << x.model << ',' << format_double(x.gamma) << ',' << x.arm << ',' << x.surrogate << ','
           << format_double(x.alpha) << ',' << format_double(x.ratio) << '\n';
}

inline nlohmann::json report_json(ExperimentReport const& rep)
{
    using nlohmann::json;
    json j;
    j["name"] = rep.name;
    j["threads"] = rep.threads;
    j["total_wall_s"] = format_double(rep.total_wall_s);
    json arms = json::array();
    for (auto const& a : rep.arms)
    {
        json e = json::array();
        for (double v : a.estimates)
            e.push_back(format_double(v));
        arms.push_back({{"model", a.model},
                        {"gamma", format_double(a.gamma)},
                        {"alpha", format_double(a.alpha)},
                        {"arm", a.arm},
                        {"surrogate", a.surrogate},
                        {"reference", format_double(a.reference)},
                        {"estimates", e},
                        {"replications", a.replication},
                        {"h_calls", a.h_calls},
                        {"failures", a.failures}});
    }
    j["arms"] = arms;
    return j;
}

/// Writes summary.csv, ratio_curve.csv and report.json into dir.
inline void emit_tables(ExperimentReport const& rep, std::filesystem::path const& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create output directory '" + dir.string() + "'");
    auto open = [&](char const* name) {
        std::ofstream f(dir / name, std::ios::binary);
        require(f.good(), ErrorKind::Io, "cannot write '" + (dir / name).string() + "'");
        return f;
    };
    {
        auto f = open("summary.csv");
        write_summary_csv(f, rep.rows);
    }
    {
        auto f = open("ratio_curve.csv");
        write_ratio_curve_csv(f, rep.rows);
    }
    {
        auto f = open("report.json");
        f << report_json(rep).dump(2) << '\n';
    }
}

//---------------------------------------------------------------------------//
// Presets
//---------------------------------------------------------------------------//

/// Extreme-tail study: models 1, 2, 3 (centred) and 4 at alpha = 0.002, m = 50,
/// 7,500 pivots (5,000 + 2,500 when iterative) and 20,000 draws. Chains are
/// thinned to every 25th state: at 5 their autocorrelation dominates the error
/// this far in the tail.
inline std::vector<ExperimentConfig> preset_table1()
{
    std::vector<ExperimentConfig> out;
    for (auto [id, sur] : std::vector<std::pair<std::string, std::string>>{
             {"1", "linear"}, {"2", "linear"}, {"7", "poly2"}, {"4", "poly2"}})
    {
        ExperimentConfig c;
        c.name = "table1";
        c.model = id;
        c.gammas = {0.5, 1.0, 2.0};
        c.alphas = {0.002};
        c.pipeline.M = 7500;
        c.pipeline.N = 20000;
        c.pipeline.m = 50;
        c.pipeline.mcmc.thinning = 25;
        c.arms = {"crude", "is", "iterative"};
        c.surrogates = {sur};
        c.iter_levels = {0.01};
        c.iter_budgets = {5000, 2500};
        c.replications = 50;
        c.reference.source = ReferenceSource::Analytic;
        c.out = "out/table1";
        out.push_back(c);
    }
    return out;
}

/// ALM study: alpha from 0.01 to 0.3, gamma in {1/2, 1, 2}, M = 2,000,
/// N = 20,000, m = 20, crude reference with 10^6 draws.
inline ExperimentConfig preset_alm()
{
    ExperimentConfig c;
    c.name = "alm";
    c.model = "alm";
    c.gammas = {0.5, 1.0, 2.0};
    c.alphas.clear();
    for (int k = 1; k <= 30; ++k)
        c.alphas.push_back(k / 100.0);
    c.pipeline.M = 2000;
    c.pipeline.N = 20000;
    c.pipeline.m = 20;
    c.arms = {"crude", "is"};
    c.surrogates = {"linear"};
    c.replications = 20;
    c.reference.source = ReferenceSource::Crude;
    c.reference.n = 1'000'000;
    c.out = "out/alm";
    return c;
}

}  // namespace drmis
