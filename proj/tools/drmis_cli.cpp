// Command-line front end: single estimates, experiment runs, the two
// presets and the invariant suite.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <drmis/bench.hpp>
#include <drmis/validate.hpp>

namespace
{

using namespace drmis;

struct Common
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
    std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* app, Common& c, bool with_config = true)
{
    if (with_config)
        app->add_option("--config", c.config, "Experiment config file (key = value lines)");
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--threads", c.threads, "Worker threads (0: all cores)");
    app->add_option("--out", c.out, "Output directory");
    app->add_option("--set", c.overrides, "Override one config key, as key=value")->take_all();
}

/// Config file first, then --set overrides, then the dedicated flags.
ExperimentConfig apply(ExperimentConfig cfg, Common const& c)
{
    if (!c.config.empty())
        cfg = load_experiment(c.config, cfg);
    for (auto const& kv : c.overrides)
    {
        auto eq = kv.find('=');
        require(eq != std::string::npos, ErrorKind::Config, "--set expects key=value, got '" + kv + "'");
        cfg.set(trim_copy(kv.substr(0, eq)), trim_copy(kv.substr(eq + 1)));
    }
    if (c.seed)
        cfg.seed = *c.seed;
    if (c.threads)
        cfg.threads = *c.threads;
    if (!c.out.empty())
        cfg.out = c.out;
    return cfg;
}

void print_rows(ExperimentReport const& rep)
{
    write_summary_csv(std::cout, rep.rows);
    std::cerr << rep.name << ": " << rep.rows.size() << " rows in " << rep.total_wall_s << " s on " << rep.threads
              << " thread(s)\n";
}

int run_estimate(Common const& c, std::string const& arm_flag)
{
    auto cfg = apply({}, c);
    cfg.validate();
    auto model = cfg.make_model();
    auto g = Distortion::power_tail(cfg.alphas.front(), cfg.gammas.front());
    std::string arm = arm_flag.empty() ? (cfg.arms.size() == 1 ? cfg.arms.front() : "is") : arm_flag;
    require(arm == "crude" || arm == "is" || arm == "iterative", ErrorKind::Config, "unknown arm '" + arm + "'");
    auto rep = run_arm(*model, cfg, g, arm, arm == "crude" ? "-" : cfg.surrogates.front(), cfg.seed);
    auto text = rep.to_json().dump(2);
    std::cout << text << '\n';
    if (!c.out.empty())
    {
        std::filesystem::create_directories(c.out);
        std::ofstream f(std::filesystem::path(c.out) / "estimate.json");
        require(f.good(), ErrorKind::Io, "cannot write to '" + c.out + "'");
        f << text << '\n';
    }
    return 0;
}

int run_bench(Common const& c)
{
    require(!c.config.empty(), ErrorKind::Config, "bench needs --config");
    auto cfg = apply({}, c);
    auto rep = run_experiment(cfg);
    emit_tables(rep, cfg.out);
    print_rows(rep);
    return 0;
}

int run_presets(std::vector<ExperimentConfig> presets, Common const& c, std::string const& name)
{
    std::vector<ExperimentReport> parts;
    std::string out;
    for (auto& p : presets)
    {
        auto cfg = apply(p, c);
        out = cfg.out;
        parts.push_back(run_experiment(cfg));
    }
    auto rep = merge_reports(name, parts);
    emit_tables(rep, out);
    print_rows(rep);
    return 0;
}

int run_validate(Common const& c, std::string const& module)
{
    ValidateOptions opt;
    if (c.seed)
        opt.seed = *c.seed;
    opt.module = module;
    int failed = 0;
    auto results = run_invariant_suite(opt, [&](CheckResult const& r) {
        failed += r.pass ? 0 : 1;
        std::cout << (r.pass ? "[ok]   " : "[FAIL] ") << r.module << ": " << r.name << " (" << r.detail << ", "
                  << r.seconds << " s)" << std::endl;
    });
    std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " invariants hold\n";
    if (!c.out.empty())
    {
        std::filesystem::create_directories(c.out);
        nlohmann::json j = nlohmann::json::array();
        for (auto const& r : results)
            j.push_back({{"module", r.module}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail},
                         {"seconds", r.seconds}});
        std::ofstream(std::filesystem::path(c.out) / "validate.json") << j.dump(2) << '\n';
    }
    return failed ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Distortion risk measures by importance sampling with surrogate tilts"};
    app.require_subcommand(1);

    Common est_c, bench_c, t1_c, alm_c, val_c;
    std::string arm, module;

    auto* est = app.add_subcommand("estimate", "One estimate at the first (alpha, gamma) of the config");
    add_common(est, est_c);
    est->add_option("--arm", arm, "crude, is or iterative");

    auto* bench = app.add_subcommand("bench", "Run an experiment config and write summary tables");
    add_common(bench, bench_c);

    auto* t1 = app.add_subcommand("table1", "Extreme-tail preset on models 1, 2, 3 (centred) and 4");
    add_common(t1, t1_c);

    auto* alm = app.add_subcommand("alm", "Asset-liability preset");
    add_common(alm, alm_c);

    auto* val = app.add_subcommand("validate", "Run the invariant suite");
    add_common(val, val_c, false);
    val->add_option("--module", module, "Restrict to one module");

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try
    {
        if (*est)
            return run_estimate(est_c, arm);
        if (*bench)
            return run_bench(bench_c);
        if (*t1)
            return run_presets(preset_table1(), t1_c, "table1");
        if (*alm)
            return run_presets({preset_alm()}, alm_c, "alm");
        if (*val)
            return run_validate(val_c, module);
    }
    catch (Error const& e)
    {
        std::cerr << "drmis: " << e.what() << '\n';
        return e.kind() == ErrorKind::Config ? 2 : 3;
    }
    catch (std::exception const& e)
    {
        std::cerr << "drmis: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
