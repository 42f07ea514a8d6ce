// gvgcov: GVG extraction, load balancing and coverage runs from a scenario
// file. Exit codes: 0 success, 1 failed check, 2 usage or validation error,
// 3 computation failure.

#include "gvgcov/gvgcov.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <cstdio>
#include <optional>
#include <string>

namespace
{
    using namespace gvgcov;

    enum Exit
    {
        kOk = 0,
        kCheckFailed = 1,
        kUsage = 2,
        kCompute = 3,
    };

    struct Options
    {
        std::string scenario;
        std::string out_dir;
        std::optional<std::uint64_t> seed;
        bool quiet = false;
    };

    void say(const Options &o, const std::string &line)
    {
        if (!o.quiet)
            fmt::print("{}\n", line);
    }

    std::optional<ScenarioConfig> load(const Options &o, bool allow_cell_graph = false)
    {
        try
        {
            ScenarioConfig cfg = load_scenario(o.scenario);
            if (o.seed)
                cfg.seed = *o.seed;
            if (cfg.cell_graph && !allow_cell_graph)
                throw Error(ErrorCode::InvalidInput, o.scenario + ": cell_graph scenarios only support 'balance'");
            return cfg;
        }
        catch (const std::exception &e)
        {
            fmt::print(stderr, "error: {}\n", e.what());
            return std::nullopt;
        }
    }

    template <class Fn>
    int guarded(Fn &&fn)
    {
        try
        {
            return fn();
        }
        catch (const std::exception &e)
        {
            fmt::print(stderr, "error: {}\n", e.what());
            return kCompute;
        }
    }

    std::string join(const auto &values)
    {
        std::string out;
        for (const auto &v : values)
            out += (out.empty() ? "" : " ") + fmt::format("{}", v);
        return out;
    }

    int cmd_gvg(const Options &o)
    {
        const auto cfg = load(o);
        if (!cfg)
            return kUsage;
        return guarded([&] {
            const World world(cfg->outer, cfg->obstacles);
            GvgGraph g = extract_gvg(world, cfg->grid_resolution);
            build_cells(g, cfg->density, cfg->mass_quad_points);
            write_artifacts(o.out_dir, {{"gvg.json", gvg_json(g, world)}});
            say(o, fmt::format("cells: {}", g.cells.size()));
            say(o, fmt::format("edges: {}", g.edges.size()));
            say(o, fmt::format("nodes: {}", g.nodes.size()));
            say(o, fmt::format("total mass: {:.6g}", g.total_mass));
            for (const std::string &w : g.warnings)
                fmt::print(stderr, "warning: {}\n", w);
            return kOk;
        });
    }

    int cmd_balance(const Options &o)
    {
        const auto cfg = load(o, true);
        if (!cfg)
            return kUsage;
        return guarded([&] {
            BalanceResult res;
            if (cfg->cell_graph)
            {
                BalanceConfig bc = cfg->balance;
                bc.seed = cfg->seed;
                res = balance_cells(cfg->cell_graph->counts, cfg->cell_graph->masses, cfg->cell_graph->adjacency(), bc);
            }
            else
            {
                SimState st = initialize(*cfg);
                res = run_load_balancing(st, *cfg);
            }
            const nlohmann::json summary = balance_summary(res.states, res.trace);
            write_artifacts(o.out_dir, {{"balance_trace.csv", balance_trace_csv(res.trace)},
                                        {"balance_summary.json", summary.dump(1) + "\n"}});
            std::vector<std::string> ks;
            for (const CellLoadState &c : res.states)
                ks.push_back(fmt::format("{:.3f}", c.K_star));
            say(o, fmt::format("cells: {}", res.states.size()));
            say(o, "K*: " + join(ks));
            say(o, "K: " + join(summary.at("K").get<std::vector<long>>()));
            say(o, fmt::format("alpha: {} beta: {}", summary.at("alpha").get<std::size_t>(),
                               summary.at("beta").get<std::size_t>()));
            say(o, fmt::format("eq3_ok: {} theorem2_ok: {}", summary.at("eq3_ok").get<bool>(),
                               summary.at("theorem2_ok").get<bool>()));
            return kOk;
        });
    }

    int cmd_run(const Options &o)
    {
        const auto cfg = load(o);
        if (!cfg)
            return kUsage;
        return guarded([&] {
            const SimResult r = run(*cfg);
            const nlohmann::json summary = balance_summary(r.balance.states, r.balance.trace);
            write_artifacts(o.out_dir, {{"gvg.json", gvg_json(r.state.graph, r.state.world)},
                                        {"balance_trace.csv", balance_trace_csv(r.balance.trace)},
                                        {"balance_summary.json", summary.dump(1) + "\n"},
                                        {"robots.csv", robots_csv(r.trace)},
                                        {"cost.csv", cost_csv(r.trace)},
                                        {"run_summary.json", run_summary(*cfg, r).dump(1) + "\n"}});
            say(o, fmt::format("cells: {}", r.state.graph.cells.size()));
            say(o, "K: " + join(summary.at("K").get<std::vector<long>>()));
            say(o, fmt::format("H initial: {:.9g} after balancing: {:.9g} final: {:.9g}", r.trace.cost_initial,
                               r.trace.cost_after_balance, r.trace.cost_final));
            say(o, fmt::format("stationarity: max |u| {:.3e}, max projected |u| {:.3e}", r.trace.final_max_u,
                               r.trace.final_max_admissible));
            return kOk;
        });
    }

    int cmd_check(const Options &o)
    {
        return guarded([&] {
            const auto rep = check_artifacts(o.out_dir);
            if (!rep)
            {
                fmt::print(stderr, "error: no artifacts found in {}\n", o.out_dir);
                return static_cast<int>(kUsage);
            }
            fmt::print("{}", rep->json());
            return static_cast<int>(rep->all_ok() ? kOk : kCheckFailed);
        });
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"GVG cell decomposition, weighted load balancing and coverage control"};
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App *sub, bool needs_scenario) {
        if (needs_scenario)
        {
            sub->add_option("--scenario", o.scenario, "scenario file (JSON)")->required();
            sub->add_option("--seed", seed, "override the scenario seed");
        }
        sub->add_option("--out-dir", o.out_dir, "directory for artifacts")->required();
        sub->add_flag("--quiet", o.quiet, "suppress standard output");
    };
    CLI::App *gvg = app.add_subcommand("gvg", "extract the GVG and write gvg.json");
    CLI::App *balance = app.add_subcommand("balance", "run both load-balancing phases");
    CLI::App *runc = app.add_subcommand("run", "full pipeline with coverage control");
    CLI::App *check = app.add_subcommand("check", "verify invariants on an artifact directory");
    add_common(gvg, true);
    add_common(balance, true);
    add_common(runc, true);
    add_common(check, false);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        fmt::print(stderr, "error: {}\n\n", e.what());
        CLI::App *shown = &app;
        for (CLI::App *sub : app.get_subcommands())
            shown = sub;
        fmt::print(stderr, "{}", shown->help());
        return kUsage;
    }

    for (CLI::App *sub : {gvg, balance, runc})
        if (sub->parsed() && sub->count("--seed") > 0)
            o.seed = seed;

    if (gvg->parsed())
        return cmd_gvg(o);
    if (balance->parsed())
        return cmd_balance(o);
    if (runc->parsed())
        return cmd_run(o);
    return cmd_check(o);
}
