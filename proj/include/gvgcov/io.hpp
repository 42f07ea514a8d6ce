#pragma once

// Artifact files written under --out-dir and the invariant checks that
// re-read them. Every file goes to a temporary name first and is renamed
// into place, so a failed run never leaves half-written output.

#include "balance.hpp"
#include "error.hpp"
#include "gvg.hpp"
#include "sim.hpp"

#include "json.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gvgcov
{
    namespace fs = std::filesystem;

    inline void write_atomic(const fs::path &path, const std::string &content)
    {
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                throw Error(ErrorCode::InvalidInput, "cannot write " + tmp.string());
            out << content;
            out.flush();
            if (!out)
                throw Error(ErrorCode::InvalidInput, "short write to " + tmp.string());
        }
        std::error_code ec;
        fs::rename(tmp, path, ec);
        if (ec)
        {
            fs::remove(tmp, ec);
            throw Error(ErrorCode::InvalidInput, "cannot rename into " + path.string());
        }
    }

    /// Files are collected in memory and written together once every
    /// computation has succeeded.
    using Artifacts = std::map<std::string, std::string>;

    inline void write_artifacts(const fs::path &dir, const Artifacts &files)
    {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec)
            throw Error(ErrorCode::InvalidInput, "cannot create " + dir.string());
        for (const auto &[name, content] : files)
            write_atomic(dir / name, content);
    }

    namespace detail
    {
        inline nlohmann::json point_json(Point p) { return nlohmann::json::array({p.x, p.y}); }

        inline std::string num(double v) { return fmt::format("{:.17g}", v); }
    }

    // ---- gvg.json -------------------------------------------------------

    inline nlohmann::json world_json(const World &world)
    {
        nlohmann::json w;
        auto ring = [](const Polygon &p) {
            nlohmann::json r = nlohmann::json::array();
            for (Point v : p.vertices())
                r.push_back(detail::point_json(v));
            return r;
        };
        w["outer"] = ring(world.outer());
        w["obstacles"] = nlohmann::json::array();
        for (std::size_t i = 1; i < world.obstacle_count(); ++i)
            w["obstacles"].push_back(ring(world.obstacle(i)));
        return w;
    }

    inline std::string gvg_json(const GvgGraph &g, const World &world)
    {
        nlohmann::json j;
        j["world"] = world_json(world);
        j["grid_resolution"] = g.grid_resolution;
        j["total_mass"] = g.total_mass;
        j["nodes"] = nlohmann::json::array();
        for (std::size_t k = 0; k < g.nodes.size(); ++k)
        {
            const GvgNode &n = g.nodes[k];
            j["nodes"].push_back({{"id", k},
                                  {"position", detail::point_json(n.position)},
                                  {"radius", n.radius},
                                  {"obstacles", n.defining_obstacles},
                                  {"edges", n.incident_edges}});
        }
        j["edges"] = nlohmann::json::array();
        for (const GvgEdge &e : g.edges)
        {
            nlohmann::json samples = nlohmann::json::array();
            for (const EdgeSample &s : e.samples)
                samples.push_back({{"s", s.s},
                                   {"position", detail::point_json(s.position)},
                                   {"tangent", detail::point_json(s.tangent)},
                                   {"normal", detail::point_json(s.normal)},
                                   {"curvature", s.curvature},
                                   {"eps_plus", s.eps_plus},
                                   {"eps_minus", s.eps_minus}});
            nlohmann::json ends = nlohmann::json::array();
            for (const auto &n : e.endpoint_nodes)
                ends.push_back(n ? nlohmann::json(*n) : nlohmann::json(nullptr));
            j["edges"].push_back({{"id", e.id},
                                  {"obstacle_pair", {e.obstacle_pair.first, e.obstacle_pair.second}},
                                  {"length", e.length},
                                  {"closed", e.closed},
                                  {"endpoint_nodes", ends},
                                  {"samples", samples}});
        }
        j["cells"] = nlohmann::json::array();
        for (const GvgCell &c : g.cells)
            j["cells"].push_back({{"id", c.id}, {"edge", c.edge}, {"mass", c.mass}, {"neighbors", c.neighbor_cells}});
        j["warnings"] = g.warnings;
        return j.dump(1) + "\n";
    }

    // ---- balance artifacts ------------------------------------------------

    inline std::string balance_trace_csv(const BalanceTrace &trace)
    {
        std::string out = "round,cell_id,K,x,c,offers_sent,transfers\n";
        for (const RoundRecord &rec : trace.rounds)
            for (const CellRoundRow &row : rec.rows)
                out += fmt::format("{},{},{},{},{},{},{}\n", rec.round, row.cell_id, row.K, detail::num(row.x),
                                   row.c ? std::to_string(*row.c) : std::string(), row.offers_sent, row.transfers);
        return out;
    }

    inline nlohmann::json balance_summary(const std::vector<CellLoadState> &states, const BalanceTrace &trace)
    {
        std::vector<double> K_star;
        std::vector<long> K;
        for (const CellLoadState &s : states)
        {
            K_star.push_back(s.K_star);
            K.push_back(s.K);
        }
        const DeviationSummary dev = deviation_vector(states);
        const Eq3Check eq = check_eq3(dev.c);
        nlohmann::json j;
        j["K_star"] = K_star;
        j["K"] = K;
        j["c"] = dev.c;
        j["c_bar"] = dev.c_bar;
        j["alpha"] = eq.alpha;
        j["beta"] = eq.beta;
        j["eq3_ok"] = eq.ok;
        j["guard_skips"] = trace.guard_skips;
        j["rounds"] = trace.rounds.empty() ? 0 : trace.rounds.back().round;
        if (eq.ok)
        {
            const Theorem2Check t2 = verify_theorem2(K, K_star);
            j["S_p"] = t2.S_p;
            j["S_f"] = t2.S_f;
            j["S1"] = t2.S1;
            j["S2"] = t2.S2;
            j["theorem2_ok"] = t2.ok;
        }
        else
        {
            j["S_p"] = nullptr;
            j["S_f"] = balance_objective(K, K_star);
            j["S1"] = nullptr;
            j["S2"] = nullptr;
            j["theorem2_ok"] = false;
        }
        return j;
    }

    // ---- run artifacts ------------------------------------------------------

    inline std::string robots_csv(const SimTrace &trace)
    {
        std::string out = "step,time,id,x,y,cell,s,delta\n";
        for (const RobotRecord &r : trace.robots)
            out += fmt::format("{},{},{},{},{},{},{},{}\n", r.step, detail::num(r.time), r.robot.id,
                               detail::num(r.robot.position.x), detail::num(r.robot.position.y), r.robot.cell_id,
                               detail::num(r.robot.s), detail::num(r.robot.delta));
        return out;
    }

    /// The "assignment" row is the cost of the random initial assignment; the
    /// "coverage" rows start after the balancing transfers.
    inline std::string cost_csv(const SimTrace &trace)
    {
        std::string out = "step,time,phase,H_scaled\n";
        out += fmt::format("0,0,assignment,{}\n", detail::num(trace.cost_initial));
        for (const CostRecord &c : trace.cost)
            out += fmt::format("{},{},coverage,{}\n", c.step, detail::num(c.time), detail::num(c.cost));
        return out;
    }

    inline nlohmann::json run_summary(const ScenarioConfig &cfg, const SimResult &r)
    {
        std::vector<long> counts(r.state.graph.cells.size(), 0);
        for (const RobotState &rb : r.state.robots)
            ++counts[rb.cell_id];
        nlohmann::json j;
        j["seed"] = cfg.seed;
        j["robots"] = cfg.robot_count;
        j["cells"] = r.state.graph.cells.size();
        j["steps"] = cfg.steps;
        j["dt"] = cfg.dt;
        j["k_g"] = cfg.k_g;
        j["report_scale"] = cfg.report_scale;
        j["cell_counts"] = counts;
        j["H_initial"] = r.trace.cost_initial;
        j["H_after_balance"] = r.trace.cost_after_balance;
        j["H_final"] = r.trace.cost_final;
        j["max_u"] = r.trace.final_max_u;
        j["max_projected_u"] = r.trace.final_max_admissible;
        j["clamps"] = r.trace.clamps;
        j["log"] = r.state.log;
        return j;
    }

    // ---- check --------------------------------------------------------------

    struct CheckItem
    {
        std::string name;
        bool ok = false;
        std::string detail;
    };

    struct CheckReport
    {
        std::vector<CheckItem> items;
        bool all_ok() const
        {
            for (const CheckItem &c : items)
                if (!c.ok)
                    return false;
            return true;
        }
        std::string json() const
        {
            nlohmann::json j = nlohmann::json::array();
            for (const CheckItem &c : items)
                j.push_back({{"check", c.name}, {"ok", c.ok}, {"detail", c.detail}});
            return nlohmann::json({{"ok", all_ok()}, {"checks", j}}).dump(1) + "\n";
        }
    };

    /// Tolerances used by the artifact checks.
    struct CheckTolerances
    {
        /// Equidistance residual of edge samples, in grid cells.
        double equidistance_cells = 0.5;
        double cost_slack = 1e-6;
    };

    namespace detail
    {
        inline std::optional<std::string> slurp(const fs::path &p)
        {
            std::ifstream in(p, std::ios::binary);
            if (!in)
                return std::nullopt;
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        }

        inline std::vector<std::vector<std::string>> csv_rows(const std::string &text)
        {
            std::vector<std::vector<std::string>> rows;
            std::istringstream in(text);
            std::string line;
            while (std::getline(in, line))
            {
                if (line.empty())
                    continue;
                std::vector<std::string> cells;
                std::string cell;
                std::istringstream ls(line);
                while (std::getline(ls, cell, ','))
                    cells.push_back(cell);
                if (!line.empty() && line.back() == ',')
                    cells.emplace_back();
                rows.push_back(std::move(cells));
            }
            return rows;
        }

        inline std::vector<Point> ring_from(const nlohmann::json &j)
        {
            std::vector<Point> out;
            for (const auto &v : j)
                out.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
            return out;
        }

        inline World world_from(const nlohmann::json &j)
        {
            std::vector<std::vector<Point>> holes;
            for (const auto &h : j.at("obstacles"))
                holes.push_back(ring_from(h));
            return World(ring_from(j.at("outer")), holes);
        }

        inline CheckItem check_equidistance(const nlohmann::json &g, const World &world, double tol_cells)
        {
            const double tol = tol_cells * g.at("grid_resolution").get<double>();
            double worst = 0.0;
            double worst_other = 0.0;
            for (const auto &e : g.at("edges"))
            {
                const std::size_t a = e.at("obstacle_pair").at(0).get<std::size_t>();
                const std::size_t b = e.at("obstacle_pair").at(1).get<std::size_t>();
                for (const auto &s : e.at("samples"))
                {
                    const Point p{s.at("position").at(0).get<double>(), s.at("position").at(1).get<double>()};
                    const double da = distance_to_obstacle(p, a, world).distance;
                    const double db = distance_to_obstacle(p, b, world).distance;
                    worst = std::max(worst, std::abs(da - db));
                    for (std::size_t k = 0; k < world.obstacle_count(); ++k)
                        if (k != a && k != b)
                            worst_other =
                                std::max(worst_other, std::min(da, db) - distance_to_obstacle(p, k, world).distance);
                }
            }
            const bool ok = worst <= tol && worst_other <= tol;
            return {"gvg_equidistance", ok,
                    fmt::format("max |d_a - d_b| = {:.3g}, max intrusion of a third obstacle = {:.3g}, tolerance {:.3g}",
                                worst, worst_other, tol)};
        }

        inline std::vector<CheckItem> check_balance(const nlohmann::json &summary,
                                                    const std::optional<std::string> &trace)
        {
            std::vector<CheckItem> out;
            const auto K = summary.at("K").get<std::vector<long>>();
            const auto K_star = summary.at("K_star").get<std::vector<double>>();
            std::vector<long> c(K.size());
            for (std::size_t i = 0; i < K.size(); ++i)
                c[i] = K[i] - static_cast<long>(std::floor(K_star[i]));
            const Eq3Check eqc = check_eq3(c);
            const bool flag = summary.at("eq3_ok").get<bool>();
            out.push_back({"balance_eq3", eqc.ok && flag,
                           fmt::format("recomputed eq3 {} (alpha {}, beta {}), reported {}", eqc.ok, eqc.alpha,
                                       eqc.beta, flag)});
            bool t2 = false;
            std::string why = "eq3 does not hold";
            if (eqc.ok)
            {
                const Theorem2Check t = verify_theorem2(K, K_star);
                t2 = t.ok && summary.at("theorem2_ok").get<bool>();
                why = fmt::format("S_p {:.6g} <= S_f {:.6g} < S_p + S2 {:.6g}: {}", t.S_p, t.S_f, t.S_p + t.S2, t.ok);
            }
            out.push_back({"balance_theorem2", t2, why});
            if (trace)
            {
                const auto rows = csv_rows(*trace);
                std::map<long, long> totals;
                for (std::size_t k = 1; k < rows.size(); ++k)
                    totals[std::stol(rows[k].at(0))] += std::stol(rows[k].at(2));
                bool ok = !totals.empty();
                long first = ok ? totals.begin()->second : 0;
                for (const auto &[round, total] : totals)
                    ok = ok && total == first;
                out.push_back({"balance_conservation", ok,
                               fmt::format("{} rounds, robots per round {}", totals.size(), first)});
            }
            return out;
        }

        inline CheckItem check_cost(const std::string &text, double slack)
        {
            const auto rows = csv_rows(text);
            double prev = 0.0;
            bool have = false;
            double worst = -std::numeric_limits<double>::infinity();
            std::size_t at = 0;
            std::size_t n = 0;
            for (std::size_t k = 1; k < rows.size(); ++k)
            {
                if (rows[k].at(2) != "coverage")
                    continue;
                const double h = std::stod(rows[k].at(3));
                if (have && h - prev > worst)
                {
                    worst = h - prev;
                    at = std::stoul(rows[k].at(0));
                }
                prev = h;
                have = true;
                ++n;
            }
            const bool ok = have && (n < 2 || worst <= slack);
            return {"cost_monotone", ok,
                    n < 2 ? fmt::format("{} coverage rows", n)
                          : fmt::format("largest step increase {:.3g} at step {} (slack {:.1g})", worst, at, slack)};
        }

        inline CheckItem check_robots(const std::string &text, const std::optional<World> &world)
        {
            const auto rows = csv_rows(text);
            std::map<long, std::size_t> per_step;
            std::size_t outside = 0;
            for (std::size_t k = 1; k < rows.size(); ++k)
            {
                ++per_step[std::stol(rows[k].at(0))];
                if (world && !contains({std::stod(rows[k].at(3)), std::stod(rows[k].at(4))}, *world))
                    ++outside;
            }
            bool ok = !per_step.empty() && outside == 0;
            const std::size_t first = per_step.empty() ? 0 : per_step.begin()->second;
            for (const auto &[step, n] : per_step)
                ok = ok && n == first;
            return {"robots_conserved_in_free_space", ok,
                    fmt::format("{} recorded steps, {} robots each, {} positions outside free space{}",
                                per_step.size(), first, outside, world ? "" : " (no world available)")};
        }
    }

    /// Runs every check whose inputs exist in `dir`. Returns nullopt when the
    /// directory holds none of the known artifacts.
    inline std::optional<CheckReport> check_artifacts(const fs::path &dir, const CheckTolerances &tol = {})
    {
        const auto gvg = detail::slurp(dir / "gvg.json");
        const auto summary = detail::slurp(dir / "balance_summary.json");
        const auto trace = detail::slurp(dir / "balance_trace.csv");
        const auto cost = detail::slurp(dir / "cost.csv");
        const auto robots = detail::slurp(dir / "robots.csv");
        if (!gvg && !summary && !trace && !cost && !robots)
            return std::nullopt;
        CheckReport rep;
        auto guarded = [&](const std::string &name, auto &&fn) {
            try
            {
                fn();
            }
            catch (const std::exception &e)
            {
                rep.items.push_back({name, false, std::string("unreadable: ") + e.what()});
            }
        };
        std::optional<World> world;
        if (gvg)
            guarded("gvg_equidistance", [&] {
                const nlohmann::json g = nlohmann::json::parse(*gvg);
                world = detail::world_from(g.at("world"));
                rep.items.push_back(detail::check_equidistance(g, *world, tol.equidistance_cells));
            });
        if (summary)
            guarded("balance", [&] {
                for (CheckItem &c : detail::check_balance(nlohmann::json::parse(*summary), trace))
                    rep.items.push_back(std::move(c));
            });
        if (cost)
            guarded("cost_monotone", [&] { rep.items.push_back(detail::check_cost(*cost, tol.cost_slack)); });
        if (robots)
            guarded("robots_conserved_in_free_space",
                    [&] { rep.items.push_back(detail::check_robots(*robots, world)); });
        return rep;
    }
}
