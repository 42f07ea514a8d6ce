#pragma once

// Full pipeline: random placement, cell assignment, load balancing with
// physical robot transfers, then explicit-Euler coverage descent.

#include "balance.hpp"
#include "coverage.hpp"
#include "env.hpp"
#include "error.hpp"
#include "gvg.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace gvgcov
{
    /// Keep robots this far inside the tube walls.
    inline constexpr double kTubeMargin = 1e-3;

    /// A cell graph given directly instead of derived from a world; only the
    /// load balancer can run on it.
    struct CellGraphSpec
    {
        std::vector<double> masses;
        std::vector<long> counts;
        std::vector<std::pair<std::size_t, std::size_t>> edges;

        CellAdjacency adjacency() const
        {
            CellAdjacency adj(masses.size());
            for (auto [a, b] : edges)
            {
                adj[a].push_back(b);
                adj[b].push_back(a);
            }
            for (auto &n : adj)
            {
                std::sort(n.begin(), n.end());
                n.erase(std::unique(n.begin(), n.end()), n.end());
            }
            return adj;
        }
    };

    struct ScenarioConfig
    {
        std::vector<Point> outer;
        std::vector<std::vector<Point>> obstacles;
        DensityField density = UniformDensity{};
        std::size_t robot_count = 0;
        std::uint64_t seed = 0;
        double grid_resolution = 1.0;
        std::size_t mass_quad_points = 16;
        BalanceConfig balance;
        double dt = 0.05;
        std::size_t steps = 2000;
        double k_g = 0.1;
        Quadrature quad;
        double report_scale = 1e-3;
        /// robots.csv keeps every n-th coverage step (plus the last one).
        std::size_t record_every = 1;
        std::optional<CellGraphSpec> cell_graph;

        void validate() const
        {
            if (!(dt > 0.0) || !std::isfinite(dt))
                throw Error(ErrorCode::InvalidInput, "dt must be positive");
            if (!(k_g > 0.0) || !std::isfinite(k_g))
                throw Error(ErrorCode::InvalidInput, "k_g must be positive");
            if (!(grid_resolution > 0.0) || !std::isfinite(grid_resolution))
                throw Error(ErrorCode::InvalidInput, "grid_resolution must be positive");
            if (robot_count == 0)
                throw Error(ErrorCode::InvalidInput, "robot count must be positive");
            if (balance.t1 < 1 || balance.t2 <= balance.t1)
                throw Error(ErrorCode::InvalidInput, "balance rounds need t2 > t1 >= 1");
            if (record_every == 0 || mass_quad_points == 0)
                throw Error(ErrorCode::InvalidInput, "record_every and mass quadrature points must be positive");
            if (!(report_scale > 0.0) || !std::isfinite(report_scale))
                throw Error(ErrorCode::InvalidInput, "report_scale must be positive");
            quad.validate();
            validate_density(density);
        }
    };

    struct SimState
    {
        World world;
        GvgGraph graph;
        std::vector<RobotState> robots;
        std::vector<CellLoadState> cells;
        std::vector<std::string> log;
    };

    namespace detail
    {
        enum : std::uint64_t
        {
            kPlacementStream = 11,
            kRepairStream = 12,
        };

        /// Tube point for (s, r): r clamped into the walls minus the margin and
        /// pulled towards the edge if the point still lands outside free space.
        /// Returns true when r had to change.
        inline bool place_in_tube(RobotState &rb, const GvgEdge &edge, double s, double r, const World &world)
        {
            const EdgeFrame f = frame_at(edge, s);
            double lo = -f.eps_minus + kTubeMargin;
            double hi = f.eps_plus - kTubeMargin;
            if (lo > hi)
                lo = hi = 0.5 * (f.eps_plus - f.eps_minus);
            double d = std::clamp(r, lo, hi);
            bool changed = d != r;
            Point p = f.position + d * f.normal;
            if (!contains(p, world))
            {
                // Interpolated walls can overshoot the true boundary on curved
                // stretches: bisect for the last free offset and back off.
                double in = 0.0;
                double out = d;
                for (int k = 0; k < 60; ++k)
                {
                    const double mid = 0.5 * (in + out);
                    (contains(f.position + mid * f.normal, world) ? in : out) = mid;
                }
                d = in - std::copysign(std::min(kTubeMargin, std::abs(in)), in);
                p = f.position + d * f.normal;
                changed = true;
            }
            rb.s = s;
            rb.delta = d;
            rb.position = p;
            return changed;
        }

        inline bool relocate(RobotState &rb, const GvgEdge &edge, const World &world)
        {
            const TubeCoordinates tc = nearest_on_edge(rb.position, edge);
            return place_in_tube(rb, edge, std::clamp(tc.s, 0.0, edge.length), tc.r, world);
        }

        struct OffsetBounds
        {
            double lo = 0.0;
            double hi = 0.0;
        };

        inline OffsetBounds offset_bounds(const GvgEdge &edge, double s)
        {
            const EdgeFrame f = frame_at(edge, s);
            OffsetBounds b{-f.eps_minus + kTubeMargin, f.eps_plus - kTubeMargin};
            if (b.lo > b.hi)
                b.lo = b.hi = 0.5 * (f.eps_plus - f.eps_minus);
            return b;
        }

        inline double wrap_arc(const GvgEdge &edge, double s)
        {
            if (edge.closed)
                return std::fmod(std::fmod(s, edge.length) + edge.length, edge.length);
            return std::clamp(s, 0.0, edge.length);
        }

        struct TubePoint
        {
            double s = 0.0;
            double delta = 0.0;
            Point point;
            double distance = 0.0;
        };

        /// Closest point to q of the tube { gamma(s) + r v(s) : lo(s) <= r <= hi(s) },
        /// with s restricted to `window` arc length around `s_hint`. The window
        /// keeps the answer on the stretch of edge the robot is already on.
        inline TubePoint project_into_tube(const GvgEdge &edge, Point q, double s_hint, double window)
        {
            const double spacing =
                edge.length / static_cast<double>(std::max<std::size_t>(edge.samples.size(), 2) - 1);
            const double step = 0.25 * spacing;
            auto eval = [&](double s) {
                TubePoint t;
                t.s = wrap_arc(edge, s);
                const EdgeFrame f = frame_at(edge, t.s);
                const OffsetBounds b = offset_bounds(edge, t.s);
                t.delta = std::clamp(dot(q - f.position, f.normal), b.lo, b.hi);
                t.point = f.position + t.delta * f.normal;
                t.distance = distance(q, t.point);
                return t;
            };
            const long n = static_cast<long>(std::ceil(window / step));
            TubePoint best = eval(s_hint);
            double best_offset = 0.0;
            for (long k = -n; k <= n; ++k)
            {
                const TubePoint t = eval(s_hint + static_cast<double>(k) * step);
                const double off = std::abs(static_cast<double>(k));
                if (t.distance < best.distance - 1e-15 || (t.distance <= best.distance + 1e-15 && off < best_offset))
                {
                    best = t;
                    best_offset = off;
                }
            }
            // Golden-section refinement around the best grid point.
            const double centre = s_hint + (best_offset == 0.0 ? 0.0 : std::copysign(best_offset, best.s - s_hint)) * step;
            double lo = centre - step;
            double hi = centre + step;
            if (!edge.closed)
            {
                lo = std::max(lo, 0.0);
                hi = std::min(hi, edge.length);
            }
            constexpr double g = 0.6180339887498949;
            double x1 = hi - g * (hi - lo);
            double x2 = lo + g * (hi - lo);
            TubePoint t1 = eval(x1);
            TubePoint t2 = eval(x2);
            for (int it = 0; it < 60 && hi - lo > 1e-12; ++it)
            {
                if (t1.distance <= t2.distance)
                {
                    hi = x2;
                    x2 = x1;
                    t2 = t1;
                    x1 = hi - g * (hi - lo);
                    t1 = eval(x1);
                }
                else
                {
                    lo = x1;
                    x1 = x2;
                    t1 = t2;
                    x2 = lo + g * (hi - lo);
                    t2 = eval(x2);
                }
            }
            for (const TubePoint &t : {t1, t2})
                if (t.distance < best.distance)
                    best = t;
            return best;
        }

        /// Window of arc length a move of length `reach` can span.
        inline double move_window(const GvgEdge &edge, double reach)
        {
            const double spacing =
                edge.length / static_cast<double>(std::max<std::size_t>(edge.samples.size(), 2) - 1);
            return 4.0 * reach + 2.0 * spacing;
        }

        inline std::vector<std::vector<std::size_t>> robots_by_cell(const std::vector<RobotState> &robots,
                                                                    std::size_t cells)
        {
            std::vector<std::vector<std::size_t>> out(cells);
            for (std::size_t k = 0; k < robots.size(); ++k)
                out.at(robots[k].cell_id).push_back(k);
            return out;
        }

        inline CellAdjacency adjacency_of(const GvgGraph &g)
        {
            CellAdjacency adj(g.cells.size());
            for (const GvgCell &c : g.cells)
                adj[c.id] = c.neighbor_cells;
            return adj;
        }

        inline std::vector<std::size_t> hop_distances(const CellAdjacency &adj, std::size_t from)
        {
            std::vector<std::size_t> dist(adj.size(), std::numeric_limits<std::size_t>::max());
            std::vector<std::size_t> queue{from};
            dist[from] = 0;
            for (std::size_t head = 0; head < queue.size(); ++head)
                for (std::size_t n : adj[queue[head]])
                    if (dist[n] == std::numeric_limits<std::size_t>::max())
                    {
                        dist[n] = dist[queue[head]] + 1;
                        queue.push_back(n);
                    }
            return dist;
        }

        inline std::optional<Point> shared_node(const GvgGraph &g, std::size_t cell_a, std::size_t cell_b)
        {
            const GvgEdge &a = g.edges.at(g.cells.at(cell_a).edge);
            const GvgEdge &b = g.edges.at(g.cells.at(cell_b).edge);
            for (const auto &na : a.endpoint_nodes)
                for (const auto &nb : b.endpoint_nodes)
                    if (na && nb && *na == *nb)
                        return g.nodes.at(*na).position;
            return std::nullopt;
        }
    }

    /// World, GVG with masses, K robots placed uniformly at random in free
    /// space and assigned to the cell whose tube they are closest to. Empty
    /// cells take a robot from the nearest cell holding two or more.
    inline SimState initialize(const ScenarioConfig &cfg)
    {
        cfg.validate();
        SimState st;
        st.world = World(cfg.outer, cfg.obstacles);
        st.graph = extract_gvg(st.world, cfg.grid_resolution);
        build_cells(st.graph, cfg.density, cfg.mass_quad_points);
        const std::size_t n_cells = st.graph.cells.size();
        if (n_cells == 0)
            throw Error(ErrorCode::InfeasibleK, "the GVG has no cells to place robots in");
        if (cfg.robot_count < n_cells)
            throw Error(ErrorCode::InfeasibleK, std::to_string(cfg.robot_count) + " robots cannot cover " +
                                                    std::to_string(n_cells) + " cells");

        Rng rng(derive_seed(cfg.seed, {detail::kPlacementStream}));
        const BoundingBox box = st.world.bounds();
        for (std::size_t k = 0; k < cfg.robot_count; ++k)
        {
            Point p;
            std::size_t attempts = 0;
            do
            {
                if (++attempts > 1000000)
                    throw Error(ErrorCode::InvalidInput, "could not sample a free-space point");
                p = {rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y)};
            } while (!contains(p, st.world));

            std::size_t best = 0;
            double best_excess = std::numeric_limits<double>::infinity();
            for (const GvgCell &c : st.graph.cells)
            {
                const TubeCoordinates tc = nearest_on_edge(p, st.graph.edges[c.edge]);
                if (tc.excess < best_excess)
                {
                    best_excess = tc.excess;
                    best = c.id;
                }
            }
            RobotState rb;
            rb.id = k;
            rb.cell_id = best;
            rb.position = p;
            if (detail::relocate(rb, st.graph.edges[st.graph.cells[best].edge], st.world))
                st.log.push_back("robot " + std::to_string(k) + " snapped into the tube of cell " +
                                 std::to_string(best));
            st.robots.push_back(rb);
        }

        const CellAdjacency adj = detail::adjacency_of(st.graph);
        for (std::size_t empty = 0; empty < n_cells; ++empty)
        {
            auto members = detail::robots_by_cell(st.robots, n_cells);
            if (!members[empty].empty())
                continue;
            const auto hops = detail::hop_distances(adj, empty);
            std::size_t nearest = std::numeric_limits<std::size_t>::max();
            std::vector<std::size_t> donors;
            for (std::size_t c = 0; c < n_cells; ++c)
            {
                if (members[c].size() < 2)
                    continue;
                if (hops[c] < nearest)
                {
                    nearest = hops[c];
                    donors.assign(1, c);
                }
                else if (hops[c] == nearest)
                    donors.push_back(c);
            }
            if (donors.empty())
                throw Error(ErrorCode::InfeasibleK, "no cell can spare a robot");
            const std::size_t donor = detail::pick(donors, cfg.seed, detail::kRepairStream, 0, empty);
            const GvgEdge &target = st.graph.edges[st.graph.cells[empty].edge];
            std::size_t chosen = members[donor].front();
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k : members[donor])
            {
                const double ex = nearest_on_edge(st.robots[k].position, target).excess;
                if (ex < best)
                {
                    best = ex;
                    chosen = k;
                }
            }
            st.robots[chosen].cell_id = empty;
            detail::relocate(st.robots[chosen], target, st.world);
            st.log.push_back("initial repair: robot " + std::to_string(chosen) + " moved from cell " +
                             std::to_string(donor) + " to empty cell " + std::to_string(empty));
        }

        std::vector<long> counts(n_cells, 0);
        std::vector<double> masses(n_cells);
        for (const RobotState &rb : st.robots)
            ++counts[rb.cell_id];
        for (const GvgCell &c : st.graph.cells)
            masses[c.id] = c.mass;
        st.cells = make_load_states(counts, masses);
        return st;
    }

    /// Both balancing phases on the cell graph; every Transfer moves the
    /// sender's robot closest to the node shared with the receiver.
    inline BalanceResult run_load_balancing(SimState &st, const ScenarioConfig &cfg)
    {
        BalanceConfig bc = cfg.balance;
        bc.seed = cfg.seed;
        const CellAdjacency adj = detail::adjacency_of(st.graph);
        BalanceTrace trace;
        auto ideal = ideal_loads(st.cells, adj, bc, &trace);
        BalanceResult res = run_balance(std::move(ideal), adj, bc, std::move(trace));

        for (const RoundRecord &rec : res.trace.rounds)
            for (const RoundMessage &m : rec.messages)
            {
                if (m.kind != RoundMessage::Kind::Transfer)
                    continue;
                const GvgEdge &target = st.graph.edges[st.graph.cells[m.receiver].edge];
                const std::optional<Point> node = detail::shared_node(st.graph, m.sender, m.receiver);
                std::optional<std::size_t> chosen;
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < st.robots.size(); ++k)
                {
                    if (st.robots[k].cell_id != m.sender)
                        continue;
                    const double d = node ? distance(st.robots[k].position, *node)
                                          : nearest_on_edge(st.robots[k].position, target).excess;
                    if (d < best)
                    {
                        best = d;
                        chosen = k;
                    }
                }
                if (!chosen)
                    throw Error(ErrorCode::EmptyCell, "transfer from a cell without robots");
                st.robots[*chosen].cell_id = m.receiver;
                detail::relocate(st.robots[*chosen], target, st.world);
            }

        st.cells = res.states;
        std::vector<long> counts(st.cells.size(), 0);
        for (const RobotState &rb : st.robots)
            ++counts[rb.cell_id];
        for (const CellLoadState &c : st.cells)
            if (counts[c.cell_id] != c.K)
                throw Error(ErrorCode::InvalidInput, "robot transfers disagree with the balanced counts");
        for (const std::string &line : res.trace.log)
            st.log.push_back(line);
        return res;
    }

    /// Per-cell cross-section tables sized for the current robot counts.
    struct CoverageContext
    {
        std::vector<CellTube> tubes;
    };

    inline CoverageContext make_coverage_context(const SimState &st, const ScenarioConfig &cfg)
    {
        const auto members = detail::robots_by_cell(st.robots, st.graph.cells.size());
        CoverageContext ctx;
        for (const GvgCell &c : st.graph.cells)
            ctx.tubes.push_back(make_cell_tube(st.graph.edges[c.edge], cfg.density, cfg.quad,
                                               std::max<std::size_t>(members[c.id].size(), 1)));
        return ctx;
    }

    inline std::vector<std::vector<RobotState>> group_robots(const SimState &st)
    {
        std::vector<std::vector<RobotState>> out(st.graph.cells.size());
        for (const RobotState &rb : st.robots)
            out.at(rb.cell_id).push_back(rb);
        return out;
    }

    inline double coverage_cost(const SimState &st, const CoverageContext &ctx, double scale)
    {
        return total_cost(ctx.tubes, group_robots(st), scale);
    }

    /// Controls for every robot from the current snapshot, indexed like st.robots.
    inline std::vector<Vec2> control_inputs(const SimState &st, const CoverageContext &ctx, double k_g)
    {
        std::vector<Vec2> u(st.robots.size());
        const auto members = detail::robots_by_cell(st.robots, st.graph.cells.size());
        for (std::size_t c = 0; c < members.size(); ++c)
        {
            if (members[c].empty())
                continue;
            std::vector<RobotState> rs;
            for (std::size_t k : members[c])
                rs.push_back(st.robots[k]);
            const CellPartition part = order_and_boundaries(rs, *ctx.tubes[c].edge);
            for (std::size_t j = 0; j < rs.size(); ++j)
                u[members[c][j]] = control_input(rs, j, part, ctx.tubes[c], k_g);
        }
        return u;
    }

    struct StepStats
    {
        double max_u = 0.0;
        std::size_t clamps = 0;
    };

    /// One explicit Euler step p <- p + dt u, then back onto the robot's own
    /// edge with the offset clamped inside the tube.
    inline StepStats step_coverage(SimState &st, const CoverageContext &ctx, double dt, double k_g)
    {
        const std::vector<Vec2> u = control_inputs(st, ctx, k_g);
        StepStats stats;
        for (std::size_t k = 0; k < st.robots.size(); ++k)
        {
            stats.max_u = std::max(stats.max_u, norm(u[k]));
            if (u[k] == Vec2{})
                continue;
            RobotState &rb = st.robots[k];
            const GvgEdge &edge = *ctx.tubes[rb.cell_id].edge;
            const Point target = rb.position + dt * u[k];
            const detail::TubePoint tp =
                detail::project_into_tube(edge, target, rb.s, detail::move_window(edge, dt * norm(u[k])));
            if (detail::place_in_tube(rb, edge, tp.s, tp.delta, st.world) || tp.distance > 1e-9)
                ++stats.clamps;
        }
        return stats;
    }

    /// Projected-gradient velocity (P(p + dt u) - p) / dt with P the projection
    /// onto the robot's tube: u itself inside the tube, its slide along a wall
    /// the robot presses against, zero at a constrained stationary point.
    inline Vec2 admissible_velocity(const RobotState &rb, Vec2 u, const GvgEdge &edge, double dt)
    {
        const Point target = rb.position + dt * u;
        const detail::TubePoint tp = detail::project_into_tube(edge, target, rb.s, detail::move_window(edge, dt * norm(u)));
        return (tp.point - rb.position) / dt;
    }

    struct Stationarity
    {
        /// Largest raw controller output.
        double max_u = 0.0;
        /// Largest admissible velocity; zero at a constrained stationary point.
        double max_admissible = 0.0;
    };

    inline Stationarity stationarity(const SimState &st, const CoverageContext &ctx, double k_g, double dt)
    {
        Stationarity out;
        const std::vector<Vec2> u = control_inputs(st, ctx, k_g);
        for (std::size_t k = 0; k < u.size(); ++k)
        {
            out.max_u = std::max(out.max_u, norm(u[k]));
            const RobotState &rb = st.robots[k];
            out.max_admissible =
                std::max(out.max_admissible, norm(admissible_velocity(rb, u[k], *ctx.tubes[rb.cell_id].edge, dt)));
        }
        return out;
    }

    struct CostRecord
    {
        std::size_t step = 0;
        double time = 0.0;
        double cost = 0.0;
    };

    struct RobotRecord
    {
        std::size_t step = 0;
        double time = 0.0;
        RobotState robot;
    };

    struct SimTrace
    {
        std::vector<CostRecord> cost;
        std::vector<RobotRecord> robots;
        /// Scaled cost of the initial assignment, before balancing.
        double cost_initial = 0.0;
        double cost_after_balance = 0.0;
        double cost_final = 0.0;
        double final_max_u = 0.0;
        double final_max_admissible = 0.0;
        std::size_t clamps = 0;
    };

    struct SimResult
    {
        SimState state;
        BalanceResult balance;
        SimTrace trace;
    };

    inline SimResult run(const ScenarioConfig &cfg)
    {
        SimResult out;
        out.state = initialize(cfg);
        SimState &st = out.state;
        out.trace.cost_initial = coverage_cost(st, make_coverage_context(st, cfg), cfg.report_scale);
        out.balance = run_load_balancing(st, cfg);

        const CoverageContext ctx = make_coverage_context(st, cfg);
        auto record_robots = [&](std::size_t step) {
            for (const RobotState &rb : st.robots)
                out.trace.robots.push_back({step, static_cast<double>(step) * cfg.dt, rb});
        };
        double h = coverage_cost(st, ctx, cfg.report_scale);
        out.trace.cost_after_balance = h;
        out.trace.cost.push_back({0, 0.0, h});
        record_robots(0);
        for (std::size_t step = 1; step <= cfg.steps; ++step)
        {
            out.trace.clamps += step_coverage(st, ctx, cfg.dt, cfg.k_g).clamps;
            h = coverage_cost(st, ctx, cfg.report_scale);
            const double t = static_cast<double>(step) * cfg.dt;
            out.trace.cost.push_back({step, t, h});
            if (step % cfg.record_every == 0 || step == cfg.steps)
                record_robots(step);
        }
        out.trace.cost_final = h;
        const Stationarity sn = stationarity(st, ctx, cfg.k_g, cfg.dt);
        out.trace.final_max_u = sn.max_u;
        out.trace.final_max_admissible = sn.max_admissible;
        if (out.trace.clamps > 0)
            st.log.push_back("coverage: offsets clamped " + std::to_string(out.trace.clamps) + " times");
        return out;
    }
}
