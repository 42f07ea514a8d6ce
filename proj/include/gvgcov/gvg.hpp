#pragma once

// Generalized Voronoi graph extraction, cell decomposition and the tube
// (Frenet) coordinate machinery built on each GVG edge.
//
// Extraction works on a regular grid: every grid vertex is labelled with its
// nearest obstacle (signed distances, so vertices inside an obstacle carry its
// label), equidistance points are bisected out of every grid edge whose label
// changes, and the points are chained marching-squares style. Grid cells in
// which three or more labels meet seed nodes, which are refined by Newton
// iteration on d_i = d_j = d_k. Chains are then resampled at uniform arc
// length and pulled back onto d_i = d_j with exact distances.

#include "env.hpp"
#include "error.hpp"
#include "geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace gvgcov
{
    /// Lower bound applied to tube half-widths; node samples sit on the cell's
    /// lateral boundary and would otherwise report zero.
    inline constexpr double kMinClearance = 1e-9;
    /// Jacobian floor: r-ranges are clipped so that 1 - r*kappa stays above it.
    inline constexpr double kJacobianFloor = 1e-6;

    struct GvgNode
    {
        Point position;
        double radius = 0.0;
        std::vector<std::size_t> defining_obstacles;
        std::vector<Point> closest_points;
        std::vector<std::size_t> incident_edges;
    };

    struct EdgeSample
    {
        double s = 0.0;
        Point position;
        Vec2 tangent;
        Vec2 normal;
        /// Signed so that d(tangent)/ds = curvature * normal.
        double curvature = 0.0;
        double clearance = 0.0;
        double eps_plus = 0.0;
        double eps_minus = 0.0;
    };

    struct GvgEdge
    {
        std::size_t id = 0;
        std::pair<std::size_t, std::size_t> obstacle_pair;
        std::vector<EdgeSample> samples;
        double length = 0.0;
        /// Node ids at s = 0 and s = L; empty for a boundary terminus.
        std::array<std::optional<std::size_t>, 2> endpoint_nodes;
        /// Closed loops (an obstacle ringed by a single edge) repeat the first
        /// sample at s = L.
        bool closed = false;
    };

    struct GvgCell
    {
        std::size_t id = 0;
        std::size_t edge = 0;
        double mass = 0.0;
        std::vector<std::size_t> neighbor_cells;
    };

    struct GvgGraph
    {
        std::vector<GvgNode> nodes;
        std::vector<GvgEdge> edges;
        std::vector<GvgCell> cells;
        double grid_resolution = 1.0;
        double total_mass = 0.0;
        std::vector<std::string> warnings;
    };

    // ---- frames and tube coordinates --------------------------------------

    /// Interpolated state of an edge at arc length s.
    struct EdgeFrame
    {
        Point position;
        Vec2 tangent;
        Vec2 normal;
        double curvature = 0.0;
        double eps_plus = 0.0;
        double eps_minus = 0.0;
    };

    namespace detail
    {
        /// Index k of the sample interval [s_k, s_{k+1}] holding s, and the
        /// fraction t along it.
        inline std::pair<std::size_t, double> locate(const GvgEdge &edge, double s)
        {
            const auto &smp = edge.samples;
            if (smp.size() < 2)
                return {0, 0.0};
            auto it = std::upper_bound(smp.begin(), smp.end(), s,
                                       [](double v, const EdgeSample &e) { return v < e.s; });
            std::size_t k = it == smp.begin() ? 0 : static_cast<std::size_t>(it - smp.begin()) - 1;
            k = std::min(k, smp.size() - 2);
            const double span = smp[k + 1].s - smp[k].s;
            const double t = span > 0.0 ? std::clamp((s - smp[k].s) / span, 0.0, 1.0) : 0.0;
            return {k, t};
        }
    }

    inline EdgeFrame frame_at(const GvgEdge &edge, double s)
    {
        const auto [k, t] = detail::locate(edge, s);
        const EdgeSample &a = edge.samples[k];
        const EdgeSample &b = edge.samples[std::min(k + 1, edge.samples.size() - 1)];
        EdgeFrame f;
        f.position = lerp(a.position, b.position, t);
        f.normal = normalized(lerp(a.normal, b.normal, t));
        f.tangent = rotate_ccw(f.normal);
        f.curvature = a.curvature + t * (b.curvature - a.curvature);
        f.eps_plus = a.eps_plus + t * (b.eps_plus - a.eps_plus);
        f.eps_minus = a.eps_minus + t * (b.eps_minus - a.eps_minus);
        return f;
    }

    /// q(s, r) = gamma(s) + r v(s).
    inline Point frenet_point(const GvgEdge &edge, double s, double r)
    {
        constexpr double tol = 1e-9;
        if (s < -tol || s > edge.length + tol)
            throw Error(ErrorCode::OutOfRange, "frenet_point: s outside [0, L]");
        const EdgeFrame f = frame_at(edge, s);
        if (r > f.eps_plus + tol || r < -f.eps_minus - tol)
            throw Error(ErrorCode::OutOfRange, "frenet_point: r outside the tube");
        return f.position + r * f.normal;
    }

    /// Area element 1 - r kappa(s) of the tube coordinates.
    inline double jacobian(const GvgEdge &edge, double s, double r)
    {
        const double j = 1.0 - r * frame_at(edge, s).curvature;
        if (j <= kJacobianFloor)
            throw Error(ErrorCode::FoldedTube, "jacobian: tube folds over at s=" + std::to_string(s));
        return j;
    }

    /// Admissible offset range at a frame: the tube half-widths clipped so the
    /// Jacobian stays above kJacobianFloor. Returns true when clipping occurred.
    inline bool clipped_offset_range(const EdgeFrame &f, double &r_lo, double &r_hi)
    {
        r_lo = -f.eps_minus;
        r_hi = f.eps_plus;
        bool clipped = false;
        if (f.curvature > 0.0)
        {
            const double lim = (1.0 - kJacobianFloor) / f.curvature;
            if (r_hi > lim)
            {
                r_hi = std::max(lim, r_lo);
                clipped = true;
            }
        }
        else if (f.curvature < 0.0)
        {
            const double lim = (1.0 - kJacobianFloor) / f.curvature;
            if (r_lo < lim)
            {
                r_lo = std::min(lim, r_hi);
                clipped = true;
            }
        }
        return clipped;
    }

    struct TubeCoordinates
    {
        double s = 0.0;
        double r = 0.0;
        /// Distance by which |r| exceeds the local half-width (0 inside).
        double excess = 0.0;
    };

    /// Closest-parameter projection without the tube check: nearest sample,
    /// parabolic refinement, then a bracketed solve of (q - gamma(s)) . tau(s) = 0
    /// against the interpolated frame so that frenet_point inverts it exactly.
    inline TubeCoordinates nearest_on_edge(Point q, const GvgEdge &edge)
    {
        const auto &smp = edge.samples;
        const std::size_t n = smp.size();
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k)
        {
            const double d2 = norm2(q - smp[k].position);
            if (d2 < best_d2)
            {
                best_d2 = d2;
                best = k;
            }
        }

        auto g = [&](double s) {
            const EdgeFrame f = frame_at(edge, s);
            return dot(q - f.position, f.tangent);
        };

        double lo = smp[best > 0 ? best - 1 : 0].s;
        double hi = smp[std::min(best + 1, n - 1)].s;
        if (edge.closed && (best == 0 || best == n - 1))
        {
            // Seam of a loop: look on whichever side the point falls.
            const std::size_t k0 = best == 0 ? 0 : n - 1;
            if (k0 == 0 && g(0.0) < 0.0)
            {
                lo = smp[n - 2].s;
                hi = smp[n - 1].s;
            }
            else if (k0 == n - 1 && g(edge.length) > 0.0)
            {
                lo = smp[0].s;
                hi = smp[1].s;
            }
        }

        double s = smp[best].s;
        // Parabolic estimate through the three squared distances.
        if (best > 0 && best + 1 < n)
        {
            const double d0 = norm2(q - smp[best - 1].position);
            const double d1 = best_d2;
            const double d2 = norm2(q - smp[best + 1].position);
            const double h0 = smp[best].s - smp[best - 1].s;
            const double h1 = smp[best + 1].s - smp[best].s;
            const double a = ((d2 - d1) / h1 - (d1 - d0) / h0) / (h0 + h1);
            const double b = (d2 - d1) / h1 - a * h1;
            if (a > 0.0)
                s = std::clamp(smp[best].s - b / (2.0 * a), lo, hi);
        }

        double glo = g(lo);
        double ghi = g(hi);
        if (glo >= 0.0 && ghi <= 0.0 && glo != ghi)
        {
            // Illinois regula falsi.
            int side = 0;
            for (int it = 0; it < 100 && hi - lo > 1e-13; ++it)
            {
                const double m = (lo * ghi - hi * glo) / (ghi - glo);
                const double gm = g(m);
                s = m;
                if (gm == 0.0)
                    break;
                if (gm > 0.0)
                {
                    lo = m;
                    glo = gm;
                    if (side == 1)
                        ghi *= 0.5;
                    side = 1;
                }
                else
                {
                    hi = m;
                    ghi = gm;
                    if (side == -1)
                        glo *= 0.5;
                    side = -1;
                }
            }
        }
        else if (!edge.closed && best == 0 && glo < 0.0)
            s = 0.0;
        else if (!edge.closed && best == n - 1 && ghi > 0.0)
            s = edge.length;

        const EdgeFrame f = frame_at(edge, s);
        const double r = dot(q - f.position, f.normal);
        double excess = 0.0;
        if (r > f.eps_plus)
            excess = r - f.eps_plus;
        else if (r < -f.eps_minus)
            excess = -f.eps_minus - r;
        // Tangential residual (beyond an open end) also counts as distance.
        const double along = dot(q - f.position, f.tangent);
        excess = std::hypot(excess, along);
        return {s, r, excess};
    }

    /// Tube coordinates (s, r) of a point inside the edge's tube.
    inline std::pair<double, double> project_to_edge(Point q, const GvgEdge &edge, double tolerance = 1e-6)
    {
        const TubeCoordinates tc = nearest_on_edge(q, edge);
        if (tc.excess > tolerance)
            throw Error(ErrorCode::OutsideTube, "project_to_edge: point lies outside the tube of edge " +
                                                    std::to_string(edge.id));
        return {tc.s, tc.r};
    }

    /// Builds a fully framed edge from an ordered polyline: arc length from
    /// chord sums, central-difference tangents, three-point curvature with a
    /// five-sample moving average. Half-widths are supplied by the caller.
    /// Closed polylines repeat their first point at the end.
    inline GvgEdge make_edge(const std::vector<Point> &points, bool closed = false, std::size_t smoothing = 5)
    {
        if (points.size() < 2)
            throw Error(ErrorCode::InvalidInput, "make_edge: need at least two points");
        GvgEdge e;
        e.closed = closed;
        const std::size_t n = points.size();
        e.samples.resize(n);
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            if (k > 0)
                s += distance(points[k - 1], points[k]);
            e.samples[k].s = s;
            e.samples[k].position = points[k];
        }
        e.length = s;

        // Ring indexing for loops skips the duplicated closing point.
        const std::size_t m = closed ? n - 1 : n;
        auto prev = [&](std::size_t k) -> std::optional<std::size_t> {
            if (k > 0)
                return k - 1;
            if (closed)
                return m - 1;
            return std::nullopt;
        };
        auto next = [&](std::size_t k) -> std::optional<std::size_t> {
            if (k + 1 < m)
                return k + 1;
            if (closed)
                return 0;
            return std::nullopt;
        };

        std::vector<double> raw(m, 0.0);
        for (std::size_t k = 0; k < m; ++k)
        {
            const auto p = prev(k);
            const auto q = next(k);
            const Point a = p ? points[*p] : points[k];
            const Point b = q ? points[*q] : points[k];
            Vec2 t = normalized(b - a);
            e.samples[k].tangent = t;
            e.samples[k].normal = rotate_cw(t);
            if (p && q)
                raw[k] = -three_point_curvature(points[*p], points[k], points[*q]);
        }
        if (!closed && m >= 3)
        {
            raw.front() = raw[1];
            raw.back() = raw[m - 2];
        }
        const long half = static_cast<long>(smoothing / 2);
        for (std::size_t k = 0; k < m; ++k)
        {
            double acc = 0.0;
            int cnt = 0;
            for (long d = -half; d <= half; ++d)
            {
                long idx = static_cast<long>(k) + d;
                if (closed)
                    idx = ((idx % static_cast<long>(m)) + static_cast<long>(m)) % static_cast<long>(m);
                else if (idx < 0 || idx >= static_cast<long>(m))
                    continue;
                acc += raw[static_cast<std::size_t>(idx)];
                ++cnt;
            }
            e.samples[k].curvature = cnt ? acc / cnt : 0.0;
        }
        if (closed)
        {
            const double end_s = e.samples.back().s;
            e.samples.back() = e.samples.front();
            e.samples.back().s = end_s;
        }
        return e;
    }

    /// Straight-edge helper used by tests and examples.
    inline GvgEdge make_straight_edge(Point start, Vec2 direction, double length, double spacing, double eps_plus,
                                      double eps_minus)
    {
        const Vec2 t = normalized(direction);
        const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(length / spacing)));
        std::vector<Point> pts;
        for (std::size_t k = 0; k <= n; ++k)
            pts.push_back(start + (length * static_cast<double>(k) / static_cast<double>(n)) * t);
        GvgEdge e = make_edge(pts);
        for (auto &smp : e.samples)
        {
            smp.s = length * (smp.s / e.length);
            smp.tangent = t;
            smp.normal = rotate_cw(t);
            smp.curvature = 0.0;
            smp.eps_plus = eps_plus;
            smp.eps_minus = eps_minus;
            smp.clearance = std::min(eps_plus, eps_minus);
        }
        e.length = length;
        return e;
    }

    // ---- tube quadrature ---------------------------------------------------

    /// One cross-section of the tube: quadrature points across r with weights
    /// w * phi * (1 - r kappa) and the moments the coverage controller needs.
    struct TubeSection
    {
        double s = 0.0;
        Point gamma;
        Vec2 normal;
        double r_lo = 0.0;
        double r_hi = 0.0;
        std::vector<Point> points;
        std::vector<double> weights;
        /// Projected density: integral of phi (1 - r kappa) dr.
        double mass = 0.0;
        /// Integral of r phi (1 - r kappa) dr.
        double first_r = 0.0;
        /// Integral of q phi (1 - r kappa) dr.
        Vec2 first_q;
        /// Integral of |q|^2 phi (1 - r kappa) dr.
        double second_q = 0.0;
    };

    /// Cross-sections on the edge's sample grid, each interval uniformly split
    /// into `refine` pieces, with `n_r` trapezoid intervals across the tube.
    /// Quantities between sections are integrated as piecewise linear in s.
    struct TubeTable
    {
        std::vector<TubeSection> sections;
        std::size_t clipped = 0;

        double total_mass() const
        {
            double m = 0.0;
            for (std::size_t k = 0; k + 1 < sections.size(); ++k)
                m += 0.5 * (sections[k].mass + sections[k + 1].mass) * (sections[k + 1].s - sections[k].s);
            return m;
        }
    };

    inline TubeSection make_section(const GvgEdge &edge, double s, const DensityField &field, std::size_t n_r,
                                    bool *clipped = nullptr)
    {
        const EdgeFrame f = frame_at(edge, s);
        TubeSection sec;
        sec.s = s;
        sec.gamma = f.position;
        sec.normal = f.normal;
        const bool c = clipped_offset_range(f, sec.r_lo, sec.r_hi);
        if (clipped)
            *clipped = c;
        const double dr = (sec.r_hi - sec.r_lo) / static_cast<double>(n_r);
        sec.points.reserve(n_r + 1);
        sec.weights.reserve(n_r + 1);
        for (std::size_t k = 0; k <= n_r; ++k)
        {
            const double r = sec.r_lo + dr * static_cast<double>(k);
            const double w = (k == 0 || k == n_r) ? 0.5 * dr : dr;
            const Point q = f.position + r * f.normal;
            const double wt = w * density(q, field) * (1.0 - r * f.curvature);
            sec.points.push_back(q);
            sec.weights.push_back(wt);
            sec.mass += wt;
            sec.first_r += wt * r;
            sec.first_q += wt * q;
            sec.second_q += wt * norm2(q);
        }
        return sec;
    }

    inline TubeTable build_tube_table(const GvgEdge &edge, const DensityField &field, std::size_t refine,
                                      std::size_t n_r)
    {
        if (refine == 0 || n_r == 0)
            throw Error(ErrorCode::InvalidInput, "build_tube_table: refine and n_r must be positive");
        TubeTable table;
        const auto &smp = edge.samples;
        for (std::size_t k = 0; k + 1 < smp.size(); ++k)
        {
            for (std::size_t m = 0; m < refine; ++m)
            {
                const double s = smp[k].s + (smp[k + 1].s - smp[k].s) * static_cast<double>(m) /
                                                static_cast<double>(refine);
                bool clipped = false;
                table.sections.push_back(make_section(edge, s, field, n_r, &clipped));
                table.clipped += clipped ? 1 : 0;
            }
        }
        bool clipped = false;
        table.sections.push_back(make_section(edge, edge.length, field, n_r, &clipped));
        table.clipped += clipped ? 1 : 0;
        return table;
    }

    /// Integral over [a, b] of a per-section quantity, linearly interpolated
    /// between sections.
    template <class Value, class Get>
    Value integrate_sections(const TubeTable &table, double a, double b, Get get)
    {
        Value acc{};
        const auto &sec = table.sections;
        if (sec.size() < 2 || b <= a)
            return acc;
        auto it = std::upper_bound(sec.begin(), sec.end(), a, [](double v, const TubeSection &t) { return v < t.s; });
        std::size_t k = it == sec.begin() ? 0 : static_cast<std::size_t>(it - sec.begin()) - 1;
        for (; k + 1 < sec.size(); ++k)
        {
            const double s0 = sec[k].s;
            const double s1 = sec[k + 1].s;
            if (s0 >= b)
                break;
            const double lo = std::max(a, s0);
            const double hi = std::min(b, s1);
            if (hi <= lo)
                continue;
            const double span = s1 - s0;
            const Value v0 = get(sec[k]);
            const Value v1 = get(sec[k + 1]);
            const double t0 = (lo - s0) / span;
            const double t1 = (hi - s0) / span;
            const Value f0 = v0 + t0 * (v1 - v0);
            const Value f1 = v0 + t1 * (v1 - v0);
            acc += 0.5 * (hi - lo) * (f0 + f1);
        }
        return acc;
    }

    // ---- extraction --------------------------------------------------------

    namespace detail
    {
        struct Crossing
        {
            Point position;
            std::size_t a = 0;
            std::size_t b = 0;
            bool valid = false;
            std::array<long, 2> links{-1, -1};
        };

        struct Chain
        {
            std::size_t a = 0;
            std::size_t b = 0;
            std::vector<Point> points;
            bool closed = false;
        };

        inline std::size_t nearest_label(Point q, const World &world)
        {
            std::size_t best = 0;
            double bd = signed_distance(q, 0, world);
            for (std::size_t k = 1; k < world.obstacle_count(); ++k)
            {
                const double d = signed_distance(q, k, world);
                if (d < bd - kTieTolerance)
                {
                    bd = d;
                    best = k;
                }
            }
            return best;
        }

        inline double polygon_gap(const Polygon &p, const Polygon &q)
        {
            double best = std::numeric_limits<double>::infinity();
            for (const Point &v : p.vertices())
                best = std::min(best, q.closest(v).distance);
            for (const Point &v : q.vertices())
                best = std::min(best, p.closest(v).distance);
            return best;
        }

        /// Smallest distance between two distinct boundaries of the world.
        inline double narrowest_gap(const World &world)
        {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < world.obstacle_count(); ++i)
                for (std::size_t j = i + 1; j < world.obstacle_count(); ++j)
                    best = std::min(best, polygon_gap(world.obstacle(i), world.obstacle(j)));
            return best;
        }

        /// Third obstacle strictly closer than the pair distance, if any.
        inline bool dominated(Point q, std::size_t a, std::size_t b, double d, const World &world, double tol)
        {
            for (std::size_t k = 0; k < world.obstacle_count(); ++k)
                if (k != a && k != b && distance_to_obstacle(q, k, world).distance < d - tol)
                    return true;
            return false;
        }

        /// Pulls q onto d_a = d_b along the gradient of the difference.
        inline Point project_to_bisector(Point q, std::size_t a, std::size_t b, const World &world)
        {
            for (int it = 0; it < 30; ++it)
            {
                const ClosestPoint ca = distance_to_obstacle(q, a, world);
                const ClosestPoint cb = distance_to_obstacle(q, b, world);
                const double f = ca.distance - cb.distance;
                if (std::abs(f) < 1e-11)
                    break;
                if (ca.distance <= 0.0 || cb.distance <= 0.0)
                    break;
                const Vec2 g = (q - ca.point) / ca.distance - (q - cb.point) / cb.distance;
                const double g2 = norm2(g);
                if (g2 < 1e-20)
                    break;
                q -= (f / g2) * g;
            }
            return q;
        }

        struct NodeSolve
        {
            Point position;
            double radius = 0.0;
        };

        inline std::optional<NodeSolve> solve_node(const World &world, std::array<std::size_t, 3> tri, Point seed,
                                                   double max_travel)
        {
            Point q = seed;
            for (int it = 0; it < 60; ++it)
            {
                std::array<ClosestPoint, 3> c;
                for (int m = 0; m < 3; ++m)
                    c[m] = distance_to_obstacle(q, tri[m], world);
                if (c[0].distance <= 0.0 || c[1].distance <= 0.0 || c[2].distance <= 0.0)
                    return std::nullopt;
                const double f1 = c[0].distance - c[1].distance;
                const double f2 = c[0].distance - c[2].distance;
                if (std::max(std::abs(f1), std::abs(f2)) < 1e-12)
                    break;
                std::array<Vec2, 3> g;
                for (int m = 0; m < 3; ++m)
                    g[m] = (q - c[m].point) / c[m].distance;
                const Vec2 r1 = g[0] - g[1];
                const Vec2 r2 = g[0] - g[2];
                const double det = cross(r1, r2);
                if (std::abs(det) < 1e-14)
                    return std::nullopt;
                // Solve [r1; r2] dq = [f1; f2].
                Vec2 step{(f1 * r2.y - f2 * r1.y) / det, (r1.x * f2 - r2.x * f1) / det};
                const double len = norm(step);
                if (len > max_travel)
                    step *= max_travel / len;
                q -= step;
                if (distance(q, seed) > 2.0 * max_travel)
                    return std::nullopt;
            }
            if (!contains(q, world))
                return std::nullopt;
            std::array<double, 3> d{};
            for (int m = 0; m < 3; ++m)
                d[m] = distance_to_obstacle(q, tri[m], world).distance;
            const double mean = (d[0] + d[1] + d[2]) / 3.0;
            for (double v : d)
                if (std::abs(v - mean) > 1e-8)
                    return std::nullopt;
            for (std::size_t k = 0; k < world.obstacle_count(); ++k)
                if (k != tri[0] && k != tri[1] && k != tri[2] &&
                    distance_to_obstacle(q, k, world).distance < mean - 1e-7)
                    return std::nullopt;
            if (distance(q, seed) > max_travel)
                return std::nullopt;
            return NodeSolve{q, mean};
        }

        inline std::vector<Point> resample_polyline(const std::vector<Point> &pts, double spacing)
        {
            std::vector<double> cum(pts.size(), 0.0);
            for (std::size_t k = 1; k < pts.size(); ++k)
                cum[k] = cum[k - 1] + distance(pts[k - 1], pts[k]);
            const double len = cum.back();
            const std::size_t n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(len / spacing)));
            std::vector<Point> out;
            out.reserve(n + 1);
            std::size_t seg = 0;
            for (std::size_t k = 0; k <= n; ++k)
            {
                const double s = len * static_cast<double>(k) / static_cast<double>(n);
                while (seg + 2 < pts.size() && cum[seg + 1] < s)
                    ++seg;
                const double span = cum[seg + 1] - cum[seg];
                const double t = span > 0.0 ? std::clamp((s - cum[seg]) / span, 0.0, 1.0) : 0.0;
                out.push_back(lerp(pts[seg], pts[seg + 1], t));
            }
            out.front() = pts.front();
            out.back() = pts.back();
            return out;
        }

        inline double polyline_length(const std::vector<Point> &pts)
        {
            double len = 0.0;
            for (std::size_t k = 1; k < pts.size(); ++k)
                len += distance(pts[k - 1], pts[k]);
            return len;
        }
    }

    /// Lateral boundary segments of a cell: node to each of its closest points,
    /// for both endpoint nodes of the edge.
    inline std::vector<Segment> lateral_segments(const GvgEdge &edge, const std::vector<GvgNode> &nodes)
    {
        std::vector<Segment> segs;
        for (const auto &end : edge.endpoint_nodes)
        {
            if (!end)
                continue;
            const GvgNode &node = nodes.at(*end);
            for (const Point &c : node.closest_points)
                segs.push_back({node.position, c});
        }
        return segs;
    }

    /// Distance along origin + t*dir at which some point of `others` becomes
    /// closer than origin itself.
    inline double nearest_point_reach(Point origin, Vec2 dir, const std::vector<Point> &others)
    {
        double reach = std::numeric_limits<double>::infinity();
        for (const Point &p : others)
        {
            const Vec2 d = p - origin;
            const double along = dot(dir, d);
            const double d2 = norm2(d);
            if (along <= 0.0 || d2 < 1e-24)
                continue;
            reach = std::min(reach, d2 / (2.0 * along));
        }
        return reach;
    }

    /// Fills eps_plus / eps_minus by ray casting along +-v, truncated at the
    /// cell's lateral boundary segments and where another GVG sample becomes
    /// the nearest point of the graph (so tubes do not overlap at concave
    /// bends). `gvg_points` holds every sample of every edge.
    inline void compute_half_widths(GvgEdge &edge, const std::vector<GvgNode> &nodes, const World &world,
                                    const std::vector<Point> &gvg_points = {})
    {
        const std::vector<Segment> lateral = lateral_segments(edge, nodes);
        for (EdgeSample &smp : edge.samples)
        {
            for (int side = 0; side < 2; ++side)
            {
                const Vec2 dir = side == 0 ? smp.normal : -smp.normal;
                double reach = contains(smp.position, world) ? ray_cast(smp.position, dir, world) : 0.0;
                for (const Segment &seg : lateral)
                    if (auto t = ray_segment_hit(smp.position, dir, seg, 0.0); t && *t < reach)
                        reach = *t;
                reach = std::min(reach, nearest_point_reach(smp.position, dir, gvg_points));
                reach = std::max(reach, kMinClearance);
                (side == 0 ? smp.eps_plus : smp.eps_minus) = reach;
            }
        }
    }

    inline GvgGraph extract_gvg(const World &world, double grid_resolution)
    {
        using namespace detail;
        if (!(grid_resolution > 0.0) || !std::isfinite(grid_resolution))
            throw Error(ErrorCode::InvalidInput, "grid_resolution must be positive");
        if (world.obstacle_count() < 2)
        {
            // A single boundary has no equidistant pairs: the graph is empty.
            GvgGraph empty;
            empty.grid_resolution = grid_resolution;
            empty.warnings.push_back("world has no obstacles inside the outer boundary; GVG is empty");
            return empty;
        }
        const double h = grid_resolution;
        const double gap = narrowest_gap(world);
        if (gap < 3.0 * h)
            throw Error(ErrorCode::ResolutionTooCoarse, "narrowest corridor " + std::to_string(gap) +
                                                            " is spanned by fewer than 3 grid cells of size " +
                                                            std::to_string(h));

        GvgGraph graph;
        graph.grid_resolution = h;

        // (1) labels on the grid.
        const BoundingBox box = world.bounds();
        const Point origin = box.lo - Vec2{h, h};
        const std::size_t nx = static_cast<std::size_t>(std::ceil((box.hi.x - box.lo.x) / h)) + 3;
        const std::size_t ny = static_cast<std::size_t>(std::ceil((box.hi.y - box.lo.y) / h)) + 3;
        auto at = [&](std::size_t ix, std::size_t iy) {
            return origin + Vec2{h * static_cast<double>(ix), h * static_cast<double>(iy)};
        };
        std::vector<std::size_t> label(nx * ny);
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t ix = 0; ix < nx; ++ix)
                label[iy * nx + ix] = nearest_label(at(ix, iy), world);

        // (2) equidistance points on label-changing grid edges.
        const std::size_t n_horizontal = (nx - 1) * ny;
        std::vector<long> crossing_of(n_horizontal + nx * (ny - 1), -1);
        std::vector<Crossing> crossings;
        auto horizontal = [&](std::size_t ix, std::size_t iy) { return iy * (nx - 1) + ix; };
        auto vertical = [&](std::size_t ix, std::size_t iy) { return n_horizontal + iy * nx + ix; };
        auto bisect = [&](Point p0, Point p1, std::size_t a, std::size_t b) {
            // f = sd_a - sd_b is <= 0 at p0 (label a) and >= 0 at p1.
            double lo = 0.0, hi = 1.0;
            const double len = distance(p0, p1);
            while ((hi - lo) * len > 1e-6)
            {
                const double mid = 0.5 * (lo + hi);
                const Point m = lerp(p0, p1, mid);
                if (signed_distance(m, a, world) - signed_distance(m, b, world) <= 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
            return lerp(p0, p1, 0.5 * (lo + hi));
        };
        auto add_crossing = [&](std::size_t edge_id, std::size_t v0, std::size_t v1, Point p0, Point p1) {
            const std::size_t a = label[v0], b = label[v1];
            if (a == b)
                return;
            Crossing c;
            c.a = std::min(a, b);
            c.b = std::max(a, b);
            c.position = bisect(p0, p1, a, b);
            const double d = distance_to_obstacle(c.position, c.a, world).distance;
            c.valid = contains(c.position, world) && d > 0.0 && !dominated(c.position, c.a, c.b, d, world, 1e-9);
            crossing_of[edge_id] = static_cast<long>(crossings.size());
            crossings.push_back(c);
        };
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t ix = 0; ix + 1 < nx; ++ix)
                add_crossing(horizontal(ix, iy), iy * nx + ix, iy * nx + ix + 1, at(ix, iy), at(ix + 1, iy));
        for (std::size_t iy = 0; iy + 1 < ny; ++iy)
            for (std::size_t ix = 0; ix < nx; ++ix)
                add_crossing(vertical(ix, iy), iy * nx + ix, (iy + 1) * nx + ix, at(ix, iy), at(ix, iy + 1));

        // (3) marching-squares linking; (4) node seeds from multi-label cells.
        auto link = [&](long e0, long e1) {
            if (e0 < 0 || e1 < 0)
                return;
            Crossing &c0 = crossings[static_cast<std::size_t>(e0)];
            Crossing &c1 = crossings[static_cast<std::size_t>(e1)];
            if (!c0.valid || !c1.valid || c0.a != c1.a || c0.b != c1.b)
                return;
            auto attach = [](Crossing &c, long other) {
                if (c.links[0] < 0)
                    c.links[0] = other;
                else if (c.links[1] < 0)
                    c.links[1] = other;
            };
            attach(c0, e1);
            attach(c1, e0);
        };
        struct NodeSeed
        {
            std::array<std::size_t, 3> tri;
            Point at;
        };
        std::vector<NodeSeed> seeds;
        for (std::size_t cy = 0; cy + 1 < ny; ++cy)
            for (std::size_t cx = 0; cx + 1 < nx; ++cx)
            {
                const std::size_t l00 = label[cy * nx + cx], l10 = label[cy * nx + cx + 1];
                const std::size_t l11 = label[(cy + 1) * nx + cx + 1], l01 = label[(cy + 1) * nx + cx];
                std::set<std::size_t> distinct{l00, l10, l11, l01};
                if (distinct.size() == 1)
                    continue;
                const long bottom = crossing_of[horizontal(cx, cy)];
                const long top = crossing_of[horizontal(cx, cy + 1)];
                const long left = crossing_of[vertical(cx, cy)];
                const long right = crossing_of[vertical(cx + 1, cy)];
                if (distinct.size() >= 3)
                {
                    std::vector<std::size_t> ls(distinct.begin(), distinct.end());
                    const Point centre = at(cx, cy) + Vec2{0.5 * h, 0.5 * h};
                    for (std::size_t i = 0; i < ls.size(); ++i)
                        for (std::size_t j = i + 1; j < ls.size(); ++j)
                            for (std::size_t k = j + 1; k < ls.size(); ++k)
                                seeds.push_back({{ls[i], ls[j], ls[k]}, centre});
                    continue;
                }
                std::vector<long> changed;
                for (long e : {bottom, right, top, left})
                    if (e >= 0)
                        changed.push_back(e);
                if (changed.size() == 2)
                    link(changed[0], changed[1]);
                else if (changed.size() == 4)
                {
                    const Point centre = at(cx, cy) + Vec2{0.5 * h, 0.5 * h};
                    if (nearest_label(centre, world) == l00)
                    {
                        link(bottom, right);
                        link(left, top);
                    }
                    else
                    {
                        link(bottom, left);
                        link(right, top);
                    }
                }
            }

        // Walk chains: open ones from their degree-one ends, then loops.
        std::vector<Chain> chains;
        std::vector<bool> used(crossings.size(), false);
        auto degree = [&](const Crossing &c) { return (c.links[0] >= 0 ? 1 : 0) + (c.links[1] >= 0 ? 1 : 0); };
        auto walk = [&](std::size_t start) {
            Chain ch;
            ch.a = crossings[start].a;
            ch.b = crossings[start].b;
            long prev = -1;
            long cur = static_cast<long>(start);
            while (cur >= 0 && !used[static_cast<std::size_t>(cur)])
            {
                used[static_cast<std::size_t>(cur)] = true;
                const Crossing &c = crossings[static_cast<std::size_t>(cur)];
                ch.points.push_back(c.position);
                long nxt = c.links[0] != prev ? c.links[0] : c.links[1];
                if (nxt == prev)
                    nxt = -1;
                prev = cur;
                cur = nxt;
            }
            if (cur >= 0 && cur == static_cast<long>(start) && ch.points.size() > 2)
                ch.closed = true;
            return ch;
        };
        for (std::size_t k = 0; k < crossings.size(); ++k)
            if (crossings[k].valid && !used[k] && degree(crossings[k]) <= 1)
                chains.push_back(walk(k));
        for (std::size_t k = 0; k < crossings.size(); ++k)
            if (crossings[k].valid && !used[k] && degree(crossings[k]) == 2)
                chains.push_back(walk(k));

        // Node seeds at open chain ends use the next-nearest obstacle.
        auto third_nearest = [&](Point p, std::size_t a, std::size_t b) {
            std::size_t best = a;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < world.obstacle_count(); ++k)
            {
                if (k == a || k == b)
                    continue;
                const double d = distance_to_obstacle(p, k, world).distance;
                if (d < bd)
                {
                    bd = d;
                    best = k;
                }
            }
            return best;
        };
        for (const Chain &ch : chains)
        {
            if (ch.closed || world.obstacle_count() < 3)
                continue;
            for (const Point &end : {ch.points.front(), ch.points.back()})
            {
                std::array<std::size_t, 3> tri{ch.a, ch.b, third_nearest(end, ch.a, ch.b)};
                std::sort(tri.begin(), tri.end());
                seeds.push_back({tri, end});
            }
        }

        for (const NodeSeed &seed : seeds)
        {
            const auto sol = solve_node(world, seed.tri, seed.at, 3.0 * h);
            if (!sol)
                continue;
            bool merged = false;
            for (GvgNode &node : graph.nodes)
            {
                const double sep = distance(node.position, sol->position);
                const bool same_tri = std::includes(node.defining_obstacles.begin(), node.defining_obstacles.end(),
                                                    seed.tri.begin(), seed.tri.end());
                if (sep < 1e-6 || (same_tri && sep < h))
                {
                    for (std::size_t o : seed.tri)
                        if (!std::binary_search(node.defining_obstacles.begin(), node.defining_obstacles.end(), o))
                        {
                            node.defining_obstacles.push_back(o);
                            std::sort(node.defining_obstacles.begin(), node.defining_obstacles.end());
                        }
                    merged = true;
                    break;
                }
            }
            if (!merged)
            {
                GvgNode node;
                node.position = sol->position;
                node.radius = sol->radius;
                node.defining_obstacles.assign(seed.tri.begin(), seed.tri.end());
                graph.nodes.push_back(node);
            }
        }
        for (GvgNode &node : graph.nodes)
        {
            node.closest_points.clear();
            for (std::size_t o : node.defining_obstacles)
                node.closest_points.push_back(distance_to_obstacle(node.position, o, world).point);
        }

        // (5) attach chain ends to nodes, joining broken pieces first.
        const double attach_radius = 4.0 * h;
        auto node_near = [&](Point p, std::size_t a, std::size_t b) -> std::optional<std::size_t> {
            std::optional<std::size_t> best;
            double bd = attach_radius;
            for (std::size_t n = 0; n < graph.nodes.size(); ++n)
            {
                const auto &def = graph.nodes[n].defining_obstacles;
                if (!std::binary_search(def.begin(), def.end(), a) || !std::binary_search(def.begin(), def.end(), b))
                    continue;
                const double d = distance(p, graph.nodes[n].position);
                if (d < bd)
                {
                    bd = d;
                    best = n;
                }
            }
            return best;
        };
        bool joined = true;
        while (joined)
        {
            joined = false;
            for (std::size_t i = 0; i < chains.size() && !joined; ++i)
            {
                if (chains[i].closed)
                    continue;
                for (std::size_t j = i; j < chains.size() && !joined; ++j)
                {
                    if (chains[j].closed || chains[i].a != chains[j].a || chains[i].b != chains[j].b)
                        continue;
                    Chain &ci = chains[i];
                    Chain &cj = chains[j];
                    for (int ei = 0; ei < 2 && !joined; ++ei)
                        for (int ej = 0; ej < 2 && !joined; ++ej)
                        {
                            if (i == j && ei == ej)
                                continue;
                            const Point pi = ei == 0 ? ci.points.front() : ci.points.back();
                            const Point pj = ej == 0 ? cj.points.front() : cj.points.back();
                            if (distance(pi, pj) > 3.0 * h || node_near(pi, ci.a, ci.b) || node_near(pj, cj.a, cj.b))
                                continue;
                            if (i == j)
                            {
                                if (ci.points.size() > 3)
                                    ci.closed = true;
                                joined = true;
                                continue;
                            }
                            if (ei == 0)
                                std::reverse(ci.points.begin(), ci.points.end());
                            if (ej == 1)
                                std::reverse(cj.points.begin(), cj.points.end());
                            ci.points.insert(ci.points.end(), cj.points.begin(), cj.points.end());
                            chains.erase(chains.begin() + static_cast<long>(j));
                            joined = true;
                        }
                }
            }
        }

        // (6) build edges: resample, pull back onto the bisector, frame.
        const double spacing = 0.5 * h;
        for (const Chain &ch : chains)
        {
            std::vector<Point> pts = ch.points;
            std::array<std::optional<std::size_t>, 2> ends{};
            if (ch.closed)
                pts.push_back(pts.front());
            else
            {
                ends[0] = node_near(pts.front(), ch.a, ch.b);
                ends[1] = node_near(pts.back(), ch.a, ch.b);
                if (ends[0])
                    pts.insert(pts.begin(), graph.nodes[*ends[0]].position);
                if (ends[1])
                    pts.push_back(graph.nodes[*ends[1]].position);
                if (ends[0] && ends[1] && *ends[0] == *ends[1] && polyline_length(pts) < 3.0 * h)
                    continue;
            }
            if (pts.size() < 2 || polyline_length(pts) < 1e-9)
                continue;
            for (int pass = 0; pass < 2; ++pass)
            {
                pts = resample_polyline(pts, spacing);
                for (std::size_t k = 0; k < pts.size(); ++k)
                {
                    const bool pinned = (k == 0 && ends[0]) || (k + 1 == pts.size() && ends[1]);
                    if (!pinned)
                        pts[k] = project_to_bisector(pts[k], ch.a, ch.b, world);
                }
                if (ch.closed)
                    pts.back() = pts.front();
            }
            GvgEdge edge = make_edge(pts, ch.closed);
            edge.id = graph.edges.size();
            edge.obstacle_pair = {ch.a, ch.b};
            edge.endpoint_nodes = ends;
            for (EdgeSample &smp : edge.samples)
                smp.clearance = distance_to_obstacle(smp.position, ch.a, world).distance;
            graph.edges.push_back(std::move(edge));
        }
        if (graph.edges.empty())
            throw Error(ErrorCode::DisconnectedFreeSpace, "extract_gvg: no GVG edges found");

        for (GvgEdge &edge : graph.edges)
        {
            for (std::size_t e = 0; e < 2; ++e)
                if (edge.endpoint_nodes[e])
                    graph.nodes[*edge.endpoint_nodes[e]].incident_edges.push_back(edge.id);
            std::vector<Point> own;
            for (const EdgeSample &smp : edge.samples)
                own.push_back(smp.position);
            compute_half_widths(edge, graph.nodes, world, own);
            if (!edge.closed && (!edge.endpoint_nodes[0] || !edge.endpoint_nodes[1]))
                graph.warnings.push_back("edge " + std::to_string(edge.id) + " ends on a boundary terminus");
        }

        // Drop nodes no edge reached and renumber.
        std::vector<long> remap(graph.nodes.size(), -1);
        std::vector<GvgNode> kept;
        for (std::size_t n = 0; n < graph.nodes.size(); ++n)
            if (!graph.nodes[n].incident_edges.empty())
            {
                remap[n] = static_cast<long>(kept.size());
                kept.push_back(graph.nodes[n]);
            }
        graph.nodes = std::move(kept);
        for (GvgEdge &edge : graph.edges)
            for (auto &end : edge.endpoint_nodes)
                if (end)
                    end = static_cast<std::size_t>(remap[*end]);

        // Cells: one per edge, neighbours through shared nodes.
        for (const GvgEdge &edge : graph.edges)
            graph.cells.push_back(GvgCell{edge.id, edge.id, 0.0, {}});
        for (const GvgNode &node : graph.nodes)
            for (std::size_t a : node.incident_edges)
                for (std::size_t b : node.incident_edges)
                    if (a != b)
                        graph.cells[a].neighbor_cells.push_back(b);
        for (GvgCell &cell : graph.cells)
        {
            std::sort(cell.neighbor_cells.begin(), cell.neighbor_cells.end());
            cell.neighbor_cells.erase(std::unique(cell.neighbor_cells.begin(), cell.neighbor_cells.end()),
                                      cell.neighbor_cells.end());
        }
        std::vector<bool> seen(graph.cells.size(), false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        while (!stack.empty())
        {
            const std::size_t c = stack.back();
            stack.pop_back();
            for (std::size_t nb : graph.cells[c].neighbor_cells)
                if (!seen[nb])
                {
                    seen[nb] = true;
                    stack.push_back(nb);
                }
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end())
            throw Error(ErrorCode::DisconnectedFreeSpace, "extract_gvg: cell graph is not connected");
        return graph;
    }

    /// Cell masses by tube quadrature: trapezoid over the edge samples in s and
    /// `quad_points` trapezoid intervals across the (Jacobian-clipped) tube.
    inline void build_cells(GvgGraph &graph, const DensityField &field, std::size_t quad_points = 16)
    {
        graph.total_mass = 0.0;
        for (GvgCell &cell : graph.cells)
        {
            const GvgEdge &edge = graph.edges.at(cell.edge);
            const TubeTable table = build_tube_table(edge, field, 1, quad_points);
            if (table.clipped > 0)
                graph.warnings.push_back("cell " + std::to_string(cell.id) + ": tube clipped at " +
                                         std::to_string(table.clipped) + " cross-sections to keep 1 - r*kappa > 0");
            cell.mass = table.total_mass();
            if (!(cell.mass > 0.0))
                throw Error(ErrorCode::NonpositiveMass, "cell " + std::to_string(cell.id) + " has zero mass");
            graph.total_mass += cell.mass;
        }
    }
}
