#pragma once

// Coverage control inside one GVG cell. Robots are ordered by arc length,
// the edge is cut at midpoints between consecutive robots, and each robot
// descends the locational cost of its own sub-region of the tube.

#include "error.hpp"
#include "gvg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace gvgcov
{
    struct RobotState
    {
        std::size_t id = 0;
        std::size_t cell_id = 0;
        Point position;
        double s = 0.0;
        double delta = 0.0;
    };

    /// Robots of one cell sorted by arc length. `order[j]` indexes the robot
    /// span that produced the partition; robot order[j] owns [bounds[j], bounds[j+1]].
    struct CellPartition
    {
        std::vector<std::size_t> order;
        std::vector<double> bounds;

        std::size_t slot_of(std::size_t robot_index) const
        {
            for (std::size_t j = 0; j < order.size(); ++j)
                if (order[j] == robot_index)
                    return j;
            throw Error(ErrorCode::InvalidInput, "robot is not part of this partition");
        }
    };

    struct Quadrature
    {
        std::size_t n_s = 64;
        std::size_t n_r = 16;

        void validate() const
        {
            if (n_s < 4 || n_r < 4)
                throw Error(ErrorCode::InvalidInput, "quadrature needs n_s >= 4 and n_r >= 4");
        }
    };

    inline CellPartition order_and_boundaries(std::span<const RobotState> robots, const GvgEdge &edge)
    {
        if (robots.empty())
            throw Error(ErrorCode::EmptyCell, "cell " + std::to_string(edge.id) + " has no robots");
        CellPartition p;
        p.order.resize(robots.size());
        std::iota(p.order.begin(), p.order.end(), 0);
        std::sort(p.order.begin(), p.order.end(), [&](std::size_t a, std::size_t b) {
            if (robots[a].s != robots[b].s)
                return robots[a].s < robots[b].s;
            return robots[a].id < robots[b].id;
        });
        p.bounds.reserve(robots.size() + 1);
        p.bounds.push_back(0.0);
        for (std::size_t j = 0; j + 1 < p.order.size(); ++j)
        {
            const double mid = 0.5 * (robots[p.order[j]].s + robots[p.order[j + 1]].s);
            p.bounds.push_back(std::clamp(mid, p.bounds.back(), edge.length));
        }
        p.bounds.push_back(edge.length);
        return p;
    }

    /// Cross-section table for a cell, fine enough that each of `robot_count`
    /// sub-regions sees about n_s sections.
    struct CellTube
    {
        const GvgEdge *edge = nullptr;
        TubeTable table;
    };

    inline CellTube make_cell_tube(const GvgEdge &edge, const DensityField &field, const Quadrature &quad,
                                   std::size_t robot_count)
    {
        quad.validate();
        const std::size_t intervals = edge.samples.size() > 1 ? edge.samples.size() - 1 : 1;
        const std::size_t wanted = quad.n_s * std::max<std::size_t>(robot_count, 1);
        const std::size_t refine = std::max<std::size_t>(1, (wanted + intervals - 1) / intervals);
        return {&edge, build_tube_table(edge, field, refine, quad.n_r)};
    }

    /// Integral of phi (1 - r kappa) across the tube at s.
    inline double projected_density(const GvgEdge &edge, double s, const DensityField &field, const Quadrature &quad)
    {
        if (s < -1e-9 || s > edge.length + 1e-9)
            throw Error(ErrorCode::OutOfRange, "projected_density: s outside [0, L]");
        return make_section(edge, std::clamp(s, 0.0, edge.length), field, quad.n_r).mass;
    }

    /// Sub-region integrals used by the controller and the fast cost path.
    struct SubRegionMoments
    {
        double mass = 0.0;      // integral of phi-hat
        double first_r = 0.0;   // integral of r phi J
        Vec2 gamma;             // integral of gamma(s) phi-hat
        Vec2 normal_r;          // integral of v(s) (r phi J)
        Vec2 first_q;           // integral of q phi J
        double second_q = 0.0;  // integral of |q|^2 phi J

        SubRegionMoments &operator+=(const SubRegionMoments &o)
        {
            mass += o.mass;
            first_r += o.first_r;
            gamma += o.gamma;
            normal_r += o.normal_r;
            first_q += o.first_q;
            second_q += o.second_q;
            return *this;
        }
        friend SubRegionMoments operator+(SubRegionMoments a, const SubRegionMoments &b) { return a += b; }
        friend SubRegionMoments operator-(SubRegionMoments a, const SubRegionMoments &b) { return a += (-1.0) * b; }
        friend SubRegionMoments operator*(double k, SubRegionMoments a)
        {
            a.mass *= k;
            a.first_r *= k;
            a.gamma *= k;
            a.normal_r *= k;
            a.first_q *= k;
            a.second_q *= k;
            return a;
        }
    };

    inline SubRegionMoments sub_region_moments(const CellTube &tube, double a, double b)
    {
        return integrate_sections<SubRegionMoments>(tube.table, a, b, [](const TubeSection &sec) {
            SubRegionMoments m;
            m.mass = sec.mass;
            m.first_r = sec.first_r;
            m.gamma = sec.mass * sec.gamma;
            m.normal_r = sec.first_r * sec.normal;
            m.first_q = sec.first_q;
            m.second_q = sec.second_q;
            return m;
        });
    }

    /// H^i by direct quadrature of |q - p_j|^2 phi (1 - r kappa) over each
    /// sub-region of the given partition.
    inline double cell_cost(std::span<const RobotState> robots, const CellTube &tube, const CellPartition &partition)
    {
        double h = 0.0;
        for (std::size_t j = 0; j < partition.order.size(); ++j)
        {
            const Point p = robots[partition.order[j]].position;
            h += integrate_sections<double>(tube.table, partition.bounds[j], partition.bounds[j + 1],
                                            [p](const TubeSection &sec) {
                                                double v = 0.0;
                                                for (std::size_t k = 0; k < sec.points.size(); ++k)
                                                    v += sec.weights[k] * norm2(sec.points[k] - p);
                                                return v;
                                            });
        }
        return h;
    }

    inline double cell_cost(std::span<const RobotState> robots, const CellTube &tube)
    {
        return cell_cost(robots, tube, order_and_boundaries(robots, *tube.edge));
    }

    /// Same value as cell_cost, expanded through the stored moments:
    /// integral |q - p|^2 = second_q - 2 p . first_q + |p|^2 mass.
    inline double cell_cost_moments(std::span<const RobotState> robots, const CellTube &tube,
                                    const CellPartition &partition)
    {
        double h = 0.0;
        for (std::size_t j = 0; j < partition.order.size(); ++j)
        {
            const Point p = robots[partition.order[j]].position;
            const SubRegionMoments m = sub_region_moments(tube, partition.bounds[j], partition.bounds[j + 1]);
            h += m.second_q - 2.0 * dot(p, m.first_q) + norm2(p) * m.mass;
        }
        return std::max(h, 0.0);
    }

    struct CostSplit
    {
        double tangential = 0.0;
        double normal = 0.0;
    };

    /// H_tan integrates |gamma(s) - p_j^i|^2 phi-hat; H_norm integrates the
    /// remainder |q - p_j|^2 - |gamma(s) - p_j^i|^2 over the cross-sections.
    inline CostSplit cost_decomposition(std::span<const RobotState> robots, const CellTube &tube)
    {
        const CellPartition partition = order_and_boundaries(robots, *tube.edge);
        CostSplit out;
        for (std::size_t j = 0; j < partition.order.size(); ++j)
        {
            const RobotState &rb = robots[partition.order[j]];
            const Point p = rb.position;
            const Point on_edge = frame_at(*tube.edge, rb.s).position;
            const double a = partition.bounds[j];
            const double b = partition.bounds[j + 1];
            out.tangential += integrate_sections<double>(tube.table, a, b, [on_edge](const TubeSection &sec) {
                return norm2(sec.gamma - on_edge) * sec.mass;
            });
            out.normal += integrate_sections<double>(tube.table, a, b, [p, on_edge](const TubeSection &sec) {
                const double base = norm2(sec.gamma - on_edge);
                double v = 0.0;
                for (std::size_t k = 0; k < sec.points.size(); ++k)
                    v += sec.weights[k] * (norm2(sec.points[k] - p) - base);
                return v;
            });
        }
        return out;
    }

    /// u_j = -k_g dH^i/dp_j with the partition held fixed: twice the bracket of
    /// tangential and normal integrals, p_j^i M - int gamma phi-hat minus
    /// int v (r phi J) - delta_j v(s_j) M.
    inline Vec2 control_input(std::span<const RobotState> robots, std::size_t robot_index,
                              const CellPartition &partition, const CellTube &tube, double k_g)
    {
        const std::size_t j = partition.slot_of(robot_index);
        const RobotState &rb = robots[robot_index];
        const SubRegionMoments m = sub_region_moments(tube, partition.bounds[j], partition.bounds[j + 1]);
        const EdgeFrame f = frame_at(*tube.edge, rb.s);
        const Vec2 tangential = m.mass * f.position - m.gamma;
        const Vec2 normal = m.normal_r - rb.delta * m.mass * f.normal;
        return -2.0 * k_g * (tangential - normal);
    }

    struct SubRegionCentroid
    {
        double M_tan = 0.0;
        Point p_tan;
        double M_norm = 0.0;
        double p_norm = 0.0;
    };

    /// Tangential centroid of the sub-region's curve mass and the mean normal
    /// offset of its tube mass. M_norm is taken over the whole sub-region so it
    /// carries the same units as M_tan.
    inline SubRegionCentroid sub_region_centroid(const CellTube &tube, double a, double b)
    {
        const SubRegionMoments m = sub_region_moments(tube, a, b);
        SubRegionCentroid c;
        c.M_tan = m.mass;
        c.M_norm = m.mass;
        if (m.mass > 0.0)
        {
            c.p_tan = m.gamma / m.mass;
            c.p_norm = m.first_r / m.mass;
        }
        return c;
    }

    /// Centroid form of the controller; zero velocity when the sub-region
    /// carries no mass.
    inline Vec2 centroid_control(std::span<const RobotState> robots, std::size_t robot_index,
                                 const CellPartition &partition, const CellTube &tube, double k_g)
    {
        const std::size_t j = partition.slot_of(robot_index);
        const RobotState &rb = robots[robot_index];
        const SubRegionCentroid c = sub_region_centroid(tube, partition.bounds[j], partition.bounds[j + 1]);
        if (!(c.M_tan > 0.0))
            return {};
        const EdgeFrame f = frame_at(*tube.edge, rb.s);
        return -2.0 * k_g * (c.M_tan * (f.position - c.p_tan) + c.M_norm * (rb.delta - c.p_norm) * f.normal);
    }

    /// Sum of per-cell costs times `scale`. `robots_by_cell[i]` holds the robots
    /// of tubes[i].
    inline double total_cost(std::span<const CellTube> tubes, const std::vector<std::vector<RobotState>> &robots_by_cell,
                             double scale = 1.0)
    {
        double h = 0.0;
        for (std::size_t i = 0; i < tubes.size(); ++i)
        {
            const auto &rs = robots_by_cell.at(i);
            h += cell_cost_moments(rs, tubes[i], order_and_boundaries(rs, *tubes[i].edge));
        }
        return scale * h;
    }
}
