#pragma once

// Polygonal world model: outer boundary plus obstacle holes, exact distance
// queries against each obstacle, free-space membership, ray casting and the
// density fields that weight the coverage problem.

#include "error.hpp"
#include "geometry.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace gvgcov
{
    /// Absolute tolerance used when comparing obstacle distances.
    inline constexpr double kTieTolerance = 1e-9;

    enum class PolygonRole
    {
        OuterBoundary,
        Obstacle,
    };

    class Polygon
    {
    public:
        Polygon() = default;

        /// Normalizes orientation: counterclockwise for the outer boundary,
        /// clockwise for obstacles. Throws InvalidInput on fewer than three
        /// vertices, zero area or self-intersection.
        Polygon(std::vector<Point> vertices, PolygonRole role) : vertices_(std::move(vertices)), role_(role)
        {
            if (vertices_.size() < 3)
                throw Error(ErrorCode::InvalidInput, "polygon needs at least 3 vertices");
            for (const Point &p : vertices_)
                if (!std::isfinite(p.x) || !std::isfinite(p.y))
                    throw Error(ErrorCode::InvalidInput, "polygon vertex is not finite");
            const double area = signed_area(vertices_);
            if (std::abs(area) <= 0.0)
                throw Error(ErrorCode::InvalidInput, "polygon has zero area");
            const bool ccw = area > 0.0;
            if ((role_ == PolygonRole::OuterBoundary) != ccw)
                std::reverse(vertices_.begin(), vertices_.end());
            check_simple();
        }

        const std::vector<Point> &vertices() const noexcept { return vertices_; }
        PolygonRole role() const noexcept { return role_; }
        std::size_t size() const noexcept { return vertices_.size(); }
        Segment edge(std::size_t k) const noexcept { return {vertices_[k], vertices_[(k + 1) % vertices_.size()]}; }
        double area() const noexcept { return std::abs(signed_area(vertices_)); }

        /// Closest point on the boundary curve.
        ClosestPoint closest(Point q) const noexcept
        {
            ClosestPoint best;
            for (std::size_t k = 0; k < vertices_.size(); ++k)
            {
                const ClosestPoint c = closest_on_segment(q, edge(k));
                if (c.distance < best.distance)
                    best = c;
            }
            return best;
        }

        bool encloses(Point q) const noexcept { return point_in_ring(q, vertices_); }

    private:
        void check_simple() const
        {
            const std::size_t n = vertices_.size();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j)
                {
                    const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
                    if (adjacent)
                        continue;
                    if (segments_intersect(edge(i), edge(j)))
                        throw Error(ErrorCode::InvalidInput, "polygon edges " + std::to_string(i) + " and " +
                                                                 std::to_string(j) + " intersect");
                }
        }

        std::vector<Point> vertices_;
        PolygonRole role_ = PolygonRole::Obstacle;
    };

    struct BoundingBox
    {
        Point lo;
        Point hi;
    };

    /// Index 0 is the outer boundary, indices 1..M are the holes. The outer
    /// boundary is itself treated as an obstacle when measuring distances.
    class World
    {
    public:
        World() = default;

        World(std::vector<Point> outer, std::vector<std::vector<Point>> holes)
        {
            polygons_.emplace_back(std::move(outer), PolygonRole::OuterBoundary);
            for (auto &h : holes)
                polygons_.emplace_back(std::move(h), PolygonRole::Obstacle);
            validate();
        }

        std::size_t obstacle_count() const noexcept { return polygons_.size(); }
        const Polygon &outer() const noexcept { return polygons_.front(); }
        const Polygon &obstacle(std::size_t i) const { return polygons_.at(i); }
        const std::vector<Polygon> &polygons() const noexcept { return polygons_; }

        BoundingBox bounds() const noexcept
        {
            BoundingBox b{outer().vertices().front(), outer().vertices().front()};
            for (const Point &p : outer().vertices())
            {
                b.lo.x = std::min(b.lo.x, p.x);
                b.lo.y = std::min(b.lo.y, p.y);
                b.hi.x = std::max(b.hi.x, p.x);
                b.hi.y = std::max(b.hi.y, p.y);
            }
            return b;
        }

        double free_area() const noexcept
        {
            double a = outer().area();
            for (std::size_t i = 1; i < polygons_.size(); ++i)
                a -= polygons_[i].area();
            return a;
        }

    private:
        void validate() const
        {
            const std::size_t n = polygons_.size();
            for (std::size_t i = 1; i < n; ++i)
            {
                for (const Point &p : polygons_[i].vertices())
                    if (!outer().encloses(p))
                        throw Error(ErrorCode::InvalidInput,
                                    "obstacle " + std::to_string(i) + " is not strictly inside the outer boundary");
                for (std::size_t j = 0; j < n; ++j)
                {
                    if (j == i)
                        continue;
                    for (std::size_t a = 0; a < polygons_[i].size(); ++a)
                        for (std::size_t b = 0; b < polygons_[j].size(); ++b)
                            if (segments_intersect(polygons_[i].edge(a), polygons_[j].edge(b)))
                                throw Error(ErrorCode::InvalidInput, "obstacle " + std::to_string(i) +
                                                                         " touches polygon " + std::to_string(j));
                    if (j > 0 && polygons_[j].encloses(polygons_[i].vertices().front()))
                        throw Error(ErrorCode::InvalidInput, "obstacle " + std::to_string(i) +
                                                                 " lies inside obstacle " + std::to_string(j));
                }
            }
        }

        std::vector<Polygon> polygons_;
    };

    /// d_i(q) and the boundary point of obstacle i realizing it.
    inline ClosestPoint distance_to_obstacle(Point q, std::size_t i, const World &world)
    {
        return world.obstacle(i).closest(q);
    }

    /// Distance to obstacle i, negated when q lies inside the obstacle (or
    /// outside the outer boundary for i = 0).
    inline double signed_distance(Point q, std::size_t i, const World &world)
    {
        const Polygon &poly = world.obstacle(i);
        const double d = poly.closest(q).distance;
        const bool inside = poly.encloses(q);
        const bool blocked = poly.role() == PolygonRole::OuterBoundary ? !inside : inside;
        return blocked ? -d : d;
    }

    /// Unit vector from the closest obstacle point towards q.
    inline Vec2 distance_gradient(Point q, std::size_t i, const World &world)
    {
        const ClosestPoint c = distance_to_obstacle(q, i, world);
        if (c.distance <= kTieTolerance)
            throw Error(ErrorCode::DegeneratePoint, "gradient undefined on the boundary of obstacle " +
                                                        std::to_string(i));
        return (q - c.point) / c.distance;
    }

    inline bool contains(Point q, const World &world)
    {
        if (!world.outer().encloses(q))
            return false;
        for (std::size_t i = 1; i < world.obstacle_count(); ++i)
            if (world.obstacle(i).encloses(q))
                return false;
        return true;
    }

    struct ObstacleDistance
    {
        std::size_t index = 0;
        double distance = 0.0;
    };

    /// Two closest obstacles to a free-space point, closer first; distances
    /// within kTieTolerance count as ties and go to the lower index.
    inline std::pair<ObstacleDistance, ObstacleDistance> two_nearest_obstacles(Point q, const World &world)
    {
        if (!contains(q, world))
            throw Error(ErrorCode::OutsideFreeSpace, "two_nearest_obstacles: point outside free space");
        auto before = [](const ObstacleDistance &a, const ObstacleDistance &b) {
            if (std::abs(a.distance - b.distance) <= kTieTolerance)
                return a.index < b.index;
            return a.distance < b.distance;
        };
        ObstacleDistance first{0, distance_to_obstacle(q, 0, world).distance};
        ObstacleDistance second{1, distance_to_obstacle(q, 1, world).distance};
        if (before(second, first))
            std::swap(first, second);
        for (std::size_t k = 2; k < world.obstacle_count(); ++k)
        {
            const ObstacleDistance cand{k, distance_to_obstacle(q, k, world).distance};
            if (before(cand, first))
            {
                second = first;
                first = cand;
            }
            else if (before(cand, second))
                second = cand;
        }
        return {first, second};
    }

    /// Distance along the ray to the first boundary crossing of any polygon.
    inline double ray_cast(Point origin, Vec2 direction, const World &world)
    {
        if (!contains(origin, world))
            throw Error(ErrorCode::OutsideFreeSpace, "ray_cast: origin outside free space");
        double best = std::numeric_limits<double>::infinity();
        for (const Polygon &poly : world.polygons())
            for (std::size_t k = 0; k < poly.size(); ++k)
                if (auto t = ray_segment_hit(origin, direction, poly.edge(k)); t && *t > 0.0 && *t < best)
                    best = *t;
        return best;
    }

    // ---- density fields -------------------------------------------------

    struct UniformDensity
    {
        double value = 1.0;
    };

    /// phi(q) = offset + scale * |q - center|^2
    struct QuadraticRadialDensity
    {
        Point center;
        double scale = 1.0;
        double offset = 0.0;
    };

    struct GaussianBump
    {
        Point center;
        double sigma = 1.0;
        double weight = 1.0;
    };

    /// phi(q) = offset + sum_k w_k exp(-|q - c_k|^2 / (2 sigma_k^2))
    struct GaussianMixtureDensity
    {
        std::vector<GaussianBump> components;
        double offset = 0.0;
    };

    using DensityField = std::variant<UniformDensity, QuadraticRadialDensity, GaussianMixtureDensity>;

    inline double density(Point q, const DensityField &field)
    {
        struct Eval
        {
            Point q;
            double operator()(const UniformDensity &f) const { return f.value; }
            double operator()(const QuadraticRadialDensity &f) const { return f.offset + f.scale * norm2(q - f.center); }
            double operator()(const GaussianMixtureDensity &f) const
            {
                double v = f.offset;
                for (const GaussianBump &g : f.components)
                    v += g.weight * std::exp(-norm2(q - g.center) / (2.0 * g.sigma * g.sigma));
                return v;
            }
        };
        return std::visit(Eval{q}, field);
    }

    inline void validate_density(const DensityField &field)
    {
        struct Check
        {
            void operator()(const UniformDensity &f) const
            {
                if (!(f.value >= 0.0) || !std::isfinite(f.value))
                    throw Error(ErrorCode::InvalidInput, "uniform density must be finite and >= 0");
            }
            void operator()(const QuadraticRadialDensity &f) const
            {
                if (!(f.scale >= 0.0) || !(f.offset >= 0.0) || !std::isfinite(f.scale) || !std::isfinite(f.offset))
                    throw Error(ErrorCode::InvalidInput, "quadratic density needs finite scale >= 0 and offset >= 0");
            }
            void operator()(const GaussianMixtureDensity &f) const
            {
                if (!(f.offset >= 0.0))
                    throw Error(ErrorCode::InvalidInput, "gaussian mixture offset must be >= 0");
                for (const GaussianBump &g : f.components)
                    if (!(g.weight >= 0.0) || !(g.sigma > 0.0))
                        throw Error(ErrorCode::InvalidInput, "gaussian components need weight >= 0, sigma > 0");
            }
        };
        std::visit(Check{}, field);
    }
}
