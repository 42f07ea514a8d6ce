#pragma once

// Small planar geometry kernel: a value-type 2-D vector plus the segment and
// polygon primitives used by the world model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace gvgcov
{
    struct Vec2
    {
        double x = 0.0;
        double y = 0.0;

        constexpr Vec2 &operator+=(Vec2 o) noexcept { x += o.x; y += o.y; return *this; }
        constexpr Vec2 &operator-=(Vec2 o) noexcept { x -= o.x; y -= o.y; return *this; }
        constexpr Vec2 &operator*=(double k) noexcept { x *= k; y *= k; return *this; }

        friend constexpr Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
        friend constexpr Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
        friend constexpr Vec2 operator-(Vec2 a) noexcept { return {-a.x, -a.y}; }
        friend constexpr Vec2 operator*(double k, Vec2 a) noexcept { return {k * a.x, k * a.y}; }
        friend constexpr Vec2 operator*(Vec2 a, double k) noexcept { return {k * a.x, k * a.y}; }
        friend constexpr Vec2 operator/(Vec2 a, double k) noexcept { return {a.x / k, a.y / k}; }
        friend constexpr bool operator==(Vec2 a, Vec2 b) noexcept = default;
    };

    using Point = Vec2;

    constexpr double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
    constexpr double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }
    inline double norm(Vec2 a) noexcept { return std::hypot(a.x, a.y); }
    constexpr double norm2(Vec2 a) noexcept { return dot(a, a); }
    inline double distance(Vec2 a, Vec2 b) noexcept { return norm(a - b); }
    constexpr Vec2 lerp(Vec2 a, Vec2 b, double t) noexcept { return a + t * (b - a); }

    inline Vec2 normalized(Vec2 a) noexcept
    {
        const double n = norm(a);
        return n > 0.0 ? a / n : Vec2{};
    }

    /// Clockwise quarter turn, R = [[0, 1], [-1, 0]]: maps a tangent onto the
    /// normal used for tube coordinates.
    constexpr Vec2 rotate_cw(Vec2 a) noexcept { return {a.y, -a.x}; }
    constexpr Vec2 rotate_ccw(Vec2 a) noexcept { return {-a.y, a.x}; }

    struct Segment
    {
        Point a;
        Point b;
    };

    struct ClosestPoint
    {
        double distance = std::numeric_limits<double>::infinity();
        Point point;
    };

    inline ClosestPoint closest_on_segment(Point q, const Segment &seg) noexcept
    {
        const Vec2 d = seg.b - seg.a;
        const double len2 = norm2(d);
        double t = len2 > 0.0 ? dot(q - seg.a, d) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const Point c = seg.a + t * d;
        return {distance(q, c), c};
    }

    /// Ray parameter of the first crossing of origin + t*dir with the segment,
    /// t >= t_min. Parallel overlaps are ignored.
    inline std::optional<double> ray_segment_hit(Point origin, Vec2 dir, const Segment &seg,
                                                 double t_min = 0.0) noexcept
    {
        const Vec2 e = seg.b - seg.a;
        const double denom = cross(dir, e);
        if (std::abs(denom) < 1e-300)
            return std::nullopt;
        const Vec2 w = seg.a - origin;
        const double t = cross(w, e) / denom;
        const double u = cross(w, dir) / denom;
        constexpr double slack = 1e-12;
        if (u < -slack || u > 1.0 + slack || t < t_min)
            return std::nullopt;
        return t;
    }

    /// Signed area; positive for counterclockwise vertex order.
    inline double signed_area(std::span<const Point> ring) noexcept
    {
        double a = 0.0;
        const std::size_t n = ring.size();
        for (std::size_t i = 0; i < n; ++i)
            a += cross(ring[i], ring[(i + 1) % n]);
        return 0.5 * a;
    }

    /// Even-odd crossing test. Points exactly on the boundary may land either way.
    inline bool point_in_ring(Point q, std::span<const Point> ring) noexcept
    {
        bool inside = false;
        const std::size_t n = ring.size();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++)
        {
            const Point &a = ring[i];
            const Point &b = ring[j];
            if ((a.y > q.y) != (b.y > q.y))
            {
                const double xc = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if (q.x < xc)
                    inside = !inside;
            }
        }
        return inside;
    }

    inline bool segments_intersect(const Segment &s, const Segment &t) noexcept
    {
        auto orient = [](Point a, Point b, Point c) { return cross(b - a, c - a); };
        const double d1 = orient(t.a, t.b, s.a);
        const double d2 = orient(t.a, t.b, s.b);
        const double d3 = orient(s.a, s.b, t.a);
        const double d4 = orient(s.a, s.b, t.b);
        if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
            return true;
        auto on_seg = [](Point a, Point b, Point c) {
            return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
                   c.y <= std::max(a.y, b.y);
        };
        if (d1 == 0 && on_seg(t.a, t.b, s.a)) return true;
        if (d2 == 0 && on_seg(t.a, t.b, s.b)) return true;
        if (d3 == 0 && on_seg(s.a, s.b, t.a)) return true;
        if (d4 == 0 && on_seg(s.a, s.b, t.b)) return true;
        return false;
    }

    /// Radius of the circle through three points, signed positive for a left
    /// (counterclockwise) turn a -> b -> c. Returns curvature (1/radius); zero
    /// for collinear or repeated points.
    inline double three_point_curvature(Point a, Point b, Point c) noexcept
    {
        const double ab = distance(a, b);
        const double bc = distance(b, c);
        const double ca = distance(c, a);
        const double denom = ab * bc * ca;
        if (denom <= 0.0)
            return 0.0;
        return 2.0 * cross(b - a, c - b) / denom;
    }
}
