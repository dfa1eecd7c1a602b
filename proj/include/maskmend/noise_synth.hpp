#pragma once

// Synthetic annotation noise: trace the object boundary, drop vertices,
// and redraw the object from what is left, either with straight edges or
// with a smooth closed spline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "maskmend/components.hpp"
#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"

namespace maskmend {

enum class NoiseKind { polygon, smooth };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::polygon;
    int vertex_count = 3;
    int samples_per_segment = 16; // smooth kind only

    void validate() const
    {
        if (vertex_count < 3)
            throw ParameterError("noise vertex_count must be >= 3, got " +
                                 std::to_string(vertex_count));
        if (kind == NoiseKind::smooth && samples_per_segment < 2)
            throw ParameterError("noise samples_per_segment must be >= 2, got " +
                                 std::to_string(samples_per_segment));
    }
};

inline NoiseKind parse_noise_kind(const std::string& s)
{
    if (s == "polygon")
        return NoiseKind::polygon;
    if (s == "smooth")
        return NoiseKind::smooth;
    throw ParameterError("noise kind must be polygon or smooth, got `" + s + "`");
}

// ------------------------------------------------------------ boundary

namespace detail {

// Moore neighbourhood in clockwise screen order starting west.
inline constexpr std::array<int, 8> kMooreDx{-1, -1, 0, 1, 1, 1, 0, -1};
inline constexpr std::array<int, 8> kMooreDy{0, -1, -1, -1, 0, 1, 1, 1};

inline int moore_direction(int dx, int dy)
{
    for (int d = 0; d < 8; ++d)
        if (kMooreDx[d] == dx && kMooreDy[d] == dy)
            return d;
    return -1;
}

} // namespace detail

/// Closed boundary of the largest 4-connected foreground component, one
/// vertex per boundary pixel center, traced with Moore neighbour tracing
/// (Jacob's stopping criterion). Vertices are ordered counterclockwise in
/// (x, y), i.e. positive shoelace area. Components whose trace has fewer
/// than three pixels (one or two pixels) are returned as the outline of
/// their pixel squares.
inline Polygon trace_boundary(const BinaryMask& mask)
{
    const auto object = largest_component(mask);
    const int h = object.height();
    const int w = object.width();
    auto fg = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && object(y, x); };

    int sx = -1;
    int sy = -1;
    for (int y = 0; y < h && sx < 0; ++y)
        for (int x = 0; x < w; ++x)
            if (object(y, x)) {
                sx = x;
                sy = y;
                break;
            }
    if (sx < 0)
        throw ParameterError("no foreground component");

    std::vector<Point> contour{{static_cast<double>(sx), static_cast<double>(sy)}};
    // Raster order guarantees the west neighbour of the start is background.
    int cx = sx, cy = sy, bx = sx - 1, by = sy;
    const int start_bx = bx, start_by = by;
    const std::size_t guard = 4 * object.size() + 8;
    for (std::size_t step = 0; step < guard; ++step) {
        const int back = detail::moore_direction(bx - cx, by - cy);
        int next = -1;
        for (int k = 1; k <= 8; ++k) {
            const int d = (back + k) % 8;
            if (fg(cx + detail::kMooreDx[d], cy + detail::kMooreDy[d])) {
                next = d;
                break;
            }
        }
        if (next < 0)
            break; // isolated pixel
        const int nx = cx + detail::kMooreDx[next];
        const int ny = cy + detail::kMooreDy[next];
        // Leaving the start toward the second contour pixel again closes the
        // loop even when Jacob's criterion has not matched.
        if (step > 0 && cx == sx && cy == sy && contour.size() > 1 && nx == contour[1].x &&
            ny == contour[1].y)
            break;
        const int prev = (next + 7) % 8;
        bx = cx + detail::kMooreDx[prev];
        by = cy + detail::kMooreDy[prev];
        cx = nx;
        cy = ny;
        if (cx == sx && cy == sy && bx == start_bx && by == start_by)
            break;
        contour.push_back({static_cast<double>(cx), static_cast<double>(cy)});
    }
    if (contour.size() > 1 && contour.back() == contour.front())
        contour.pop_back();

    if (contour.size() < 3) {
        double x0 = contour[0].x, x1 = contour[0].x, y0 = contour[0].y, y1 = contour[0].y;
        for (const auto& p : contour) {
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y);
            y1 = std::max(y1, p.y);
        }
        return Polygon({{x0 - 0.5, y0 - 0.5}, {x1 + 0.5, y0 - 0.5}, {x1 + 0.5, y1 + 0.5},
                        {x0 - 0.5, y1 + 0.5}});
    }
    Polygon poly(std::move(contour));
    if (poly.signed_area() < 0.0) {
        std::vector<Point> rev(poly.vertices().rbegin(), poly.vertices().rend());
        return Polygon(std::move(rev));
    }
    return poly;
}

// --------------------------------------------------------- simplification

/// Visvalingam-Whyatt reduction to exactly k vertices: repeatedly drop the
/// vertex whose triangle with its current neighbours has the smallest
/// area, lowest original index first on ties. A vertex equal to its
/// predecessor is always dropped before any other.
inline Polygon simplify_polygon(const Polygon& poly, int k)
{
    if (k < 3)
        throw ParameterError("simplify_polygon: k must be >= 3, got " + std::to_string(k));
    if (static_cast<std::size_t>(k) > poly.size())
        throw ParameterError("simplify_polygon: k = " + std::to_string(k) + " exceeds " +
                             std::to_string(poly.size()) + " vertices");
    std::vector<std::size_t> alive(poly.size());
    for (std::size_t i = 0; i < alive.size(); ++i)
        alive[i] = i;
    auto area = [&](std::size_t pos) {
        const std::size_t m = alive.size();
        const auto& a = poly[alive[(pos + m - 1) % m]];
        const auto& b = poly[alive[pos]];
        const auto& c = poly[alive[(pos + 1) % m]];
        if (a == b)
            return -1.0;
        return 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    };
    while (alive.size() > static_cast<std::size_t>(k)) {
        std::size_t victim = 0;
        double best = std::numeric_limits<double>::infinity();
        // alive stays sorted by original index, so the first strict minimum
        // is the lowest-index one.
        for (std::size_t pos = 0; pos < alive.size(); ++pos) {
            const double a = area(pos);
            if (a < best) {
                best = a;
                victim = pos;
            }
        }
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    std::vector<Point> out;
    out.reserve(alive.size());
    for (auto i : alive)
        out.push_back(poly[i]);
    return Polygon(std::move(out));
}

// ----------------------------------------------------------- rasterization

inline constexpr double kEdgeTolerance = 1e-9;

namespace detail {

// Marks every pixel center within kEdgeTolerance of segment pq.
inline void mark_segment(std::vector<std::uint8_t>& out, int h, int w, const Point& p,
                         const Point& q)
{
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(p.x, q.x) - kEdgeTolerance)));
    const int x1 =
        std::min(w - 1, static_cast<int>(std::floor(std::max(p.x, q.x) + kEdgeTolerance)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(p.y, q.y) - kEdgeTolerance)));
    const int y1 =
        std::min(h - 1, static_cast<int>(std::floor(std::max(p.y, q.y) + kEdgeTolerance)));
    const double dx = q.x - p.x;
    const double dy = q.y - p.y;
    const double len2 = dx * dx + dy * dy;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            double t = len2 > 0.0 ? ((x - p.x) * dx + (y - p.y) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double ex = p.x + t * dx - x;
            const double ey = p.y + t * dy - y;
            if (ex * ex + ey * ey <= kEdgeTolerance * kEdgeTolerance)
                out[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                    static_cast<std::size_t>(x)] = 1;
        }
    }
}

} // namespace detail

/// Even-odd scanline fill of a closed vertex ring sampled at pixel
/// centers. A center strictly inside is foreground; so is a center lying
/// on an edge (within kEdgeTolerance), which makes a traced boundary
/// rasterize back onto its own pixels. Degenerate rings are tolerated.
inline BinaryMask rasterize_ring(std::span<const Point> ring, int height, int width)
{
    if (height < 1 || width < 1)
        throw ParameterError("rasterize: target dimensions must be positive");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(height) *
                                      static_cast<std::size_t>(width),
                                  0);
    const std::size_t m = ring.size();
    if (m == 0)
        return {height, width, std::move(out)};
    std::vector<double> crossings;
    for (int y = 0; y < height; ++y) {
        const double cy = y;
        crossings.clear();
        for (std::size_t i = 0; i < m; ++i) {
            const auto& p = ring[i];
            const auto& q = ring[(i + 1) % m];
            if ((p.y > cy) != (q.y > cy))
                crossings.push_back(p.x + (cy - p.y) * (q.x - p.x) / (q.y - p.y));
        }
        std::sort(crossings.begin(), crossings.end());
        // A center at x is inside when an odd number of crossings lie
        // strictly to its right, i.e. x in [c[2j], c[2j+1]).
        for (std::size_t j = 0; j + 1 < crossings.size(); j += 2) {
            const double lo = std::ceil(crossings[j]);
            const double hi = std::ceil(crossings[j + 1]) - 1.0;
            const int x0 = static_cast<int>(std::max(lo, 0.0));
            const int x1 = static_cast<int>(std::min(hi, static_cast<double>(width - 1)));
            for (int x = x0; x <= x1; ++x)
                out[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                    static_cast<std::size_t>(x)] = 1;
        }
    }
    for (std::size_t i = 0; i < m; ++i)
        detail::mark_segment(out, height, width, ring[i], ring[(i + 1) % m]);
    return {height, width, std::move(out)};
}

inline BinaryMask polygon_to_mask(const Polygon& poly, int height, int width)
{
    return rasterize_ring(poly.vertices(), height, width);
}

// ------------------------------------------------------------------ spline

/// Closed centripetal (alpha = 0.5) Catmull-Rom curve through the
/// vertices, `samples_per_segment` points per segment starting at each
/// control point. Consecutive duplicate samples are dropped.
inline std::vector<Point> catmull_rom_ring(const Polygon& poly, int samples_per_segment)
{
    if (samples_per_segment < 2)
        throw ParameterError("samples_per_segment must be >= 2, got " +
                             std::to_string(samples_per_segment));
    constexpr double alpha = 0.5;
    const std::size_t m = poly.size();
    auto knot = [&](const Point& a, const Point& b) {
        // Consecutive vertices are distinct, so the spacing never vanishes.
        return std::pow(std::hypot(b.x - a.x, b.y - a.y), alpha);
    };
    auto lerp = [](const Point& a, const Point& b, double ta, double tb, double t) {
        const double u = (t - ta) / (tb - ta);
        return Point{a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)};
    };
    std::vector<Point> out;
    out.reserve(m * static_cast<std::size_t>(samples_per_segment));
    for (std::size_t i = 0; i < m; ++i) {
        const auto& p0 = poly[(i + m - 1) % m];
        const auto& p1 = poly[i];
        const auto& p2 = poly[(i + 1) % m];
        const auto& p3 = poly[(i + 2) % m];
        const double t0 = 0.0;
        const double t1 = t0 + knot(p0, p1);
        const double t2 = t1 + knot(p1, p2);
        const double t3 = t2 + knot(p2, p3);
        for (int j = 0; j < samples_per_segment; ++j) {
            const double t = t1 + (t2 - t1) * j / samples_per_segment;
            const auto a1 = lerp(p0, p1, t0, t1, t);
            const auto a2 = lerp(p1, p2, t1, t2, t);
            const auto a3 = lerp(p2, p3, t2, t3, t);
            const auto b1 = lerp(a1, a2, t0, t2, t);
            const auto b2 = lerp(a2, a3, t1, t3, t);
            const auto c = lerp(b1, b2, t1, t2, t);
            if (out.empty() || !(out.back() == c))
                out.push_back(c);
        }
    }
    while (out.size() > 1 && out.back() == out.front())
        out.pop_back();
    return out;
}

inline BinaryMask smooth_curve_to_mask(const Polygon& poly, int samples_per_segment, int height,
                                       int width)
{
    const auto ring = catmull_rom_ring(poly, samples_per_segment);
    return rasterize_ring(ring, height, width);
}

// ----------------------------------------------------------------- corrupt

/// trace -> simplify -> redraw with straight or spline edges. Only the
/// largest component survives. Contours with at most vertex_count pixels
/// are redrawn unsimplified.
inline BinaryMask corrupt(const BinaryMask& mask, const NoiseSpec& spec)
{
    spec.validate();
    const auto boundary = trace_boundary(mask);
    const auto reduced = boundary.size() <= static_cast<std::size_t>(spec.vertex_count)
                             ? boundary
                             : simplify_polygon(boundary, spec.vertex_count);
    if (spec.kind == NoiseKind::polygon)
        return polygon_to_mask(reduced, mask.height(), mask.width());
    return smooth_curve_to_mask(reduced, spec.samples_per_segment, mask.height(), mask.width());
}

} // namespace maskmend
