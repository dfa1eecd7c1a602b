#pragma once

// Pixel-grid and geometry value types shared by every module.
//
// Conventions: row-major storage, x = column, y = row, origin at the
// top-left pixel. Pixel (x, y) has its center at real coordinates (x, y).
// All types are immutable after construction.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskmend/error.hpp"

namespace maskmend {

template <typename T>
class Grid {
public:
    using value_type = T;

    Grid(int height, int width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data))
    {
        if (height < 1 || width < 1)
            throw InvariantError("grid dimensions must be positive, got " +
                                 std::to_string(height) + "x" + std::to_string(width));
        if (data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
            throw InvariantError("grid data length " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(height) + "x" +
                                 std::to_string(width));
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }

    const T& operator()(int y, int x) const noexcept
    {
        return data_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                     static_cast<std::size_t>(x)];
    }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<const T> values() const noexcept { return data_; }

    template <typename U>
    bool same_shape(const Grid<U>& other) const noexcept
    {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Grid& a, const Grid& b)
    {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
    }

protected:
    int height_;
    int width_;
    std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what)
{
    if (!a.same_shape(b))
        throw ParameterError(std::string(what) + ": dimension mismatch " +
                             std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                             " vs " + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()));
}

/// H x W grid of labels in {0, 1}.
class BinaryMask : public Grid<std::uint8_t> {
public:
    BinaryMask(int height, int width, std::vector<std::uint8_t> data)
        : Grid(height, width, std::move(data))
    {
        for (auto v : data_)
            if (v > 1)
                throw InvariantError("mask label " + std::to_string(v) + " is not 0 or 1");
    }

    static BinaryMask zeros(int height, int width)
    {
        return {height, width,
                std::vector<std::uint8_t>(static_cast<std::size_t>(height) *
                                          static_cast<std::size_t>(width), 0)};
    }

    std::size_t count() const noexcept
    {
        std::size_t n = 0;
        for (auto v : data_)
            n += v;
        return n;
    }
};

namespace detail {

// Clamp values within `tol` of [lo, hi]; reject anything further out.
inline std::vector<double> checked_range(std::vector<double> data, double lo, double hi,
                                         double tol, const char* what)
{
    for (auto& v : data) {
        if (!std::isfinite(v) || v < lo - tol || v > hi + tol)
            throw InvariantError(std::string(what) + " value " + std::to_string(v) +
                                 " outside [" + std::to_string(lo) + ", " +
                                 std::to_string(hi) + "]");
        if (v < lo)
            v = lo;
        if (v > hi)
            v = hi;
    }
    return data;
}

} // namespace detail

inline constexpr double kRangeTolerance = 1e-9;

/// Grayscale intensities in [0, 1].
class GrayImage : public Grid<double> {
public:
    GrayImage(int height, int width, std::vector<double> data)
        : Grid(height, width,
               detail::checked_range(std::move(data), 0.0, 1.0, kRangeTolerance, "intensity"))
    {
    }
};

/// One model prediction: foreground probabilities in [0, 1].
class ProbMap : public Grid<double> {
public:
    ProbMap(int height, int width, std::vector<double> data)
        : Grid(height, width,
               detail::checked_range(std::move(data), 0.0, 1.0, kRangeTolerance, "probability"))
    {
    }
};

/// Per-pixel uncertainty, nonnegative.
class UncertaintyMap : public Grid<double> {
public:
    UncertaintyMap(int height, int width, std::vector<double> data)
        : Grid(height, width,
               detail::checked_range(std::move(data), 0.0, HUGE_VAL, kRangeTolerance,
                                     "uncertainty"))
    {
    }

    double sum() const noexcept
    {
        double s = 0.0;
        for (double v : data_)
            s += v;
        return s;
    }
};

/// Ordered stack of N >= 1 predictions over the same image.
class PredictionEnsemble {
public:
    explicit PredictionEnsemble(std::vector<ProbMap> members) : members_(std::move(members))
    {
        if (members_.empty())
            throw InvariantError("ensemble must have n >= 1");
        for (const auto& m : members_)
            if (!m.same_shape(members_.front()))
                throw InvariantError("ensemble members must share dimensions");
    }

    std::size_t n() const noexcept { return members_.size(); }
    int height() const noexcept { return members_.front().height(); }
    int width() const noexcept { return members_.front().width(); }
    const ProbMap& operator[](std::size_t i) const noexcept { return members_[i]; }
    std::span<const ProbMap> members() const noexcept { return members_; }

    friend bool operator==(const PredictionEnsemble&, const PredictionEnsemble&) = default;

private:
    std::vector<ProbMap> members_;
};

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Implicitly closed polygon with at least 3 vertices and no repeated
/// consecutive vertex (including last -> first).
class Polygon {
public:
    explicit Polygon(std::vector<Point> vertices) : vertices_(std::move(vertices))
    {
        if (vertices_.size() < 3)
            throw InvariantError("polygon needs at least 3 vertices, got " +
                                 std::to_string(vertices_.size()));
        for (std::size_t i = 0; i < vertices_.size(); ++i) {
            const auto& a = vertices_[i];
            const auto& b = vertices_[(i + 1) % vertices_.size()];
            if (!std::isfinite(a.x) || !std::isfinite(a.y))
                throw InvariantError("polygon vertex is not finite");
            if (a == b)
                throw InvariantError("polygon has repeated consecutive vertex at index " +
                                     std::to_string(i));
        }
    }

    std::size_t size() const noexcept { return vertices_.size(); }
    const Point& operator[](std::size_t i) const noexcept { return vertices_[i]; }
    std::span<const Point> vertices() const noexcept { return vertices_; }

    // Shoelace area, positive for counterclockwise order in (x, y).
    double signed_area() const noexcept
    {
        double a = 0.0;
        for (std::size_t i = 0; i < vertices_.size(); ++i) {
            const auto& p = vertices_[i];
            const auto& q = vertices_[(i + 1) % vertices_.size()];
            a += p.x * q.y - q.x * p.y;
        }
        return 0.5 * a;
    }

    friend bool operator==(const Polygon&, const Polygon&) = default;

private:
    std::vector<Point> vertices_;
};

} // namespace maskmend
