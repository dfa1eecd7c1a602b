#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"

namespace maskmend {

inline constexpr double kMaxBinaryUncertainty = 0.25;

struct RelabelSpec {
    double delta = 0.125;
    bool fill_holes = true;

    void validate() const
    {
        if (!(delta > 0.0 && delta < kMaxBinaryUncertainty))
            throw ParameterError("relabel delta must lie in (0, 0.25), got " +
                                 std::to_string(delta));
    }
};

/// Label flip p_new = 1 - p_old wherever U > delta (strict).
inline BinaryMask flip_labels(const BinaryMask& noisy, const UncertaintyMap& umap, double delta)
{
    require_same_shape(noisy, umap, "flip_labels");
    RelabelSpec{delta, false}.validate();
    std::vector<std::uint8_t> out(noisy.values().begin(), noisy.values().end());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (umap[i] > delta)
            out[i] = static_cast<std::uint8_t>(1 - out[i]);
    return {noisy.height(), noisy.width(), std::move(out)};
}

/// Sets every background pixel that is not 4-connected to the grid border
/// through background.
inline BinaryMask fill_holes(const BinaryMask& mask)
{
    const int h = mask.height();
    const int w = mask.width();
    std::vector<std::uint8_t> outside(mask.size(), 0);
    std::vector<std::size_t> queue;
    auto push = [&](int x, int y) {
        const auto i = static_cast<std::size_t>(y) * w + x;
        if (!mask[i] && !outside[i]) {
            outside[i] = 1;
            queue.push_back(i);
        }
    };
    for (int x = 0; x < w; ++x) {
        push(x, 0);
        push(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        push(0, y);
        push(w - 1, y);
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int y = static_cast<int>(queue[head] / w);
        const int x = static_cast<int>(queue[head] % w);
        if (x > 0)
            push(x - 1, y);
        if (x + 1 < w)
            push(x + 1, y);
        if (y > 0)
            push(x, y - 1);
        if (y + 1 < h)
            push(x, y + 1);
    }
    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = outside[i] ? 0 : 1;
    return {h, w, std::move(out)};
}

inline BinaryMask relabel(const BinaryMask& noisy, const UncertaintyMap& umap,
                          const RelabelSpec& spec)
{
    spec.validate();
    auto flipped = flip_labels(noisy, umap, spec.delta);
    return spec.fill_holes ? fill_holes(flipped) : flipped;
}

/// Fraction of pixels whose label differs between two masks.
inline double changed_fraction(const BinaryMask& before, const BinaryMask& after)
{
    require_same_shape(before, after, "changed_fraction");
    std::size_t changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i)
        changed += before[i] != after[i];
    return static_cast<double>(changed) / static_cast<double>(before.size());
}

} // namespace maskmend
