#pragma once

#include <cstdint>
#include <vector>

#include "maskmend/grid.hpp"

namespace maskmend {

/// 4-connected labelling of foreground pixels. Labels start at 1 and are
/// assigned in raster order of each component's first pixel; background
/// stays 0.
struct ComponentLabels {
    int height = 0;
    int width = 0;
    std::vector<int> labels;
    std::vector<std::size_t> sizes; // sizes[l - 1] is the pixel count of label l

    std::size_t count() const noexcept { return sizes.size(); }
};

inline ComponentLabels label_components(const BinaryMask& mask)
{
    const int h = mask.height();
    const int w = mask.width();
    ComponentLabels out{h, w, std::vector<int>(mask.size(), 0), {}};
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < mask.size(); ++seed) {
        if (!mask[seed] || out.labels[seed])
            continue;
        const int label = static_cast<int>(out.sizes.size()) + 1;
        std::size_t size = 0;
        out.labels[seed] = label;
        stack.push_back(seed);
        while (!stack.empty()) {
            const auto idx = stack.back();
            stack.pop_back();
            ++size;
            const int y = static_cast<int>(idx / static_cast<std::size_t>(w));
            const int x = static_cast<int>(idx % static_cast<std::size_t>(w));
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h)
                    continue;
                const auto n = static_cast<std::size_t>(ny[k]) * static_cast<std::size_t>(w) +
                               static_cast<std::size_t>(nx[k]);
                if (mask[n] && !out.labels[n]) {
                    out.labels[n] = label;
                    stack.push_back(n);
                }
            }
        }
        out.sizes.push_back(size);
    }
    return out;
}

/// Largest 4-connected foreground component; ties go to the component met
/// first in raster order. Returns an all-zero mask when there is no
/// foreground.
inline BinaryMask largest_component(const BinaryMask& mask)
{
    const auto cc = label_components(mask);
    std::vector<std::uint8_t> data(mask.size(), 0);
    if (cc.count() == 0)
        return {mask.height(), mask.width(), std::move(data)};
    std::size_t best = 0;
    for (std::size_t l = 1; l < cc.count(); ++l)
        if (cc.sizes[l] > cc.sizes[best])
            best = l;
    const int keep = static_cast<int>(best) + 1;
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = cc.labels[i] == keep ? 1 : 0;
    return {mask.height(), mask.width(), std::move(data)};
}

} // namespace maskmend
