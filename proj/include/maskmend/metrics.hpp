#pragma once

#include <span>
#include <vector>

#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"

namespace maskmend {

/// 2|A n B| / (|A| + |B|); two empty masks score 1.
inline double dice(const BinaryMask& a, const BinaryMask& b)
{
    require_same_shape(a, b, "dice");
    std::size_t inter = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] & b[i];
        sa += a[i];
        sb += b[i];
    }
    if (sa + sb == 0)
        return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

inline BinaryMask binarize(const ProbMap& p, double threshold = 0.5)
{
    std::vector<std::uint8_t> out(p.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = p[i] >= threshold ? 1 : 0;
    return {p.height(), p.width(), std::move(out)};
}

struct DiceReport {
    double d_clean = 0.0;
    double d_noisy = 0.0;

    // Predictions agree more with the noisy references than the clean ones.
    bool overfits_noise() const noexcept { return d_noisy > d_clean; }
};

/// Unweighted per-image mean Dice of binarized predictions against clean
/// and noisy references.
inline DiceReport evaluate_predictions(std::span<const ProbMap> predictions,
                                       std::span<const BinaryMask> clean,
                                       std::span<const BinaryMask> noisy, double threshold = 0.5)
{
    if (predictions.empty())
        throw ParameterError("evaluate: test split is empty");
    if (clean.size() != predictions.size() || noisy.size() != predictions.size())
        throw ManifestError("evaluate: every test image needs a clean and a noisy mask");
    DiceReport r;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto pred = binarize(predictions[i], threshold);
        r.d_clean += dice(pred, clean[i]);
        r.d_noisy += dice(pred, noisy[i]);
    }
    r.d_clean /= static_cast<double>(predictions.size());
    r.d_noisy /= static_cast<double>(predictions.size());
    return r;
}

} // namespace maskmend
