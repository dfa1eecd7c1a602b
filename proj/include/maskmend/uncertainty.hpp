#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"

namespace maskmend {

/// Per-pixel aleatoric uncertainty U = (1/N) sum_n p_n (1 - p_n).
///
/// For a two-class prediction (1 - p, p) the matrix diag(p) - p p^T has
/// both diagonal entries equal to p (1 - p), so the scalar form is the
/// exact foreground diagonal of the matrix expression.
inline UncertaintyMap aleatoric_map(const PredictionEnsemble& ens)
{
    std::vector<double> u(ens[0].size(), 0.0);
    for (const auto& m : ens.members())
        for (std::size_t i = 0; i < u.size(); ++i)
            u[i] += m[i] * (1.0 - m[i]);
    const double inv_n = 1.0 / static_cast<double>(ens.n());
    for (auto& v : u)
        v *= inv_n;
    return {ens.height(), ens.width(), std::move(u)};
}

struct EpistemicResult {
    UncertaintyMap map;
    std::optional<std::string> warning;
};

/// Between-member variance (1/N) sum_n (p_n - mean)^2. Diagnostic only;
/// relabeling does not consume it.
inline EpistemicResult epistemic_map(const PredictionEnsemble& ens)
{
    const std::size_t size = ens[0].size();
    if (ens.n() == 1)
        return {UncertaintyMap(ens.height(), ens.width(), std::vector<double>(size, 0.0)),
                "degenerate ensemble: n = 1 carries no between-member variance"};
    const double inv_n = 1.0 / static_cast<double>(ens.n());
    std::vector<double> mean(size, 0.0);
    for (const auto& m : ens.members())
        for (std::size_t i = 0; i < size; ++i)
            mean[i] += m[i];
    for (auto& v : mean)
        v *= inv_n;
    std::vector<double> var(size, 0.0);
    for (const auto& m : ens.members())
        for (std::size_t i = 0; i < size; ++i)
            var[i] += (m[i] - mean[i]) * (m[i] - mean[i]);
    for (auto& v : var)
        v *= inv_n;
    return {UncertaintyMap(ens.height(), ens.width(), std::move(var)), std::nullopt};
}

/// Mean over images of per-image pixel sums of uncertainty.
struct UncertaintySummary {
    double sigma_u = 0.0;
};

inline UncertaintySummary cumulative_uncertainty(std::span<const UncertaintyMap> maps)
{
    if (maps.empty())
        throw ParameterError("cumulative_uncertainty: empty map list");
    double total = 0.0;
    for (const auto& m : maps)
        total += m.sum();
    return {total / static_cast<double>(maps.size())};
}

} // namespace maskmend
