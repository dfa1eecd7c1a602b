#pragma once

// Prediction ensembles: Monte Carlo dropout, deep ensembles and
// test-time augmentation over the dihedral group of the square.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"
#include "maskmend/learner.hpp"

namespace maskmend {

enum class EnsembleMethod { mcdo, de, tta };

inline const char* to_string(EnsembleMethod m)
{
    switch (m) {
    case EnsembleMethod::mcdo: return "mcdo";
    case EnsembleMethod::de: return "de";
    case EnsembleMethod::tta: return "tta";
    }
    return "?";
}

inline EnsembleMethod parse_ensemble_method(const std::string& s)
{
    if (s == "mcdo")
        return EnsembleMethod::mcdo;
    if (s == "de")
        return EnsembleMethod::de;
    if (s == "tta")
        return EnsembleMethod::tta;
    throw ParameterError("ensemble method must be mcdo, de or tta, got `" + s + "`");
}

struct EnsembleSpec {
    EnsembleMethod method = EnsembleMethod::mcdo;
    int n = 8;
    std::uint64_t base_seed = 1000;

    void validate() const
    {
        if (n < 1)
            throw ParameterError("ensemble size must be >= 1");
        if (method == EnsembleMethod::tta && n > 8)
            throw ParameterError("tta ensembles have at most 8 members (dihedral group)");
    }
};

// ------------------------------------------------------------ dihedral ops

/// The eight symmetries of the square. Rotations are clockwise on screen.
enum class Dihedral : std::uint8_t {
    identity,
    flip_horizontal, // mirror x
    flip_vertical,   // mirror y
    rotate_180,
    rotate_90,
    rotate_270,
    transpose,
    anti_transpose,
};

inline constexpr std::array<Dihedral, 8> kDihedralGroup{
    Dihedral::identity,   Dihedral::flip_horizontal, Dihedral::flip_vertical,
    Dihedral::rotate_180, Dihedral::rotate_90,       Dihedral::rotate_270,
    Dihedral::transpose,  Dihedral::anti_transpose,
};

inline const char* to_string(Dihedral t)
{
    switch (t) {
    case Dihedral::identity: return "identity";
    case Dihedral::flip_horizontal: return "flip_horizontal";
    case Dihedral::flip_vertical: return "flip_vertical";
    case Dihedral::rotate_180: return "rotate_180";
    case Dihedral::rotate_90: return "rotate_90";
    case Dihedral::rotate_270: return "rotate_270";
    case Dihedral::transpose: return "transpose";
    case Dihedral::anti_transpose: return "anti_transpose";
    }
    return "?";
}

/// Transforms that swap the axes, only defined here on square grids.
inline bool swaps_axes(Dihedral t)
{
    return t == Dihedral::rotate_90 || t == Dihedral::rotate_270 || t == Dihedral::transpose ||
           t == Dihedral::anti_transpose;
}

inline Dihedral inverse(Dihedral t)
{
    if (t == Dihedral::rotate_90)
        return Dihedral::rotate_270;
    if (t == Dihedral::rotate_270)
        return Dihedral::rotate_90;
    return t;
}

namespace detail {

template <typename T>
std::vector<T> apply_dihedral(Dihedral t, int h, int w, std::span<const T> in)
{
    if (swaps_axes(t) && h != w)
        throw ParameterError(std::string("dihedral transform ") + to_string(t) +
                             " requires a square image");
    std::vector<T> out(in.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int tx = x, ty = y;
            switch (t) {
            case Dihedral::identity: break;
            case Dihedral::flip_horizontal: tx = w - 1 - x; break;
            case Dihedral::flip_vertical: ty = h - 1 - y; break;
            case Dihedral::rotate_180: tx = w - 1 - x; ty = h - 1 - y; break;
            case Dihedral::rotate_90: tx = h - 1 - y; ty = x; break;
            case Dihedral::rotate_270: tx = y; ty = w - 1 - x; break;
            case Dihedral::transpose: tx = y; ty = x; break;
            case Dihedral::anti_transpose: tx = h - 1 - y; ty = w - 1 - x; break;
            }
            out[static_cast<std::size_t>(ty) * w + tx] = in[static_cast<std::size_t>(y) * w + x];
        }
    }
    return out;
}

} // namespace detail

inline GrayImage apply(Dihedral t, const GrayImage& g)
{
    return {g.height(), g.width(), detail::apply_dihedral(t, g.height(), g.width(), g.values())};
}

inline ProbMap apply(Dihedral t, const ProbMap& g)
{
    return {g.height(), g.width(), detail::apply_dihedral(t, g.height(), g.width(), g.values())};
}

inline BinaryMask apply(Dihedral t, const BinaryMask& g)
{
    return {g.height(), g.width(), detail::apply_dihedral(t, g.height(), g.width(), g.values())};
}

/// First n members of kDihedralGroup, identity first.
inline std::vector<Dihedral> dihedral_prefix(int n)
{
    if (n < 1 || n > 8)
        throw ParameterError("tta transform count must be in [1, 8]");
    return {kDihedralGroup.begin(), kDihedralGroup.begin() + n};
}

// --------------------------------------------------------------- builders

/// n stochastic passes with dropout active; member i uses seed base_seed + i.
inline PredictionEnsemble mcdo_ensemble(const PixelClassifier& model, const FeatureGrid& features,
                                        int n, std::uint64_t base_seed)
{
    if (n < 1)
        throw ParameterError("mcdo_ensemble: n must be >= 1");
    if (model.dropout_rate() <= 0.0)
        throw DegenerateEnsemble("MCDO degenerate: identical members (model dropout rate is 0)");
    std::vector<ProbMap> members;
    members.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        members.push_back(predict(model, features, true, base_seed + static_cast<std::uint64_t>(i)));
    return PredictionEnsemble(std::move(members));
}

inline PredictionEnsemble mcdo_ensemble(const PixelClassifier& model, const GrayImage& image,
                                        int n, std::uint64_t base_seed)
{
    return mcdo_ensemble(model, extract_features(image), n, base_seed);
}

/// One deterministic prediction per model, in list order.
inline PredictionEnsemble de_ensemble(std::span<const PixelClassifier> models,
                                      const FeatureGrid& features)
{
    if (models.empty())
        throw ParameterError("de_ensemble: model list is empty");
    std::vector<ProbMap> members;
    members.reserve(models.size());
    for (const auto& m : models)
        members.push_back(predict(m, features));
    return PredictionEnsemble(std::move(members));
}

inline PredictionEnsemble de_ensemble(std::span<const PixelClassifier> models,
                                      const GrayImage& image)
{
    return de_ensemble(models, extract_features(image));
}

/// Features of t(image) for every t, the expensive part of a TTA pass.
inline std::vector<FeatureGrid> tta_features(const GrayImage& image,
                                             std::span<const Dihedral> transforms)
{
    std::vector<FeatureGrid> out;
    out.reserve(transforms.size());
    for (auto t : transforms)
        out.push_back(extract_features(apply(t, image)));
    return out;
}

/// Member k is inverse(t_k) applied to the prediction on t_k(image), so
/// every member lies in the original frame. `transformed[k]` must hold
/// the features of t_k(image).
inline PredictionEnsemble tta_ensemble(const PixelClassifier& model,
                                       std::span<const FeatureGrid> transformed,
                                       std::span<const Dihedral> transforms)
{
    if (transforms.empty())
        throw ParameterError("tta_ensemble: transform list is empty");
    if (transformed.size() != transforms.size())
        throw ParameterError("tta_ensemble: one feature grid per transform required");
    std::vector<ProbMap> members;
    members.reserve(transforms.size());
    for (std::size_t k = 0; k < transforms.size(); ++k)
        members.push_back(apply(inverse(transforms[k]), predict(model, transformed[k])));
    return PredictionEnsemble(std::move(members));
}

inline PredictionEnsemble tta_ensemble(const PixelClassifier& model, const GrayImage& image,
                                       std::span<const Dihedral> transforms)
{
    if (transforms.empty())
        throw ParameterError("tta_ensemble: transform list is empty");
    for (auto t : transforms)
        if (swaps_axes(t) && image.height() != image.width())
            throw ParameterError(std::string("tta_ensemble: ") + to_string(t) +
                                 " requested on a non-square image");
    const auto feats = tta_features(image, transforms);
    return tta_ensemble(model, feats, transforms);
}

} // namespace maskmend
