#pragma once

// Synthetic segmentation corpus: one bright blob per image on a darker
// noisy background. The blob is an ellipse whose radius is modulated by a
// few low-frequency harmonics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "maskmend/components.hpp"
#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"
#include "maskmend/io.hpp"

namespace maskmend {

struct SyntheticCorpusSpec {
    int train_count = 100;
    int test_count = 20;
    int size = 32;               // square images, pixels
    double min_radius = 7.0;     // ellipse semi-axes are drawn from [min, max]
    double max_radius = 11.0;
    double perturbation = 0.08;  // amplitude of each radial harmonic
    double background = 0.3;
    double contrast = 0.4;       // foreground = background + contrast
    double noise = 0.08;         // additive Gaussian sigma
    double edge_softness = 1.0;  // Gaussian blur sigma of the object profile, pixels
    std::uint64_t seed = 7;

    void validate() const
    {
        if (train_count < 1 || test_count < 1)
            throw ParameterError("corpus needs at least one train and one test image");
        if (size < 8)
            throw ParameterError("corpus image size must be >= 8");
        if (!(min_radius >= 1.0 && max_radius >= min_radius))
            throw ParameterError("corpus radii must satisfy 1 <= min <= max");
        if (2.0 * max_radius * (1.0 + 3.0 * perturbation) + 2.0 > size)
            throw ParameterError("corpus blobs do not fit in the image");
        if (!(perturbation >= 0.0 && perturbation < 0.3))
            throw ParameterError("corpus perturbation must be in [0, 0.3)");
        if (!(contrast > 0.0))
            throw ParameterError("corpus contrast must be positive (contrast 0 is unlearnable)");
        if (!(noise >= 0.0) || !(contrast > noise))
            throw ParameterError("corpus contrast must exceed the noise level");
        if (!(edge_softness >= 0.0))
            throw ParameterError("corpus edge_softness must be nonnegative");
        if (!(background >= 0.0 && background + contrast <= 1.0))
            throw ParameterError("corpus intensities must stay within [0, 1]");
    }
};

struct CorpusItem {
    GrayImage image;
    BinaryMask clean;
    Split split;
};

/// Ellipse with radially modulated boundary; zero amplitudes give a plain
/// (convex) ellipse.
struct BlobShape {
    double cx, cy, a, b, angle;
    std::vector<double> amp, phase; // harmonics k = 2, 3, 4

    double radius(double theta) const
    {
        const double t = theta - angle;
        const double c = std::cos(t) / a;
        const double s = std::sin(t) / b;
        double r = 1.0 / std::sqrt(c * c + s * s);
        double mod = 1.0;
        for (std::size_t k = 0; k < amp.size(); ++k)
            mod += amp[k] * std::cos(static_cast<double>(k + 2) * theta + phase[k]);
        return r * mod;
    }

    BinaryMask rasterize(int h, int w) const
    {
        std::vector<std::uint8_t> data(static_cast<std::size_t>(h) * w, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = x - cx;
                const double dy = y - cy;
                const double d = std::hypot(dx, dy);
                if (d <= radius(std::atan2(dy, dx)))
                    data[static_cast<std::size_t>(y) * w + x] = 1;
            }
        return {h, w, std::move(data)};
    }
};

inline BlobShape random_blob(std::mt19937_64& rng, int size, double min_radius, double max_radius,
                             double perturbation)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    BlobShape s;
    s.a = min_radius + (max_radius - min_radius) * unit(rng);
    s.b = min_radius + (max_radius - min_radius) * unit(rng);
    s.angle = std::numbers::pi * unit(rng);
    for (int k = 0; k < 3; ++k) {
        s.amp.push_back(perturbation * (2.0 * unit(rng) - 1.0));
        s.phase.push_back(2.0 * std::numbers::pi * unit(rng));
    }
    const double reach = std::max(s.a, s.b) * (1.0 + 3.0 * perturbation) + 1.0;
    const double lo = reach;
    const double hi = size - 1 - reach;
    s.cx = lo + (hi - lo) * unit(rng);
    s.cy = lo + (hi - lo) * unit(rng);
    return s;
}

/// Separable Gaussian blur of the 0/1 mask with clamped borders.
inline std::vector<double> soft_profile(const BinaryMask& mask, double sigma)
{
    const int h = mask.height();
    const int w = mask.width();
    std::vector<double> a(mask.values().begin(), mask.values().end());
    if (sigma <= 0.0)
        return a;
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel;
    double norm = 0.0;
    for (int k = -rad; k <= rad; ++k) {
        kernel.push_back(std::exp(-0.5 * k * k / (sigma * sigma)));
        norm += kernel.back();
    }
    for (auto& k : kernel)
        k /= norm;
    std::vector<double> b(a.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -rad; k <= rad; ++k)
                s += kernel[k + rad] * a[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
            b[static_cast<std::size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -rad; k <= rad; ++k)
                s += kernel[k + rad] * b[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
            a[static_cast<std::size_t>(y) * w + x] = s;
        }
    return a;
}

/// Deterministic in spec.seed. Intensities are quantized to 8 bits so a
/// corpus written to disk reads back identically.
inline std::vector<CorpusItem> generate_corpus(const SyntheticCorpusSpec& spec)
{
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<CorpusItem> out;
    const int total = spec.train_count + spec.test_count;
    out.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        const auto shape =
            random_blob(rng, spec.size, spec.min_radius, spec.max_radius, spec.perturbation);
        // Star-shaped sampling can leave stray pixels; keep the main body.
        auto mask = largest_component(shape.rasterize(spec.size, spec.size));
        const auto profile = soft_profile(mask, spec.edge_softness);
        std::vector<double> pixels(mask.size());
        for (std::size_t p = 0; p < pixels.size(); ++p) {
            double v = spec.background + spec.contrast * profile[p] + spec.noise * gauss(rng);
            v = std::clamp(v, 0.0, 1.0);
            pixels[p] = std::round(v * 255.0) / 255.0;
        }
        out.push_back({GrayImage(spec.size, spec.size, std::move(pixels)), std::move(mask),
                       i < spec.train_count ? Split::train : Split::test});
    }
    return out;
}

/// Writes images/NNNN.pgm, clean/NNNN.pgm and manifest.csv under `dir`
/// (noisy_mask column left empty).
inline Manifest write_corpus(const std::vector<CorpusItem>& corpus, const fs::path& dir)
{
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "clean");
    Manifest m{dir, {}};
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.pgm", i);
        const fs::path img = fs::path("images") / name;
        const fs::path msk = fs::path("clean") / name;
        write_image(corpus[i].image, dir / img);
        write_mask(corpus[i].clean, dir / msk);
        m.entries.push_back({img, msk, std::nullopt, corpus[i].split});
    }
    write_manifest(m, dir / "manifest.csv");
    return m;
}

} // namespace maskmend
