#pragma once

// Desk-scale pixelwise segmentation learner: a 9 -> 32 -> 32 -> 1 MLP over
// local patch statistics, trained with plain minibatch SGD on binary
// cross-entropy. Dropout on both hidden layers doubles as the stochastic
// source for Monte Carlo dropout ensembles.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"

namespace maskmend {

// ---------------------------------------------------------------- features

inline constexpr int kFeatureCount = 9;
inline constexpr std::array<int, 3> kBoxRadii{1, 2, 4};

/// Per-pixel features, row-major, kFeatureCount values per pixel:
/// intensity, box mean at radii 1/2/4, box variance at radii 1/2/4,
/// x / (W - 1), y / (H - 1).
struct FeatureGrid {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    std::size_t pixels() const noexcept
    {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    std::span<const double> at(std::size_t pixel) const noexcept
    {
        return {values.data() + pixel * kFeatureCount, kFeatureCount};
    }
};

/// Box statistics use clamped (replicated) borders, so every window holds
/// (2r + 1)^2 samples.
inline FeatureGrid extract_features(const GrayImage& image)
{
    const int h = image.height();
    const int w = image.width();
    FeatureGrid f{h, w, std::vector<double>(static_cast<std::size_t>(h) * w * kFeatureCount)};
    std::vector<double> window;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* out = f.values.data() + (static_cast<std::size_t>(y) * w + x) * kFeatureCount;
            out[0] = image(y, x);
            for (std::size_t r = 0; r < kBoxRadii.size(); ++r) {
                const int rad = kBoxRadii[r];
                window.clear();
                for (int dy = -rad; dy <= rad; ++dy) {
                    const int yy = std::clamp(y + dy, 0, h - 1);
                    for (int dx = -rad; dx <= rad; ++dx)
                        window.push_back(image(yy, std::clamp(x + dx, 0, w - 1)));
                }
                double mean = 0.0;
                for (double v : window)
                    mean += v;
                mean /= static_cast<double>(window.size());
                double var = 0.0;
                for (double v : window)
                    var += (v - mean) * (v - mean);
                var /= static_cast<double>(window.size());
                out[1 + r] = mean;
                out[4 + r] = var;
            }
            out[7] = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
            out[8] = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
        }
    }
    return f;
}

// --------------------------------------------------------------- randomness

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept
{
    return splitmix64(a ^ splitmix64(b));
}

// Uniform in [0, 1) from a 64-bit hash.
inline double unit_uniform(std::uint64_t h) noexcept
{
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

} // namespace detail

// ---------------------------------------------------------------- classifier

struct TrainConfig {
    int epochs = 15;
    double learning_rate = 0.01;
    int batch_size = 64;
    double dropout_rate = 0.2;
    std::uint64_t seed = 1;
    double final_lr_fraction = 1.0; // cosine decay to this fraction of the rate at the last epoch

    /// Rate for 1-based `epoch` of `epochs`. train_epoch itself always uses
    /// `learning_rate`; multi-epoch drivers pass this in per epoch.
    double learning_rate_at(int epoch) const
    {
        if (epochs <= 1)
            return learning_rate;
        const double t = static_cast<double>(epoch - 1) / static_cast<double>(epochs - 1);
        const double f =
            final_lr_fraction + (1.0 - final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
        return learning_rate * f;
    }

    void validate() const
    {
        if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
            throw ParameterError("final_lr_fraction must be in [0, 1]");
        if (epochs < 1)
            throw ParameterError("epochs must be >= 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ParameterError("learning_rate must be finite and nonnegative");
        if (batch_size < 1)
            throw ParameterError("batch_size must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ParameterError("dropout_rate must be in [0, 1)");
    }
};

class PixelClassifier {
public:
    static constexpr int kHidden = 32;
    static constexpr std::array<int, 4> kLayers{kFeatureCount, kHidden, kHidden, 1};

    // Flat parameter layout: W1 (32x9), b1, W2 (32x32), b2, W3 (1x32), b3.
    static constexpr std::size_t kW1 = 0;
    static constexpr std::size_t kB1 = kW1 + kHidden * kFeatureCount;
    static constexpr std::size_t kW2 = kB1 + kHidden;
    static constexpr std::size_t kB2 = kW2 + kHidden * kHidden;
    static constexpr std::size_t kW3 = kB2 + kHidden;
    static constexpr std::size_t kB3 = kW3 + kHidden;
    static constexpr std::size_t kParamCount = kB3 + 1;

    /// He-initialized weights, zero biases.
    PixelClassifier(double dropout_rate, std::uint64_t init_seed)
        : dropout_rate_(dropout_rate), params_(kParamCount, 0.0)
    {
        check_dropout(dropout_rate);
        std::mt19937_64 rng(detail::mix(init_seed, 0x4d4c5020u));
        auto fill = [&](std::size_t offset, std::size_t count, int fan_in, double gain) {
            std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
            for (std::size_t i = 0; i < count; ++i)
                params_[offset + i] = dist(rng);
        };
        fill(kW1, kHidden * kFeatureCount, kFeatureCount, 2.0);
        fill(kW2, kHidden * kHidden, kHidden, 2.0);
        fill(kW3, kHidden, kHidden, 1.0);
    }

    PixelClassifier(double dropout_rate, std::vector<double> params, int epochs_trained)
        : dropout_rate_(dropout_rate), params_(std::move(params)), epochs_trained_(epochs_trained)
    {
        check_dropout(dropout_rate);
        if (params_.size() != kParamCount)
            throw InvariantError("classifier expects " + std::to_string(kParamCount) +
                                 " parameters, got " + std::to_string(params_.size()));
        for (double v : params_)
            if (!std::isfinite(v))
                throw InvariantError("classifier parameter is not finite");
    }

    double dropout_rate() const noexcept { return dropout_rate_; }
    int epochs_trained() const noexcept { return epochs_trained_; }
    std::span<const double> params() const noexcept { return params_; }

    PixelClassifier with_params(std::vector<double> params, int epochs_trained) const
    {
        return {dropout_rate_, std::move(params), epochs_trained};
    }

    friend bool operator==(const PixelClassifier&, const PixelClassifier&) = default;

private:
    static void check_dropout(double d)
    {
        if (!(d >= 0.0 && d < 1.0))
            throw InvariantError("dropout rate must be in [0, 1)");
    }

    double dropout_rate_;
    std::vector<double> params_;
    int epochs_trained_ = 0;
};

namespace detail {

// Keep masks for the two hidden layers; nullptr means no dropout.
struct DropoutDraw {
    std::uint64_t key;
    double keep;

    bool kept(int layer, int unit) const noexcept
    {
        return unit_uniform(mix(key, static_cast<std::uint64_t>(layer * 64 + unit))) < keep;
    }
};

struct Activations {
    std::array<double, PixelClassifier::kHidden> z1{}, h1{}, z2{}, h2{};
    std::array<double, PixelClassifier::kHidden> s1{}, s2{}; // applied dropout scale
    double logit = 0.0;
};

inline void forward(std::span<const double> p, std::span<const double> x, const DropoutDraw* drop,
                    Activations& a) noexcept
{
    using C = PixelClassifier;
    const double inv_keep = drop ? 1.0 / drop->keep : 1.0;
    for (int j = 0; j < C::kHidden; ++j) {
        double s = p[C::kB1 + j];
        const double* wrow = p.data() + C::kW1 + static_cast<std::size_t>(j) * kFeatureCount;
        for (int i = 0; i < kFeatureCount; ++i)
            s += wrow[i] * x[i];
        a.z1[j] = s;
        a.s1[j] = drop ? (drop->kept(0, j) ? inv_keep : 0.0) : 1.0;
        a.h1[j] = (s > 0.0 ? s : 0.0) * a.s1[j];
    }
    for (int j = 0; j < C::kHidden; ++j) {
        double s = p[C::kB2 + j];
        const double* wrow = p.data() + C::kW2 + static_cast<std::size_t>(j) * C::kHidden;
        for (int i = 0; i < C::kHidden; ++i)
            s += wrow[i] * a.h1[i];
        a.z2[j] = s;
        a.s2[j] = drop ? (drop->kept(1, j) ? inv_keep : 0.0) : 1.0;
        a.h2[j] = (s > 0.0 ? s : 0.0) * a.s2[j];
    }
    double z = p[C::kB3];
    for (int i = 0; i < C::kHidden; ++i)
        z += p[C::kW3 + i] * a.h2[i];
    a.logit = z;
}

inline double sigmoid(double z) noexcept
{
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Numerically stable binary cross-entropy on a logit.
inline double bce_with_logit(double z, double y) noexcept
{
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

// Adds d(loss)/d(params) for one sample, scaled by `weight`, into grad.
inline void backward(std::span<const double> p, std::span<const double> x, const Activations& a,
                     double y, double weight, std::span<double> grad) noexcept
{
    using C = PixelClassifier;
    const double dz = (sigmoid(a.logit) - y) * weight;
    grad[C::kB3] += dz;
    std::array<double, C::kHidden> dz2{};
    for (int i = 0; i < C::kHidden; ++i) {
        grad[C::kW3 + i] += dz * a.h2[i];
        dz2[i] = a.z2[i] > 0.0 ? dz * p[C::kW3 + i] * a.s2[i] : 0.0;
    }
    std::array<double, C::kHidden> dh1{};
    for (int j = 0; j < C::kHidden; ++j) {
        if (dz2[j] == 0.0)
            continue;
        grad[C::kB2 + j] += dz2[j];
        const double* wrow = p.data() + C::kW2 + static_cast<std::size_t>(j) * C::kHidden;
        double* grow = grad.data() + C::kW2 + static_cast<std::size_t>(j) * C::kHidden;
        for (int i = 0; i < C::kHidden; ++i) {
            grow[i] += dz2[j] * a.h1[i];
            dh1[i] += dz2[j] * wrow[i];
        }
    }
    for (int j = 0; j < C::kHidden; ++j) {
        const double dz1 = a.z1[j] > 0.0 ? dh1[j] * a.s1[j] : 0.0;
        if (dz1 == 0.0)
            continue;
        grad[C::kB1 + j] += dz1;
        double* grow = grad.data() + C::kW1 + static_cast<std::size_t>(j) * kFeatureCount;
        for (int i = 0; i < kFeatureCount; ++i)
            grow[i] += dz1 * x[i];
    }
}

} // namespace detail

/// One labelled pixel: its feature vector and target in {0, 1}.
struct LabelledPixel {
    std::span<const double> features;
    double label = 0.0;
};

/// Mean cross-entropy over `batch` without dropout; `grad` receives the
/// analytic gradient (resized to the parameter count).
inline double loss_and_gradient(std::span<const double> params,
                                std::span<const LabelledPixel> batch, std::vector<double>& grad)
{
    grad.assign(PixelClassifier::kParamCount, 0.0);
    if (batch.empty())
        return 0.0;
    const double weight = 1.0 / static_cast<double>(batch.size());
    detail::Activations a;
    double loss = 0.0;
    for (const auto& s : batch) {
        detail::forward(params, s.features, nullptr, a);
        loss += detail::bce_with_logit(a.logit, s.label);
        detail::backward(params, s.features, a, s.label, weight, grad);
    }
    return loss * weight;
}

inline double mean_loss(std::span<const double> params, std::span<const LabelledPixel> batch)
{
    detail::Activations a;
    double loss = 0.0;
    for (const auto& s : batch) {
        detail::forward(params, s.features, nullptr, a);
        loss += detail::bce_with_logit(a.logit, s.label);
    }
    return batch.empty() ? 0.0 : loss / static_cast<double>(batch.size());
}

/// Training pair with features already extracted.
struct TrainingExample {
    const FeatureGrid* features;
    const BinaryMask* mask;
};

struct EpochResult {
    PixelClassifier model;
    double mean_loss; // averaged over all minibatch samples of the epoch
};

/// One pass of minibatch SGD over every pixel of every example. Pixel
/// order is reshuffled per epoch from (cfg.seed, epochs already trained),
/// so the result is fully determined by the inputs.
inline EpochResult train_epoch_with_loss(const PixelClassifier& model,
                                         std::span<const TrainingExample> data,
                                         const TrainConfig& cfg)
{
    cfg.validate();
    std::vector<std::pair<std::uint32_t, std::uint32_t>> order;
    for (std::size_t e = 0; e < data.size(); ++e) {
        const auto& ex = data[e];
        if (ex.features->height != ex.mask->height() || ex.features->width != ex.mask->width())
            throw ParameterError("train_epoch: image/mask dimension mismatch in example " +
                                 std::to_string(e));
        for (std::size_t i = 0; i < ex.features->pixels(); ++i)
            order.emplace_back(static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(i));
    }
    const auto epoch_key =
        detail::mix(cfg.seed, static_cast<std::uint64_t>(model.epochs_trained()) + 1);
    std::mt19937_64 rng(epoch_key);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> params(model.params().begin(), model.params().end());
    std::vector<double> grad(PixelClassifier::kParamCount);
    detail::Activations a;
    const double keep = 1.0 - model.dropout_rate();
    double total_loss = 0.0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        const double weight = 1.0 / static_cast<double>(end - start);
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t k = start; k < end; ++k) {
            const auto [e, i] = order[k];
            const auto x = data[e].features->at(i);
            const double y = (*data[e].mask)[i];
            if (model.dropout_rate() > 0.0) {
                const detail::DropoutDraw draw{detail::mix(epoch_key, k), keep};
                detail::forward(params, x, &draw, a);
            } else {
                detail::forward(params, x, nullptr, a);
            }
            total_loss += detail::bce_with_logit(a.logit, y);
            detail::backward(params, x, a, y, weight, grad);
        }
        if (!std::isfinite(total_loss))
            throw TrainingDivergence("training diverged: non-finite loss at epoch " +
                                     std::to_string(model.epochs_trained() + 1));
        for (std::size_t j = 0; j < params.size(); ++j)
            params[j] -= cfg.learning_rate * grad[j];
    }
    for (double v : params)
        if (!std::isfinite(v))
            throw TrainingDivergence("training diverged: non-finite weights");
    return {model.with_params(std::move(params), model.epochs_trained() + 1),
            order.empty() ? 0.0 : total_loss / static_cast<double>(order.size())};
}

inline PixelClassifier train_epoch(const PixelClassifier& model,
                                   std::span<const TrainingExample> data, const TrainConfig& cfg)
{
    return train_epoch_with_loss(model, data, cfg).model;
}

/// Sigmoid probabilities per pixel. With dropout_active each hidden unit
/// of each pixel is kept with probability 1 - d (scaled by 1 / (1 - d)),
/// drawn from a hash of (seed, pixel, unit), so a pass is reproducible
/// and independent of evaluation order.
inline ProbMap predict(const PixelClassifier& model, const FeatureGrid& features,
                       bool dropout_active = false, std::uint64_t seed = 0)
{
    const bool drop = dropout_active && model.dropout_rate() > 0.0;
    const double keep = 1.0 - model.dropout_rate();
    const auto pass_key = detail::mix(seed, 0x7072656474ull);
    std::vector<double> out(features.pixels());
    detail::Activations a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (drop) {
            const detail::DropoutDraw draw{detail::mix(pass_key, i), keep};
            detail::forward(model.params(), features.at(i), &draw, a);
        } else {
            detail::forward(model.params(), features.at(i), nullptr, a);
        }
        out[i] = detail::sigmoid(a.logit);
    }
    return {features.height, features.width, std::move(out)};
}

inline ProbMap predict(const PixelClassifier& model, const GrayImage& image,
                       bool dropout_active = false, std::uint64_t seed = 0)
{
    return predict(model, extract_features(image), dropout_active, seed);
}

// --------------------------------------------------------------- model file

// "MMLP", u8 version, u32 layer count, u32 dims..., f32 dropout rate,
// u32 epochs trained, f32 weights in flat layout order. Little-endian.
inline constexpr std::array<char, 4> kModelMagic{'M', 'M', 'L', 'P'};
inline constexpr std::uint8_t kModelVersion = 0x01;

inline void save_model(const PixelClassifier& model, const std::filesystem::path& path)
{
    std::vector<char> bytes(kModelMagic.begin(), kModelMagic.end());
    auto put = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    };
    bytes.push_back(static_cast<char>(kModelVersion));
    put(static_cast<std::uint32_t>(PixelClassifier::kLayers.size()));
    for (int d : PixelClassifier::kLayers)
        put(static_cast<std::uint32_t>(d));
    put(std::bit_cast<std::uint32_t>(static_cast<float>(model.dropout_rate())));
    put(static_cast<std::uint32_t>(model.epochs_trained()));
    for (double v : model.params())
        put(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failure on " + path.string());
}

inline PixelClassifier load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string() + " for reading");
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n)
            throw FormatError("model file truncated: " + path.string());
    };
    auto get = [&]() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    };
    need(5);
    if (!std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
        throw FormatError("model magic mismatch in " + path.string());
    if (static_cast<std::uint8_t>(bytes[4]) != kModelVersion)
        throw FormatError("unsupported model version in " + path.string());
    pos = 5;
    const auto layers = get();
    if (layers != PixelClassifier::kLayers.size())
        throw FormatError("model layer count mismatch in " + path.string());
    for (int d : PixelClassifier::kLayers)
        if (get() != static_cast<std::uint32_t>(d))
            throw FormatError("model layer dims mismatch in " + path.string());
    const double dropout = std::bit_cast<float>(get());
    const int epochs = static_cast<int>(get());
    std::vector<double> params(PixelClassifier::kParamCount);
    for (auto& v : params)
        v = std::bit_cast<float>(get());
    if (pos != bytes.size())
        throw FormatError("trailing bytes in model file " + path.string());
    return {dropout, std::move(params), epochs};
}

} // namespace maskmend
