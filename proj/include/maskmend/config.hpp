#pragma once

// Flat `key = value` configuration for pipeline runs. Every key is also a
// command line flag (`--key value`); the tool layers flags over the file.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "maskmend/corpus.hpp"
#include "maskmend/error.hpp"
#include "maskmend/noise_synth.hpp"
#include "maskmend/pipeline.hpp"

namespace maskmend {

/// Everything a pipeline run needs. Without a manifest the synthetic
/// corpus described by `corpus` is generated in memory.
struct PipelineJob {
    std::optional<fs::path> manifest;
    SyntheticCorpusSpec corpus;
    NoiseSpec noise;
    PipelineConfig pipeline;
    fs::path out = "maskmend-out";
    bool compare = false;
};

using Settings = std::map<std::string, std::string>;

struct SettingKey {
    const char* name;
    const char* help;
};

inline const std::vector<SettingKey>& setting_keys()
{
    static const std::vector<SettingKey> keys{
        {"manifest", "manifest CSV; omit to generate a synthetic corpus"},
        {"out", "output directory"},
        {"compare", "run mcdo, de and tta and write comparison.csv (true/false)"},
        {"kind", "noise kind for entries without noisy_mask: polygon or smooth"},
        {"vertices", "noise polygon vertex count"},
        {"samples", "spline samples per segment (smooth noise)"},
        {"epochs", "training epochs"},
        {"lr", "SGD learning rate"},
        {"lr-final", "last-epoch rate as a fraction of lr (cosine decay)"},
        {"batch-size", "minibatch size in pixels"},
        {"dropout", "dropout rate on hidden layers"},
        {"seed", "training seed"},
        {"method", "ensemble method: mcdo, de or tta"},
        {"n", "ensemble size"},
        {"base-seed", "first MC dropout seed"},
        {"delta", "relabel uncertainty threshold"},
        {"fill", "fill holes after flipping (true/false)"},
        {"mode", "detector: none, online or offline"},
        {"warmup", "epochs ignored by the detector"},
        {"patience", "online detector patience"},
        {"corpus-seed", "synthetic corpus seed"},
        {"corpus-train", "synthetic train image count"},
        {"corpus-test", "synthetic test image count"},
        {"corpus-size", "synthetic image side length"},
        {"corpus-contrast", "synthetic foreground contrast"},
        {"corpus-noise", "synthetic additive noise sigma"},
    };
    return keys;
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value)
{
    T v{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ParameterError("setting `" + key + "`: bad number `" + value + "`");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes")
        return true;
    if (value == "false" || value == "0" || value == "no")
        return false;
    throw ParameterError("setting `" + key + "`: expected true or false, got `" + value + "`");
}

inline bool known_key(const std::string& key)
{
    for (const auto& k : setting_keys())
        if (key == k.name)
            return true;
    return false;
}

} // namespace detail

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; unknown or repeated keys are errors.
inline Settings parse_settings(std::string_view text, const std::string& origin = "config")
{
    Settings out;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        const auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#')
            continue;
        const auto eq = line.find('=');
        const auto where = origin + ":" + std::to_string(lineno);
        if (eq == std::string_view::npos)
            throw ParameterError(where + ": expected `key = value`");
        std::string key(detail::trim(line.substr(0, eq)));
        std::string value(detail::trim(line.substr(eq + 1)));
        if (!detail::known_key(key))
            throw ParameterError(where + ": unknown key `" + key + "`");
        if (!out.emplace(key, value).second)
            throw ParameterError(where + ": duplicate key `" + key + "`");
    }
    return out;
}

inline Settings read_settings(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_settings(text, path.string());
}

/// `overrides` wins over `base` key by key.
inline Settings merge_settings(Settings base, const Settings& overrides)
{
    for (const auto& [k, v] : overrides)
        base[k] = v;
    return base;
}

inline void apply_setting(PipelineJob& job, const std::string& key, const std::string& value)
{
    using detail::parse_number;
    auto& p = job.pipeline;
    if (key == "manifest")
        job.manifest = fs::path(value);
    else if (key == "out")
        job.out = value;
    else if (key == "compare")
        job.compare = detail::parse_bool(key, value);
    else if (key == "kind")
        job.noise.kind = parse_noise_kind(value);
    else if (key == "vertices")
        job.noise.vertex_count = parse_number<int>(key, value);
    else if (key == "samples")
        job.noise.samples_per_segment = parse_number<int>(key, value);
    else if (key == "epochs")
        p.train.epochs = parse_number<int>(key, value);
    else if (key == "lr")
        p.train.learning_rate = parse_number<double>(key, value);
    else if (key == "lr-final")
        p.train.final_lr_fraction = parse_number<double>(key, value);
    else if (key == "batch-size")
        p.train.batch_size = parse_number<int>(key, value);
    else if (key == "dropout")
        p.train.dropout_rate = parse_number<double>(key, value);
    else if (key == "seed")
        p.train.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "method")
        p.ensemble.method = parse_ensemble_method(value);
    else if (key == "n")
        p.ensemble.n = parse_number<int>(key, value);
    else if (key == "base-seed")
        p.ensemble.base_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "delta")
        p.relabel.delta = parse_number<double>(key, value);
    else if (key == "fill")
        p.relabel.fill_holes = detail::parse_bool(key, value);
    else if (key == "mode")
        p.mode = parse_detector_mode(value);
    else if (key == "warmup")
        p.warmup = parse_number<int>(key, value);
    else if (key == "patience")
        p.patience = parse_number<int>(key, value);
    else if (key == "corpus-seed")
        job.corpus.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "corpus-train")
        job.corpus.train_count = parse_number<int>(key, value);
    else if (key == "corpus-test")
        job.corpus.test_count = parse_number<int>(key, value);
    else if (key == "corpus-size")
        job.corpus.size = parse_number<int>(key, value);
    else if (key == "corpus-contrast")
        job.corpus.contrast = parse_number<double>(key, value);
    else if (key == "corpus-noise")
        job.corpus.noise = parse_number<double>(key, value);
    else
        throw ParameterError("unknown setting `" + key + "`");
}

inline PipelineJob job_from_settings(const Settings& s)
{
    PipelineJob job;
    for (const auto& [k, v] : s)
        apply_setting(job, k, v);
    job.noise.validate();
    job.pipeline.validate();
    if (!job.manifest)
        job.corpus.validate();
    return job;
}

/// Manifest data (corrupting entries without a noisy mask) or the
/// synthetic corpus.
inline Dataset load_job_dataset(const PipelineJob& job)
{
    if (job.manifest)
        return load_dataset(read_manifest(*job.manifest), job.noise);
    return make_dataset(generate_corpus(job.corpus), job.noise);
}

} // namespace maskmend
