#pragma once

// Train-on-noisy-masks loop: after every epoch, estimate aleatoric
// uncertainty on the training images, track its mean cumulative value,
// and relabel the training masks once at the detected epoch.

#include <chrono>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "maskmend/corpus.hpp"
#include "maskmend/ensemble.hpp"
#include "maskmend/epoch_detector.hpp"
#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"
#include "maskmend/io.hpp"
#include "maskmend/learner.hpp"
#include "maskmend/metrics.hpp"
#include "maskmend/noise_synth.hpp"
#include "maskmend/relabel.hpp"
#include "maskmend/uncertainty.hpp"

namespace maskmend {

// ----------------------------------------------------------------- dataset

struct Sample {
    GrayImage image;
    BinaryMask clean;
    BinaryMask noisy;
    FeatureGrid features;
    std::string name; // file stem used for relabeled output
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// Pairs every corpus item with a corrupted copy of its clean mask.
namespace detail {

inline std::string index_name(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return buf;
}

} // namespace detail

inline Dataset make_dataset(const std::vector<CorpusItem>& corpus, const NoiseSpec& noise)
{
    Dataset d;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& item = corpus[i];
        Sample s{item.image, item.clean, corrupt(item.clean, noise), extract_features(item.image),
                 detail::index_name(i)};
        (item.split == Split::train ? d.train : d.test).push_back(std::move(s));
    }
    return d;
}

/// Uses the same mask as clean and noisy reference (zero-noise control).
inline Dataset make_clean_dataset(const std::vector<CorpusItem>& corpus)
{
    Dataset d;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& item = corpus[i];
        Sample s{item.image, item.clean, item.clean, extract_features(item.image),
                 detail::index_name(i)};
        (item.split == Split::train ? d.train : d.test).push_back(std::move(s));
    }
    return d;
}

/// Loads a manifest. Entries without a noisy mask are corrupted with
/// `noise` when given, otherwise rejected.
inline Dataset load_dataset(const Manifest& m, const std::optional<NoiseSpec>& noise = std::nullopt)
{
    Dataset d;
    for (const auto& e : m.entries) {
        auto image = read_image(m.resolve(e.image));
        auto clean = read_mask(m.resolve(e.clean_mask));
        require_same_shape(image, clean, "manifest image/clean_mask");
        std::optional<BinaryMask> noisy;
        if (e.noisy_mask) {
            noisy = read_mask(m.resolve(*e.noisy_mask));
            require_same_shape(image, *noisy, "manifest image/noisy_mask");
        } else if (noise) {
            noisy = corrupt(clean, *noise);
        } else {
            throw ManifestError("manifest entry " + e.image.generic_string() +
                                " has no noisy_mask");
        }
        auto features = extract_features(image);
        Sample s{std::move(image), std::move(clean), std::move(*noisy), std::move(features),
                 e.image.stem().string()};
        (e.split == Split::train ? d.train : d.test).push_back(std::move(s));
    }
    if (d.train.empty())
        throw ManifestError("manifest has no train entries");
    if (d.test.empty())
        throw ManifestError("manifest has no test entries");
    return d;
}

// --------------------------------------------------------------- evaluation

inline std::vector<ProbMap> predict_all(const PixelClassifier& model,
                                        std::span<const Sample> samples)
{
    std::vector<ProbMap> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(predict(model, s.features));
    return out;
}

inline DiceReport evaluate_model(const PixelClassifier& model, std::span<const Sample> test)
{
    const auto preds = predict_all(model, test);
    std::vector<BinaryMask> clean, noisy;
    for (const auto& s : test) {
        clean.push_back(s.clean);
        noisy.push_back(s.noisy);
    }
    return evaluate_predictions(preds, clean, noisy);
}

// ------------------------------------------------------------------ config

enum class DetectorMode { none, online, offline };

inline const char* to_string(DetectorMode m)
{
    switch (m) {
    case DetectorMode::none: return "none";
    case DetectorMode::online: return "online";
    case DetectorMode::offline: return "offline";
    }
    return "?";
}

inline DetectorMode parse_detector_mode(const std::string& s)
{
    if (s == "none")
        return DetectorMode::none;
    if (s == "online")
        return DetectorMode::online;
    if (s == "offline")
        return DetectorMode::offline;
    throw ParameterError("detector mode must be none, online or offline, got `" + s + "`");
}

struct PipelineConfig {
    TrainConfig train;
    EnsembleSpec ensemble;
    RelabelSpec relabel;
    DetectorMode mode = DetectorMode::online;
    int warmup = 1;
    int patience = 2;

    void validate() const
    {
        train.validate();
        ensemble.validate();
        relabel.validate();
        if (warmup < 0)
            throw ParameterError("warmup must be >= 0");
        if (patience < 1)
            throw ParameterError("patience must be >= 1");
    }
};

// ------------------------------------------------------------------ result

struct RelabelEvent {
    int detected_epoch = 0;      // epoch whose uncertainty maps were used
    int applied_after_epoch = 0; // training epoch after which masks changed
    double flipped_fraction = 0.0;
    double train_dice_before = 0.0; // mean Dice(noisy, clean) over train
    double train_dice_after = 0.0;  // mean Dice(relabeled, clean) over train
    DiceReport test_at_detection;   // test Dice of the model at detected_epoch
};

struct PipelineResult {
    PixelClassifier model;
    TrainingTrace trace;
    std::vector<BinaryMask> train_masks; // as used in the final epoch
    std::optional<RelabelEvent> relabel;
    DiceReport final_report;
    double seconds = 0.0;
};

// ---------------------------------------------------------------- the loop

namespace detail {

inline std::uint64_t member_seed(std::uint64_t seed, std::size_t member)
{
    return member == 0 ? seed : mix(seed, 0xde00 + member);
}

// Models trained in lockstep: one for mcdo/tta, n for deep ensembles.
// Member 0 is the reported model for every method.
inline std::vector<PixelClassifier> initial_models(const PipelineConfig& cfg)
{
    const std::size_t count =
        cfg.ensemble.method == EnsembleMethod::de ? static_cast<std::size_t>(cfg.ensemble.n) : 1;
    std::vector<PixelClassifier> models;
    for (std::size_t j = 0; j < count; ++j)
        models.emplace_back(cfg.train.dropout_rate, member_seed(cfg.train.seed, j));
    return models;
}

class UncertaintyEstimator {
public:
    UncertaintyEstimator(const PipelineConfig& cfg, std::span<const Sample> train) : cfg_(cfg)
    {
        if (cfg.ensemble.method == EnsembleMethod::tta) {
            transforms_ = dihedral_prefix(cfg.ensemble.n);
            for (const auto& s : train)
                tta_features_.push_back(tta_features(s.image, transforms_));
        }
    }

    std::vector<UncertaintyMap> maps(std::span<const PixelClassifier> models,
                                     std::span<const Sample> train) const
    {
        std::vector<UncertaintyMap> out;
        out.reserve(train.size());
        for (std::size_t i = 0; i < train.size(); ++i)
            out.push_back(aleatoric_map(ensemble(models, train, i)));
        return out;
    }

private:
    PredictionEnsemble ensemble(std::span<const PixelClassifier> models,
                                std::span<const Sample> train, std::size_t i) const
    {
        switch (cfg_.ensemble.method) {
        case EnsembleMethod::mcdo:
            return mcdo_ensemble(models[0], train[i].features, cfg_.ensemble.n,
                                 cfg_.ensemble.base_seed);
        case EnsembleMethod::de:
            return de_ensemble(models, train[i].features);
        case EnsembleMethod::tta:
            return tta_ensemble(models[0], tta_features_[i], transforms_);
        }
        throw ParameterError("unknown ensemble method");
    }

    const PipelineConfig& cfg_;
    std::vector<Dihedral> transforms_;
    std::vector<std::vector<FeatureGrid>> tta_features_;
};

inline double mean_train_dice(std::span<const BinaryMask> masks, std::span<const Sample> train)
{
    double s = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i)
        s += dice(masks[i], train[i].clean);
    return s / static_cast<double>(train.size());
}

// relabel_at: fixed epoch (offline replay) or, when absent, the online
// detector decides (or nothing happens when `online` is false).
inline PipelineResult run_loop(const Dataset& data, const PipelineConfig& cfg, bool online,
                               std::optional<int> relabel_at)
{
    const auto t0 = std::chrono::steady_clock::now();
    auto models = initial_models(cfg);
    std::vector<BinaryMask> masks;
    for (const auto& s : data.train)
        masks.push_back(s.noisy);
    UncertaintyEstimator estimator(cfg, data.train);
    OnlineEpochDetector detector(cfg.warmup, cfg.patience);

    std::vector<UncertaintyMap> candidate_maps; // maps of the detector's current minimum
    std::optional<DiceReport> candidate_report;
    std::optional<RelabelEvent> event;
    TrainingTrace trace;

    auto record = [&](int epoch) {
        auto maps = estimator.maps(models, data.train);
        const double sigma = cumulative_uncertainty(maps).sigma_u;
        const auto report = evaluate_model(models[0], data.test);
        trace.append(epoch, sigma, report.d_clean, report.d_noisy);
        return std::pair{std::move(maps), report};
    };

    auto apply_relabel = [&](int detected, int applied_after,
                             const std::vector<UncertaintyMap>& maps, const DiceReport& at) {
        RelabelEvent ev;
        ev.detected_epoch = detected;
        ev.applied_after_epoch = applied_after;
        ev.train_dice_before = mean_train_dice(masks, data.train);
        std::size_t changed = 0, total = 0;
        for (std::size_t i = 0; i < masks.size(); ++i) {
            auto next = relabel(masks[i], maps[i], cfg.relabel);
            for (std::size_t p = 0; p < next.size(); ++p)
                changed += next[p] != masks[i][p];
            total += next.size();
            masks[i] = std::move(next);
        }
        ev.flipped_fraction = static_cast<double>(changed) / static_cast<double>(total);
        ev.train_dice_after = mean_train_dice(masks, data.train);
        ev.test_at_detection = at;
        event = ev;
    };

    record(0);
    for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        std::vector<TrainingExample> examples;
        examples.reserve(masks.size());
        for (std::size_t i = 0; i < masks.size(); ++i)
            examples.push_back({&data.train[i].features, &masks[i]});
        for (std::size_t j = 0; j < models.size(); ++j) {
            TrainConfig member_cfg = cfg.train;
            member_cfg.seed = member_seed(cfg.train.seed, j);
            member_cfg.learning_rate = cfg.train.learning_rate_at(epoch);
            models[j] = train_epoch(models[j], examples, member_cfg);
        }
        auto [maps, report] = record(epoch);
        if (event)
            continue;
        if (relabel_at) {
            if (epoch == *relabel_at)
                apply_relabel(epoch, epoch, maps, report);
            continue;
        }
        if (!online)
            continue;
        const auto previous_candidate = detector.candidate();
        const auto fired = detector.observe(epoch, trace.records().back().delta_sigma_u);
        if (detector.candidate() != previous_candidate) {
            candidate_maps = std::move(maps);
            candidate_report = report;
        }
        if (fired)
            apply_relabel(*fired, epoch, candidate_maps, *candidate_report);
    }

    PipelineResult result{models[0], std::move(trace), std::move(masks), event,
                          evaluate_model(models[0], data.test), 0.0};
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace detail

/// Full loop. Mode none trains on the noisy masks throughout; online
/// relabels when the patience detector fires; offline runs once without
/// correction, picks the argmin epoch retrospectively, and replays the
/// (deterministic) run relabeling right after that epoch.
inline PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& cfg)
{
    cfg.validate();
    if (data.train.empty() || data.test.empty())
        throw ParameterError("pipeline needs nonempty train and test splits");
    switch (cfg.mode) {
    case DetectorMode::none:
        return detail::run_loop(data, cfg, false, std::nullopt);
    case DetectorMode::online:
        return detail::run_loop(data, cfg, true, std::nullopt);
    case DetectorMode::offline: {
        auto probe = detail::run_loop(data, cfg, false, std::nullopt);
        std::optional<int> epoch;
        try {
            epoch = detect_relabel_epoch(probe.trace, cfg.warmup);
        } catch (const NotEnoughData&) {
            return probe;
        }
        auto replay = detail::run_loop(data, cfg, false, epoch);
        replay.seconds += probe.seconds;
        return replay;
    }
    }
    throw ParameterError("unknown detector mode");
}

struct MethodComparison {
    EnsembleMethod method;
    PipelineResult result;
};

/// Same data, seeds and settings; only the ensemble method changes.
inline std::vector<MethodComparison> compare_methods(const Dataset& data,
                                                     const PipelineConfig& cfg)
{
    std::vector<MethodComparison> out;
    for (auto m : {EnsembleMethod::mcdo, EnsembleMethod::de, EnsembleMethod::tta}) {
        PipelineConfig c = cfg;
        c.ensemble.method = m;
        if (m == EnsembleMethod::tta && c.ensemble.n > 8)
            c.ensemble.n = 8;
        out.push_back({m, run_pipeline(data, c)});
    }
    return out;
}

// ----------------------------------------------------------------- outputs

inline constexpr const char* kReportHeader = "stage,epoch,d_clean,d_noisy,flipped_fraction,note";
inline constexpr const char* kNoRelabelNote = "no relabeling performed";

/// One `before` row (test Dice of the model at the detected epoch) and one
/// `after` row (final model), or a single `final` row stating that no
/// relabeling happened.
inline std::string report_to_csv(const PipelineResult& r)
{
    using detail::format_double;
    std::ostringstream os;
    os << kReportHeader << '\n';
    const int last = r.trace.empty() ? 0 : r.trace.records().back().epoch;
    if (r.relabel) {
        const auto& ev = *r.relabel;
        os << "before," << ev.detected_epoch << ',' << format_double(ev.test_at_detection.d_clean)
           << ',' << format_double(ev.test_at_detection.d_noisy) << ",,detected epoch\n";
        os << "after," << last << ',' << format_double(r.final_report.d_clean) << ','
           << format_double(r.final_report.d_noisy) << ',' << format_double(ev.flipped_fraction)
           << ",relabeled after epoch " << ev.applied_after_epoch << '\n';
    } else {
        os << "final," << last << ',' << format_double(r.final_report.d_clean) << ','
           << format_double(r.final_report.d_noisy) << ",," << kNoRelabelNote << '\n';
    }
    return os.str();
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text)
{
    dump(path, std::vector<char>(text.begin(), text.end()));
}

} // namespace detail

/// trace.csv, report.csv and relabeled/<name>.pgm (the training masks as
/// used in the final epoch).
inline void write_pipeline_outputs(const PipelineResult& r, std::span<const Sample> train,
                                   const fs::path& dir)
{
    if (train.size() != r.train_masks.size())
        throw ParameterError("write_pipeline_outputs: train split does not match the result");
    fs::create_directories(dir / "relabeled");
    write_trace(r.trace, dir / "trace.csv");
    detail::write_text(dir / "report.csv", report_to_csv(r));
    for (std::size_t i = 0; i < train.size(); ++i)
        write_mask(r.train_masks[i], dir / "relabeled" / (train[i].name + ".pgm"));
}

inline constexpr const char* kComparisonHeader =
    "method,d_clean,d_noisy,relabel_epoch,flipped_fraction,seconds";

inline std::string comparison_to_csv(std::span<const MethodComparison> rows)
{
    using detail::format_double;
    std::ostringstream os;
    os << kComparisonHeader << '\n';
    for (const auto& row : rows) {
        const auto& r = row.result;
        os << to_string(row.method) << ',' << format_double(r.final_report.d_clean) << ','
           << format_double(r.final_report.d_noisy) << ',';
        if (r.relabel)
            os << r.relabel->detected_epoch << ',' << format_double(r.relabel->flipped_fraction);
        else
            os << ',';
        os << ',' << format_double(r.seconds) << '\n';
    }
    return os.str();
}

/// comparison.csv plus one subdirectory of regular outputs per method.
inline void write_comparison_outputs(std::span<const MethodComparison> rows,
                                     std::span<const Sample> train, const fs::path& dir)
{
    fs::create_directories(dir);
    detail::write_text(dir / "comparison.csv", comparison_to_csv(rows));
    for (const auto& row : rows)
        write_pipeline_outputs(row.result, train, dir / to_string(row.method));
}

} // namespace maskmend
