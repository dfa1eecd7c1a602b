// maskmend command line tool.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maskmend/maskmend.hpp"

namespace mm = maskmend;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_commas(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

// Noisy mask when the entry has one, otherwise the clean mask.
mm::BinaryMask training_mask(const mm::Manifest& m, const mm::ManifestEntry& e)
{
    return mm::read_mask(m.resolve(e.noisy_mask ? *e.noisy_mask : e.clean_mask));
}

void cmd_corpus(const fs::path& out, const mm::SyntheticCorpusSpec& spec)
{
    const auto corpus = mm::generate_corpus(spec);
    mm::write_corpus(corpus, out);
    std::cout << "wrote " << corpus.size() << " images to " << out.string() << '\n';
}

void cmd_synth(const mm::NoiseSpec& noise, const fs::path& in, const fs::path& out)
{
    noise.validate();
    auto m = mm::read_manifest(in);
    fs::create_directories(out / "noisy");
    const auto out_abs = fs::absolute(out);
    mm::Manifest next{out, {}};
    for (const auto& e : m.entries) {
        const auto clean = mm::read_mask(m.resolve(e.clean_mask));
        const fs::path noisy = fs::path("noisy") / (e.image.stem().string() + ".pgm");
        mm::write_mask(mm::corrupt(clean, noise), out / noisy);
        next.entries.push_back({fs::relative(fs::absolute(m.resolve(e.image)), out_abs),
                                fs::relative(fs::absolute(m.resolve(e.clean_mask)), out_abs),
                                noisy, e.split});
    }
    mm::write_manifest(next, out / "manifest.csv");
    std::cout << "wrote " << next.entries.size() << " noisy masks to " << out.string() << '\n';
}

void cmd_train(const fs::path& manifest, const mm::TrainConfig& cfg, const fs::path& out)
{
    cfg.validate();
    const auto m = mm::read_manifest(manifest);
    std::vector<mm::FeatureGrid> features;
    std::vector<mm::BinaryMask> masks;
    for (const auto& e : m.entries) {
        if (e.split != mm::Split::train)
            continue;
        const auto image = mm::read_image(m.resolve(e.image));
        auto mask = training_mask(m, e);
        mm::require_same_shape(image, mask, "train image/mask");
        features.push_back(mm::extract_features(image));
        masks.push_back(std::move(mask));
    }
    if (features.empty())
        throw mm::ManifestError("manifest has no train entries");
    std::vector<mm::TrainingExample> examples;
    for (std::size_t i = 0; i < features.size(); ++i)
        examples.push_back({&features[i], &masks[i]});
    mm::PixelClassifier model(cfg.dropout_rate, cfg.seed);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto epoch_cfg = cfg;
        epoch_cfg.learning_rate = cfg.learning_rate_at(epoch);
        auto r = mm::train_epoch_with_loss(model, examples, epoch_cfg);
        model = std::move(r.model);
        std::cerr << "epoch " << epoch << " loss " << r.mean_loss << '\n';
    }
    mm::save_model(model, out);
}

void cmd_ensemble(const mm::EnsembleSpec& spec, const std::string& model_list,
                  const fs::path& image_path, const fs::path& out)
{
    const auto paths = split_commas(model_list);
    if (paths.empty())
        throw mm::ParameterError("--model needs at least one file");
    std::vector<mm::PixelClassifier> models;
    for (const auto& p : paths)
        models.push_back(mm::load_model(p));
    const auto image = mm::read_image(image_path);
    spec.validate();
    std::optional<mm::PredictionEnsemble> ens;
    switch (spec.method) {
    case mm::EnsembleMethod::mcdo:
        if (models.size() != 1)
            throw mm::ParameterError("mcdo takes exactly one model");
        ens = mm::mcdo_ensemble(models[0], image, spec.n, spec.base_seed);
        break;
    case mm::EnsembleMethod::de:
        if (static_cast<int>(models.size()) != spec.n)
            throw mm::ParameterError("de needs n model files, got " +
                                     std::to_string(models.size()) + " for n = " +
                                     std::to_string(spec.n));
        ens = mm::de_ensemble(models, image);
        break;
    case mm::EnsembleMethod::tta:
        if (models.size() != 1)
            throw mm::ParameterError("tta takes exactly one model");
        ens = mm::tta_ensemble(models[0], image, mm::dihedral_prefix(spec.n));
        break;
    }
    mm::write_ensemble(*ens, out);
}

void cmd_uncertainty(const fs::path& ens_path, const fs::path& out)
{
    const auto ens = mm::read_ensemble(ens_path);
    const auto u = mm::aleatoric_map(ens);
    mm::write_uncertainty(u, out);
    std::cout << "sigma_u " << u.sum() << '\n';
}

void cmd_relabel(const fs::path& noisy, const fs::path& umap, const mm::RelabelSpec& spec,
                 const fs::path& out)
{
    const auto mask = mm::read_mask(noisy);
    const auto u = mm::read_uncertainty(umap);
    const auto next = mm::relabel(mask, u, spec);
    mm::write_mask(next, out);
    std::cout << "changed " << mm::changed_fraction(mask, next) << '\n';
}

void cmd_detect(const fs::path& trace, int warmup)
{
    std::cout << mm::detect_relabel_epoch(mm::read_trace(trace), warmup) << '\n';
}

void cmd_eval(const fs::path& manifest, const fs::path& model_path)
{
    const auto m = mm::read_manifest(manifest);
    const auto model = mm::load_model(model_path);
    std::vector<mm::ProbMap> preds;
    std::vector<mm::BinaryMask> clean, noisy;
    for (const auto& e : m.entries) {
        if (e.split != mm::Split::test)
            continue;
        preds.push_back(mm::predict(model, mm::read_image(m.resolve(e.image))));
        if (!e.noisy_mask)
            throw mm::ManifestError("eval needs a noisy_mask for " + e.image.generic_string());
        clean.push_back(mm::read_mask(m.resolve(e.clean_mask)));
        noisy.push_back(mm::read_mask(m.resolve(*e.noisy_mask)));
    }
    if (preds.empty())
        throw mm::ManifestError("manifest has no test entries");
    const auto r = mm::evaluate_predictions(preds, clean, noisy);
    std::cout << "d_clean,d_noisy\n"
              << mm::detail::format_double(r.d_clean) << ','
              << mm::detail::format_double(r.d_noisy) << '\n';
}

void cmd_pipeline(const std::optional<fs::path>& config, const mm::Settings& flags)
{
    mm::Settings s;
    if (config)
        s = mm::read_settings(*config);
    const auto job = mm::job_from_settings(mm::merge_settings(std::move(s), flags));
    const auto data = mm::load_job_dataset(job);
    if (job.compare) {
        const auto rows = mm::compare_methods(data, job.pipeline);
        mm::write_comparison_outputs(rows, data.train, job.out);
        std::cout << mm::comparison_to_csv(rows);
        return;
    }
    const auto r = mm::run_pipeline(data, job.pipeline);
    mm::write_pipeline_outputs(r, data.train, job.out);
    std::cout << mm::report_to_csv(r);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"maskmend: uncertainty-driven repair of noisy segmentation masks"};
    app.require_subcommand(1);

    // corpus
    auto* corpus = app.add_subcommand("corpus", "generate a synthetic blob corpus");
    fs::path corpus_out;
    mm::SyntheticCorpusSpec cspec;
    corpus->add_option("--out", corpus_out, "output directory")->required();
    corpus->add_option("--train", cspec.train_count, "train images");
    corpus->add_option("--test", cspec.test_count, "test images");
    corpus->add_option("--size", cspec.size, "image side length");
    corpus->add_option("--contrast", cspec.contrast, "foreground contrast");
    corpus->add_option("--noise", cspec.noise, "additive noise sigma");
    corpus->add_option("--seed", cspec.seed, "corpus seed");

    // synth
    auto* synth = app.add_subcommand("synth", "corrupt clean masks");
    std::string kind = "polygon";
    mm::NoiseSpec noise;
    fs::path synth_in, synth_out;
    synth->add_option("--kind", kind, "polygon or smooth");
    synth->add_option("--vertices", noise.vertex_count, "simplified polygon vertex count")
        ->required();
    synth->add_option("--samples", noise.samples_per_segment, "spline samples per segment");
    synth->add_option("--in", synth_in, "input manifest")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train a pixel classifier");
    fs::path train_manifest, train_out;
    mm::TrainConfig tcfg;
    train->add_option("--manifest", train_manifest, "manifest CSV")->required();
    train->add_option("--epochs", tcfg.epochs, "epochs");
    train->add_option("--seed", tcfg.seed, "seed");
    train->add_option("--dropout", tcfg.dropout_rate, "dropout rate");
    train->add_option("--lr", tcfg.learning_rate, "learning rate");
    train->add_option("--lr-final", tcfg.final_lr_fraction,
                      "last-epoch rate as a fraction of --lr (cosine decay)");
    train->add_option("--batch-size", tcfg.batch_size, "minibatch size in pixels");
    train->add_option("--out", train_out, "model file")->required();

    // ensemble
    auto* ensemble = app.add_subcommand("ensemble", "predict an ensemble for one image");
    std::string method = "mcdo", models;
    mm::EnsembleSpec espec;
    fs::path ens_image, ens_out;
    ensemble->add_option("--method", method, "mcdo, de or tta");
    ensemble->add_option("-n", espec.n, "ensemble size");
    ensemble->add_option("--base-seed", espec.base_seed, "first dropout seed (mcdo)");
    ensemble->add_option("--model", models, "model file(s), comma separated")->required();
    ensemble->add_option("--image", ens_image, "input image")->required();
    ensemble->add_option("--out", ens_out, "ensemble tensor")->required();

    // uncertainty
    auto* unc = app.add_subcommand("uncertainty", "aleatoric map from an ensemble");
    fs::path unc_ens, unc_out;
    unc->add_option("--ens", unc_ens, "ensemble tensor")->required();
    unc->add_option("--out", unc_out, "uncertainty tensor")->required();

    // relabel
    auto* rel = app.add_subcommand("relabel", "flip uncertain labels and fill holes");
    fs::path rel_noisy, rel_umap, rel_out;
    mm::RelabelSpec rspec;
    bool no_fill = false;
    rel->add_option("--noisy", rel_noisy, "noisy mask")->required();
    rel->add_option("--umap", rel_umap, "uncertainty tensor")->required();
    rel->add_option("--delta", rspec.delta, "threshold");
    rel->add_flag("--no-fill", no_fill, "skip hole filling");
    rel->add_option("--out", rel_out, "output mask")->required();

    // detect-epoch
    auto* det = app.add_subcommand("detect-epoch", "offline relabel epoch from a trace");
    fs::path det_trace;
    int det_warmup = 1;
    det->add_option("--trace", det_trace, "trace CSV")->required();
    det->add_option("--warmup", det_warmup, "ignored leading epochs");

    // eval
    auto* ev = app.add_subcommand("eval", "test-split Dice against clean and noisy masks");
    fs::path ev_manifest, ev_model;
    ev->add_option("--manifest", ev_manifest, "manifest CSV")->required();
    ev->add_option("--model", ev_model, "model file")->required();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "train, detect, relabel and report");
    std::optional<fs::path> pipe_config;
    std::map<std::string, std::string> pipe_flags;
    pipe->add_option("--config", pipe_config, "key = value config file");
    for (const auto& key : mm::setting_keys()) {
        const std::string name = key.name;
        pipe->add_option_function<std::string>(
            "--" + name, [&pipe_flags, name](const std::string& v) { pipe_flags[name] = v; },
            key.help);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*corpus) {
            cmd_corpus(corpus_out, cspec);
        } else if (*synth) {
            noise.kind = mm::parse_noise_kind(kind);
            cmd_synth(noise, synth_in, synth_out);
        } else if (*train) {
            cmd_train(train_manifest, tcfg, train_out);
        } else if (*ensemble) {
            espec.method = mm::parse_ensemble_method(method);
            cmd_ensemble(espec, models, ens_image, ens_out);
        } else if (*unc) {
            cmd_uncertainty(unc_ens, unc_out);
        } else if (*rel) {
            rspec.fill_holes = !no_fill;
            cmd_relabel(rel_noisy, rel_umap, rspec, rel_out);
        } else if (*det) {
            cmd_detect(det_trace, det_warmup);
        } else if (*ev) {
            cmd_eval(ev_manifest, ev_model);
        } else if (*pipe) {
            cmd_pipeline(pipe_config, pipe_flags);
        }
    } catch (const mm::Error& e) {
        std::cerr << "maskmend: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "maskmend: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
