// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// dift gen|train|extract|eval|ablate|viz

#include "dift/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using nlohmann::json;

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    unsigned threads = 0;
};

json base_config(const Common &c)
{
    json j = dift::PipelineConfig{}.to_json();
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw dift::IoError("cannot open config " + c.config_path);
        try {
            j.merge_patch(json::parse(in));
        } catch (const json::exception &e) {
            throw dift::ConfigError(c.config_path + ": " + e.what());
        }
    }
    for (const auto &o : c.overrides) dift::apply_override(j, o);
    return j;
}

std::vector<int> parse_views(const std::string &text)
{
    std::vector<int> out;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto comma = text.find(',', start);
        const auto part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        try {
            out.push_back(std::stoi(part));
        } catch (const std::exception &) {
            throw dift::InputError("bad view list '" + text + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"dift: learned per-pixel features from turntable lightstage captures"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", common.overrides, "Config override key=value (repeatable)");
    app.add_option("--threads", common.threads, "Worker cap (0 = all cores)");

    std::string out, dataset, checkpoint, capture, heldout, corr, views, lighting;
    std::vector<std::string> styles;
    std::optional<int> iters, wneg, object;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda;
    bool no_raw = false;

    auto *gen = app.add_subcommand("gen", "Generate training and held-out datasets");
    gen->add_option("--out", out, "Output directory")->required();

    auto *trn = app.add_subcommand("train", "Train the feature network");
    trn->add_option("--dataset", dataset, "Training dataset")->required()->check(CLI::ExistingFile);
    trn->add_option("--out", out, "Output directory")->required();
    trn->add_option("--iters", iters, "Iterations");
    trn->add_option("--lighting", lighting, "joint | fixed4 | fixed:<pattern file>");
    trn->add_option("--seed", seed, "Seed");
    trn->add_option("--lambda", lambda, "Negative-pair weight");
    trn->add_option("--wneg", wneg, "Negative window size");

    auto *ext = app.add_subcommand("extract", "Extract feature images");
    ext->add_option("--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
    ext->add_option("--capture", capture, "Capture dataset")->required()->check(CLI::ExistingFile);
    ext->add_option("--out", out, "Output directory")->required();
    ext->add_option("--views", views, "Comma-separated view subset");
    ext->add_option("--style", styles, "detail | cartoon | sketch (repeatable)");
    ext->add_option("--object", object, "Object index within the capture");
    ext->add_flag("--no-raw", no_raw, "Skip the raw feature dump");

    auto *evl = app.add_subcommand("eval", "Held-out metrics and matching accuracy");
    evl->add_option("--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
    evl->add_option("--heldout", heldout, "Held-out dataset")->required()->check(CLI::ExistingFile);
    evl->add_option("--correspondences", corr, "Correspondence file")->required()->check(CLI::ExistingFile);
    evl->add_option("--out", out, "Output directory")->required();

    auto *abl = app.add_subcommand("ablate", "Run the ablation matrix");
    abl->add_option("--out", out, "Output directory")->required();

    auto *viz = app.add_subcommand("viz", "Render first-layer filters");
    viz->add_option("--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
    viz->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : dift::exit_code(dift::ErrorCategory::Input);
    }

    try {
        dift::set_max_threads(common.threads);
        auto j = base_config(common);
        if (iters) j["train"]["iterations"] = *iters;
        if (!lighting.empty()) j["train"]["lighting"] = lighting;
        if (seed) j["train"]["seed"] = *seed;
        if (lambda) j["train"]["lambda"] = *lambda;
        if (wneg) j["train"]["w_neg"] = *wneg;
        const auto config = dift::PipelineConfig::from_json(j);

        json summary;
        if (gen->parsed()) {
            summary = dift::cmd_gen(config, out);
        } else if (trn->parsed()) {
            summary = dift::cmd_train(config, dataset, out);
        } else if (ext->parsed()) {
            dift::ExtractOptions opts;
            if (!views.empty()) opts.views = parse_views(views);
            opts.styles = styles;
            opts.raw_dump = !no_raw;
            if (object) opts.object = *object;
            summary = dift::cmd_extract(config, checkpoint, capture, out, opts);
        } else if (evl->parsed()) {
            summary = dift::cmd_eval(config, checkpoint, heldout, corr, out);
        } else if (abl->parsed()) {
            summary = dift::cmd_ablate(config, out);
        } else if (viz->parsed()) {
            summary = dift::cmd_viz(config, checkpoint, out);
        }
        std::cout << "DIFT-SUMMARY " << summary.dump() << std::endl;
        return 0;
    } catch (const dift::Error &e) {
        std::fprintf(stderr, "dift: error: %s\n", e.what());
        return dift::exit_code(e.category());
    } catch (const std::filesystem::filesystem_error &e) {
        std::fprintf(stderr, "dift: error: %s\n", e.what());
        return dift::exit_code(dift::ErrorCategory::Io);
    } catch (const std::exception &e) {
        std::fprintf(stderr, "dift: internal error: %s\n", e.what());
        return dift::exit_code(dift::ErrorCategory::Internal);
    }
}
