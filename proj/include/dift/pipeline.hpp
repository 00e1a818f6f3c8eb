// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Command layer behind the `dift` executable. Each cmd_* returns the JSON
// object printed as its summary line.

#pragma once

#include "dift/evalsuite.hpp"
#include "dift/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dift {

inline constexpr const char *kToolVersion = "0.1.0";

struct ObjectSpec {
    std::uint64_t seed = 1;
    ShapeFamily family = ShapeFamily::Blob;
};

struct PipelineConfig {
    std::vector<ObjectSpec> train_objects{{11, ShapeFamily::Blob}, {12, ShapeFamily::Superellipsoid},
                                          {13, ShapeFamily::Torus}};
    std::vector<ObjectSpec> heldout_objects{{101, ShapeFamily::Blob}};

    int width = 64;
    int height = 64;
    int views = 360;
    double interval_deg = 1.0;
    double camera_distance = 2.0;
    double elevation_deg = 45.0;

    RigConfig rig;
    TensorShape shape;

    int iterations = 20000;
    int batch = 12;
    double lambda = 0.01;
    double learning_rate = 1e-4;
    double lighting_learning_rate = 1e-4;
    int w_neg = 5;
    double noise_sigma = kMeasurementNoiseSigma;
    std::string lighting = "joint"; ///< joint | fixed4 | fixed:<pattern file>
    std::uint64_t seed = 1;
    int checkpoint_every = 0;
    int log_every = 100;
    int hidden = kDefaultHidden;

    std::size_t correspondences = 1000;
    std::uint64_t eval_seed = 7;
    std::vector<int> gaps{1, 10, 45};
    std::vector<double> tolerances{1.0, 2.0};
    int query_views = 12;
    int heldout_batches = 32;
    int baseline_window = 5;

    int ablate_iterations = 2000;
    std::vector<double> ablate_lambdas{0.1, 0.01, 0.001};
    std::vector<TensorShape> ablate_shapes{{5, 5}, {5, 1}, {1, 5}};
    std::vector<int> ablate_w_negs{3, 5, 7};
    std::vector<double> ablate_intervals{1.0, 2.0, 4.0};
    std::vector<std::string> ablate_lightings{"joint", "fixed4"};

    static PipelineConfig from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;
    void validate() const;

    CaptureGeometry geometry(double interval_override = 0.0) const;
    /// Training settings; resolves the lighting mode against `rig`.
    TrainConfig train_config(const LightRig &rig) const;
    HeldoutOptions heldout_options() const;
    MatchingProtocol matching_protocol() const;
};

/// Reads a JSON config (missing keys keep their defaults).
PipelineConfig load_config(const std::filesystem::path &path);
/// Applies "dotted.key=value"; the value is parsed as JSON, else taken as a string.
void apply_override(nlohmann::json &config, const std::string &assignment);

TensorShape parse_shape(const std::string &text); ///< "5x5x5"
LightingMode parse_lighting(const std::string &text);

/// Generates and captures the listed objects.
Dataset generate_dataset(std::span<const ObjectSpec> objects, const CaptureGeometry &geometry,
                         const RigConfig &rig_config, TensorShape shape);

/// Lists fields that differ between a checkpoint and a dataset as
/// "name: checkpoint=... dataset=..." lines (empty when compatible).
std::vector<std::string> checkpoint_mismatch(const Checkpoint &checkpoint, const Dataset &dataset);

void write_provenance(const std::filesystem::path &dir, const std::string &command, const PipelineConfig &config,
                      const nlohmann::json &inputs);

nlohmann::json cmd_gen(const PipelineConfig &config, const std::filesystem::path &out);
nlohmann::json cmd_train(const PipelineConfig &config, const std::filesystem::path &dataset,
                         const std::filesystem::path &out);

struct ExtractOptions {
    std::vector<int> views; ///< empty: all
    bool raw_dump = true;
    std::vector<std::string> styles;
    int object = 0;
};
nlohmann::json cmd_extract(const PipelineConfig &config, const std::filesystem::path &checkpoint,
                           const std::filesystem::path &capture, const std::filesystem::path &out,
                           const ExtractOptions &options = {});
nlohmann::json cmd_eval(const PipelineConfig &config, const std::filesystem::path &checkpoint,
                        const std::filesystem::path &heldout, const std::filesystem::path &correspondences,
                        const std::filesystem::path &out);
nlohmann::json cmd_ablate(const PipelineConfig &config, const std::filesystem::path &out);
nlohmann::json cmd_viz(const PipelineConfig &config, const std::filesystem::path &checkpoint,
                       const std::filesystem::path &out);

} // namespace dift
