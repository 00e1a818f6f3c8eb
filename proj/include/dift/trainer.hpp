// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Training loop: pair batches rendered under the current lighting pattern,
// pair loss, Adam on the network and (in joint mode) on the pattern.

#pragma once

#include "dift/net.hpp"
#include "dift/photometry.hpp"
#include "dift/tensordata.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dift {

enum class LightingMode { Joint, Fixed };

struct TrainConfig {
    int iterations = 20000;
    int batch = 12; ///< n groups per batch, capped at w_neg^2
    double lambda = 0.01;
    double learning_rate = 1e-4;
    double lighting_learning_rate = 1e-4;
    TensorShape shape;
    int hidden = kDefaultHidden;
    int w_neg = 5;
    double noise_sigma = kMeasurementNoiseSigma;
    LightingMode lighting = LightingMode::Joint;
    std::optional<LightingPattern> fixed_pattern; ///< required in fixed mode
    std::uint64_t seed = 1;
    int checkpoint_every = 0; ///< 0 disables intermediate checkpoints
    std::filesystem::path checkpoint_dir;
    int log_every = 100;

    void validate() const;
    int effective_batch() const;
};

struct TrainLogRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double loss_pos = 0.0;
    double loss_neg = 0.0;
    double mean_pos = 0.0;
    double mean_neg = 0.0;
    double intensity_min = 0.0;
    double intensity_mean = 0.0;
    double intensity_max = 0.0;
    double wall_seconds = 0.0;

    std::string to_json() const;
};

struct TrainResult {
    Checkpoint checkpoint; ///< final params, pattern and optimizer state
    std::vector<TrainLogRecord> log;
};

using TrainLogSink = std::function<void(const TrainLogRecord &)>;

/// Runs `config.iterations` steps from a fresh initialization. The dataset
/// shape must equal config.shape.
TrainResult train(const Dataset &dataset, const TrainConfig &config, const TrainLogSink &sink = {});

/// Continues from `start` (e.g. a loaded checkpoint) until config.iterations.
TrainResult train_from(const Dataset &dataset, const TrainConfig &config, Checkpoint start,
                       const TrainLogSink &sink = {});

/// Network initialization and pattern used at step 0.
Checkpoint initial_checkpoint(const Dataset &dataset, const TrainConfig &config);

/// Four LEDs at full intensity, one per side face at the top corner.
LightingPattern four_point_pattern(const LightRig &rig);

// Pieces of one training step, exposed for gradient checks.

struct RenderedBatch {
    Eigen::MatrixXd inputs;     ///< input_dim x 2n, anchors then seconds interleaved per group
    Eigen::MatrixXd view_specs; ///< 2 x 2n
    std::vector<FeatureTag> tags;
    std::vector<InputTensor> tensors;
    std::vector<const AttributeTensor *> sources;
};

/// Renders every tensor of `batch` (anchor, second per group) under the
/// given intensities. `noise` null means noise-free.
RenderedBatch render_batch(const PairBatch &batch, std::span<const double> intensities, int channel, Rng *noise,
                           double sigma);

struct BatchGradients {
    PairLoss loss;
    NetworkGrads network;
    Eigen::MatrixXd d_inputs;
    PatternGrad pattern;
};

/// Loss and its gradients for one rendered batch; pattern gradients only
/// when `with_pattern`.
BatchGradients batch_gradients(const NetworkParams &params, const LightingPattern &pattern,
                               const RenderedBatch &rendered, int channel, double lambda, bool with_pattern);

struct HeldoutMetrics {
    double mean_positive = 0.0;
    double mean_negative = 0.0;
    double margin = 0.0; ///< mean_negative - mean_positive
    std::size_t positive_pairs = 0;
    std::size_t negative_pairs = 0;
};

struct HeldoutOptions {
    int batches = 32;
    int batch = 12;
    int w_neg = 5;
    std::uint64_t seed = 0x5eed;
};

/// Noise-free pair distances on a disjoint dataset, over all channels.
HeldoutMetrics evaluate_heldout(const NetworkParams &params, const LightingPattern &pattern, const Dataset &heldout,
                                const HeldoutOptions &options = {});

} // namespace dift
