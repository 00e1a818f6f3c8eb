// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Per-pixel feature transform: 11 fully connected layers with leaky ReLU,
// the turntable view spec (cos, sin) concatenated after the fifth layer,
// and a final normalization to a 10D unit vector. Everything runs in double
// precision on column batches (one column per tensor).

#pragma once

#include "dift/common.hpp"
#include "dift/photometry.hpp"
#include "dift/tensordata.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dift {

inline constexpr int kLayerCount = 11;
inline constexpr int kInjectAfter = 5;
inline constexpr int kFeatureDim = 10;
inline constexpr int kDefaultHidden = 256;
inline constexpr double kLeakySlope = 0.01;
inline constexpr double kNormGuard = 1e-12;

struct DenseLayer {
    Eigen::MatrixXd weight; ///< out x in
    Eigen::VectorXd bias;
};

struct NetworkParams {
    TensorShape shape;
    int hidden = kDefaultHidden;
    std::vector<DenseLayer> layers;

    int input_dim() const { return shape.size(); }
    /// (in, out) of every layer.
    std::vector<std::pair<int, int>> width_schedule() const;
    /// Zero-valued parameters of the right shapes.
    static NetworkParams zeros(TensorShape shape, int hidden = kDefaultHidden);

    /// Flat views over every weight and bias, in layer order (weight, bias).
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    std::size_t parameter_count() const;
};

using NetworkGrads = NetworkParams;

/// Xavier-uniform weights, zero biases.
NetworkParams init_params(TensorShape shape, Rng &rng, int hidden = kDefaultHidden);

struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs; ///< input of each layer
    std::vector<Eigen::MatrixXd> pre;    ///< pre-activation of each layer
    Eigen::MatrixXd features;            ///< 10 x batch, unit columns
    Eigen::VectorXd norms;               ///< pre-normalization norms
    std::vector<bool> guarded;           ///< column hit the zero-norm guard
};

/// Batched forward pass: `inputs` is input_dim x B, `view_specs` 2 x B.
ForwardCache forward(const NetworkParams &params, const Eigen::MatrixXd &inputs, const Eigen::MatrixXd &view_specs);

/// Flattened single channel of an input tensor (invalid entries are 0).
Eigen::VectorXd tensor_column(const InputTensor &tensor, int channel);

/// Unit feature of one tensor channel; `guarded` reports the zero-norm path.
Eigen::VectorXd forward_one(const NetworkParams &params, const InputTensor &tensor, int channel,
                            bool *guarded = nullptr);

struct BackwardResult {
    NetworkGrads grads;
    Eigen::MatrixXd d_inputs; ///< input_dim x B
};

BackwardResult backward(const NetworkParams &params, const ForwardCache &cache, const Eigen::MatrixXd &d_features);

struct FeatureTag {
    int group = 0;
    int view_tag = 0; ///< 0 marks the anchor view
};

struct PairLoss {
    double loss = 0.0;
    double positive = 0.0; ///< L_pos
    double negative = 0.0; ///< L_neg
    std::size_t positive_pairs = 0;
    std::size_t negative_pairs = 0;
    Eigen::MatrixXd d_features; ///< 10 x N

    double mean_positive() const { return positive_pairs ? positive / positive_pairs : 0.0; }
    double mean_negative() const { return negative_pairs ? negative / negative_pairs : 0.0; }
};

/// L = L_pos - lambda * L_neg over summed (non-squared) Euclidean distances.
/// Positive pairs share a group with different view tags; negative pairs
/// are distinct groups both at view tag 0.
PairLoss pair_loss(const Eigen::MatrixXd &features, std::span<const FeatureTag> tags, double lambda);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;
    std::uint64_t skipped = 0; ///< steps rejected for non-finite gradients

    static AdamState for_blocks(std::span<const std::span<double>> blocks, AdamConfig config = {});
};

/// Bias-corrected Adam update. Returns false (and counts) when any gradient
/// is non-finite; parameters are then left untouched.
bool adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState &state);

/// Rows of the first weight matrix, each a flat (w_s, w_s, w_a) grid in
/// TensorShape::index order.
std::vector<std::vector<double>> first_layer_filters(const NetworkParams &params);
void set_first_layer_filters(NetworkParams &params, const std::vector<std::vector<double>> &filters);

struct Checkpoint {
    NetworkParams params;
    AdamState adam;
    LightingPattern pattern;
    AdamState pattern_adam;
    std::int64_t step = 0;
    double lambda = 0.01;
    std::uint64_t seed = 0;
    int w_neg = 5;
    double angular_interval_deg = 1.0;
    std::string lighting_mode = "joint";
};

// DIFTNETW container; layout in docs/FORMATS.md.
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace dift
