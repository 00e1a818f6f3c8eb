// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Ground-truth correspondences on synthetic captures, nearest-neighbor
// matching metrics and the ablation driver.

#pragma once

#include "dift/extract.hpp"
#include "dift/trainer.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace dift {

struct CorrespondenceView {
    PixelRef pixel;                     ///< pixel containing the projection
    Vec2 projection = Vec2::Zero();     ///< continuous image location
    bool visible = false;
};

struct Correspondence {
    PointId id;
    Vec3 point_object = Vec3::Zero();
    std::vector<CorrespondenceView> views; ///< indexed by view

    int visible_count() const;
};

struct CorrespondenceSet {
    int capture = 0;
    int view_count = 0;
    std::vector<Correspondence> entries;
};

/// Samples `count` surface points uniformly over the valid pixels of all
/// views and records where each is visible.
CorrespondenceSet build_correspondences(const Dataset &dataset, int capture, std::size_t count, Rng &rng);

void save_correspondences(const std::filesystem::path &path, const CorrespondenceSet &set);
CorrespondenceSet load_correspondences(const std::filesystem::path &path);

struct MatchResult {
    double percent = 0.0;
    std::size_t queries = 0;
    std::size_t correct = 0;
};

inline constexpr double kInfiniteTolerance = std::numeric_limits<double>::infinity();

/// For every entry visible at a mapped view v and at v + gap, finds the
/// valid pixel of view v + gap whose descriptor is nearest (Euclidean, ties
/// to the lowest pixel index) to the query's; a hit lies within `tol`
/// pixels of the true projection. `query_views` restricts the views queried
/// from (empty: every mapped view).
MatchResult matching_accuracy(std::span<const FeatureMap> maps, const CorrespondenceSet &set, int gap, double tol,
                              std::span<const int> query_views = {});

/// Same harness after shuffling each map's descriptors among its valid pixels.
MatchResult chance_floor(std::span<const FeatureMap> maps, const CorrespondenceSet &set, int gap, double tol,
                         std::uint64_t seed, std::span<const int> query_views = {});

/// Raw w x w RGB windows as descriptors (outside or invalid pixels read 0).
std::vector<FeatureMap> window_descriptors(const MeasurementStack &stack, std::span<const int> views, int window);

/// Window SSD matching from each of `query_views` to its view + gap.
MatchResult baseline_window_matching(const MeasurementStack &stack, std::span<const int> query_views,
                                     const CorrespondenceSet &set, int gap, double tol, int window = 5);

/// PCA-RGB images as 3D descriptors.
std::vector<FeatureMap> rgb_descriptors(std::span<const FeatureMap> maps, const PcaProjection &pca);

struct MatchingProtocol {
    std::vector<int> query_views; ///< empty: 12 evenly spaced views
    std::vector<int> gaps{1, 10, 45};
    std::vector<double> tolerances{1.0, 2.0};
    int baseline_window = 5;
    std::uint64_t seed = 7;
};

struct MatchingScore {
    int gap = 0;
    double tol = 0.0;
    MatchResult dift;
    MatchResult pca_rgb;
    MatchResult baseline;
    MatchResult chance;
};

std::vector<int> protocol_query_views(const MatchingProtocol &protocol, int view_count);

/// Renders the needed views under `pattern`, extracts features and scores
/// every (gap, tolerance) pair.
std::vector<MatchingScore> evaluate_matching(const Dataset &dataset, const NetworkParams &params,
                                             const LightingPattern &pattern, const CorrespondenceSet &set,
                                             const MatchingProtocol &protocol);

//---------------------------------------------------------------------------

struct AblationAxes {
    std::vector<double> lambdas;
    std::vector<TensorShape> shapes;
    std::vector<int> w_negs;
    std::vector<double> intervals_deg;
    std::vector<LightingMode> lightings;

    bool empty() const;
};

struct AblationRow {
    std::string axis; ///< "base" or the varied axis
    TrainConfig config;
    double interval_deg = 1.0;
    HeldoutMetrics metrics;
    double accuracy_1px = 0.0;
    double accuracy_2px = 0.0;
    double wall_seconds = 0.0;
};

struct AblationReport {
    int gap = 10;
    std::vector<AblationRow> rows;

    std::string table() const; ///< tab-delimited, one header line
    std::string to_json() const;
};

struct AblationSettings {
    TrainConfig base;
    double base_interval_deg = 1.0;
    HeldoutOptions heldout;
    int gap = 10;
    std::size_t correspondence_points = 300;
    MatchingProtocol protocol;
};

struct DatasetPair {
    Dataset *train = nullptr;
    Dataset *heldout = nullptr;
};

/// Supplies training and held-out datasets for an angular interval.
using DatasetSource = std::function<DatasetPair(double interval_deg)>;

/// Trains and scores the base configuration with each axis value swapped
/// in, one axis at a time. Empty axes give a single base row.
AblationReport run_ablations(const AblationSettings &settings, const AblationAxes &axes, const DatasetSource &source,
                             const std::function<void(const AblationRow &)> &on_row = {});

std::string shape_name(TensorShape shape);

} // namespace dift
