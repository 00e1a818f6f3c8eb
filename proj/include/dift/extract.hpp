// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Runtime path: measurement images under a lighting pattern, per-pixel
// feature maps, PCA to RGB, and derived visualizations.

#pragma once

#include "dift/image_io.hpp"
#include "dift/net.hpp"
#include "dift/photometry.hpp"
#include "dift/tensordata.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dift {

/// Measurement images of one turntable capture. Views that were not
/// rendered are absent (`present[v] == 0`).
struct MeasurementStack {
    int width = 0;
    int height = 0;
    double angular_interval_deg = 1.0;
    std::vector<std::uint8_t> present;
    std::vector<std::vector<double>> images; ///< per view, interleaved RGB
    std::vector<std::vector<std::uint8_t>> masks;
    std::vector<Vec2> view_specs;

    int view_count() const { return static_cast<int>(present.size()); }
    const double *pixel(int view, int col, int row) const
    {
        return images[view].data() + (static_cast<std::size_t>(row) * width + col) * 3;
    }
    bool valid(int view, int col, int row) const
    {
        return masks[view][static_cast<std::size_t>(row) * width + col] != 0;
    }
};

/// Renders the given views (all when `views` is empty) of one dataset
/// capture, noise-free, through the same OLAT path as training.
MeasurementStack render_measurements(const Dataset &dataset, int capture, const LightingPattern &pattern,
                                     std::span<const int> views = {});

/// The w_s x w_s x w_a measurement tensor around a pixel, in training layout.
InputTensor measurement_tensor(const MeasurementStack &stack, int view, PixelRef pixel, TensorShape shape);

/// Views needed around `views` for tensors of angular width w_a.
std::vector<int> views_with_neighbors(std::span<const int> views, int angular, int view_count);

/// Per-view descriptor image. Feature maps have dims = 30 (three 10D blocks);
/// the matching harness also accepts other descriptor widths.
struct FeatureMap {
    int width = 0;
    int height = 0;
    int view = 0;
    int dims = 3 * kFeatureDim;
    std::vector<float> data; ///< dims per pixel, zero for invalid pixels
    std::vector<std::uint8_t> valid;

    FeatureMap() = default;
    FeatureMap(int w, int h, int v, int d)
        : width(w), height(h), view(v), dims(d), data(static_cast<std::size_t>(w) * h * d, 0.0f),
          valid(static_cast<std::size_t>(w) * h, 0)
    {
    }
    float *at(int col, int row) { return data.data() + (static_cast<std::size_t>(row) * width + col) * dims; }
    const float *at(int col, int row) const
    {
        return data.data() + (static_cast<std::size_t>(row) * width + col) * dims;
    }
    bool is_valid(int col, int row) const { return valid[static_cast<std::size_t>(row) * width + col] != 0; }
    std::size_t valid_count() const;
};

/// Features for each of `views` (all views when empty). Every angular
/// neighbor of a requested view must be present in the stack.
std::vector<FeatureMap> extract_features(const MeasurementStack &stack, const NetworkParams &params,
                                         std::span<const int> views = {});

inline constexpr std::size_t kPcaMinSamples = 1000;

struct PcaProjection {
    Eigen::VectorXd mean;        ///< D
    Eigen::MatrixXd basis;       ///< D x 3, orthonormal columns
    Eigen::VectorXd eigenvalues; ///< all D, descending
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Ones();

    Eigen::Vector3d project(const Eigen::VectorXd &x) const { return basis.transpose() * (x - mean); }
};

/// PCA of row samples (N x D) with eigenvectors sign-fixed so the
/// largest-magnitude entry of each is positive.
PcaProjection fit_pca(const Eigen::MatrixXd &samples, std::size_t min_samples = kPcaMinSamples);
/// PCA over every valid pixel of every map.
PcaProjection fit_pca(std::span<const FeatureMap> maps);

/// 8-bit code of a projected coordinate on one axis.
std::uint8_t quantize_axis(double value, double lo, double hi);
RgbImage project_quantize(const FeatureMap &map, const PcaProjection &pca);

/// One image per first-layer filter: w_a panels of w_s x w_s cells, red for
/// positive and green for negative weights, scaled by the filter's max |w|.
RgbImage filter_image(std::span<const double> filter, TensorShape shape, int cell_px = 8, int gap_px = 2);
std::vector<std::filesystem::path> visualize_filters(const NetworkParams &params, const std::filesystem::path &dir);

enum class StyleMode { Detail, Cartoon, Sketch };
StyleMode parse_style_mode(const std::string &name);

/// Feature-space Laplacian magnitude per pixel (0 for invalid pixels).
std::vector<double> detail_map(const FeatureMap &map);
RgbImage stylize(const FeatureMap &map, const PcaProjection &pca, StyleMode mode, double sketch_threshold = 0.25);

// DIFTFEAT raw dump of feature maps; PCA as JSON.
void save_features(const std::filesystem::path &path, std::span<const FeatureMap> maps);
std::vector<FeatureMap> load_features(const std::filesystem::path &path);
void save_pca(const std::filesystem::path &path, const PcaProjection &pca);
PcaProjection load_pca(const std::filesystem::path &path);

} // namespace dift
