// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Spatial-angular tensors and the training dataset.
//
// A dataset holds, per object, the attribute maps of every turntable view
// plus the per-pixel LED visibility computed while generating it. OLAT
// bases are derived from those on demand; see BasisCache.

#pragma once

#include "dift/photometry.hpp"
#include "dift/scene.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

namespace dift {

struct TensorShape {
    int spatial = 5; ///< w_s, odd
    int angular = 5; ///< w_a, odd

    int size() const { return spatial * spatial * angular; }
    int spatial_center() const { return spatial / 2; }
    int angular_center() const { return angular / 2; }
    /// Flat index of element (row offset i, column offset j, view offset k).
    int index(int i, int j, int k) const { return (k * spatial + i) * spatial + j; }
    void validate() const;
    bool operator==(const TensorShape &) const = default;
};

struct CaptureGeometry {
    Camera camera;
    int view_count = 360;
    double angular_interval_deg = 1.0;

    TurntablePose pose(int view) const { return rotate_pose(view * angular_interval_deg); }
    int wrap_view(long view) const { return static_cast<int>(((view % view_count) + view_count) % view_count); }
};

/// One object captured at every turntable view.
struct Capture {
    std::shared_ptr<const TracedScene> scene;
    std::vector<AttributeMap> maps;
    /// Per view, per pixel LED visibility words (zero for invalid pixels).
    std::vector<std::vector<std::uint64_t>> visibility;
    std::size_t mask_words = 0;

    VisibilityMask mask(int view, int col, int row) const;
    int width() const { return maps.front().width; }
    int height() const { return maps.front().height; }
};

struct DatasetHeader {
    TensorShape shape;
    std::uint32_t led_count = 0;
    std::uint32_t view_count = 0;
    double angular_interval_deg = 1.0;
};

struct Dataset {
    DatasetHeader header;
    CaptureGeometry geometry;
    RigConfig rig_config;
    LightRig rig;
    std::vector<Capture> captures;

    /// Valid pixel indices per (capture, view); built by index_pixels().
    std::vector<std::vector<std::vector<std::uint32_t>>> valid_pixels;
    void index_pixels();
};

/// Renders every view of `object` and traces per-pixel LED visibility.
Capture capture_object(SceneObject object, const CaptureGeometry &geometry, const LightRig &rig);

struct PixelRef {
    int col = 0;
    int row = 0;
    bool operator==(const PixelRef &) const = default;
};

/// Memoizes OLAT bases by (capture, view, pixel) for the lifetime of one batch.
class BasisCache {
public:
    BasisCache(const Dataset &dataset) : dataset_(dataset) {}
    std::shared_ptr<const OlatBasis> get(int capture, int view, int col, int row);
    std::size_t size() const { return cache_.size(); }

private:
    const Dataset &dataset_;
    std::map<std::tuple<int, int, int, int>, std::shared_ptr<const OlatBasis>> cache_;
};

struct AttributeTensor {
    TensorShape shape;
    std::vector<AttributeRecord> elements;                 ///< flat, TensorShape::index order
    std::vector<std::shared_ptr<const OlatBasis>> bases;  ///< null for invalid elements
    PointId center_point_id;
    Vec3 center_point_object = Vec3::Zero(); ///< object-space position of the point of interest
    TurntablePose center_view;
    int capture = 0;
    int view = 0;
    PixelRef pixel;

    bool valid(int e) const { return elements[e].valid; }
};

AttributeTensor assemble_attribute_tensor(std::span<const AttributeMap> maps, int view_index, PixelRef pixel,
                                          TensorShape shape);
/// Assembles from a dataset capture and attaches cached bases.
AttributeTensor assemble_attribute_tensor(const Dataset &dataset, int capture, int view_index, PixelRef pixel,
                                          BasisCache &cache);

struct InputTensor {
    TensorShape shape;
    std::array<std::vector<double>, 3> values; ///< per channel, flat
    std::vector<std::uint8_t> valid;
    /// d value / d (basis . I) per channel: the noise factor, or 0 where clamped.
    std::array<std::vector<double>, 3> gain;
    Vec2 view_spec = Vec2(1.0, 0.0);
};

inline constexpr double kMeasurementNoiseSigma = 0.01;

/// Renders each valid element as basis . I, optionally times (1 + eps) with
/// eps ~ N(0, sigma^2), clamped below at 0.
InputTensor render_input_tensor(const AttributeTensor &attr, std::span<const double> intensities, Rng *noise,
                                double sigma = kMeasurementNoiseSigma);
InputTensor render_input_tensor(const AttributeTensor &attr, const LightingPattern &pattern, Rng *noise,
                                double sigma = kMeasurementNoiseSigma);

struct PairGroup {
    AttributeTensor anchor;
    AttributeTensor second;
};

struct PairBatch {
    int capture = 0;
    int anchor_view = 0;
    std::vector<PairGroup> groups;
    std::vector<std::pair<int, int>> negatives; ///< group index pairs at the anchor view

    std::size_t positive_count() const { return groups.size(); }
};

/// Tests whether the surface point `point_object` is seen at `view` through
/// its own projection, and returns the pixel containing that projection.
std::optional<PixelRef> visible_pixel(const Dataset &dataset, int capture, int view, const Vec3 &point_object);

PairBatch sample_pair_batch(const Dataset &dataset, Rng &rng, int n, int w_neg, BasisCache &cache);

// DIFTDATA container; byte layout in docs/FORMATS.md.
void save_dataset(const std::filesystem::path &path, const Dataset &dataset);
Dataset load_dataset(const std::filesystem::path &path);

/// Random access to a dataset file without loading every chunk.
class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path &path);

    const DatasetHeader &header() const { return proto_.header; }
    std::size_t capture_count() const { return capture_count_; }
    /// Dataset with geometry, rig and scenes, but no views loaded.
    Dataset skeleton() const;
    /// Loads one view chunk into `dataset` (which must come from skeleton()).
    void load_view(Dataset &dataset, int capture, int view) const;

private:
    struct ChunkEntry {
        std::uint32_t kind, capture, view;
        std::uint64_t offset, size, checksum;
    };
    std::vector<std::uint8_t> read_chunk(const ChunkEntry &entry) const;
    const ChunkEntry &find(std::uint32_t kind, std::uint32_t capture, std::uint32_t view) const;

    std::filesystem::path path_;
    Dataset proto_;
    std::size_t capture_count_ = 0;
    std::vector<ChunkEntry> index_;
    friend Dataset load_dataset(const std::filesystem::path &path);
};

} // namespace dift
