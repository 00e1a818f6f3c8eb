// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/tensordata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dift {

namespace {

constexpr double kSamePointTolerance = 1e-3;
constexpr int kSecondViewTries = 32;
constexpr int kAnchorRetries = 200;

} // namespace

void TensorShape::validate() const
{
    if (spatial < 1 || angular < 1 || spatial % 2 == 0 || angular % 2 == 0)
        throw InputError("tensor dimensions must be positive and odd");
}

VisibilityMask Capture::mask(int view, int col, int row) const
{
    const auto &words = visibility[view];
    const std::size_t base = (static_cast<std::size_t>(row) * width() + col) * mask_words;
    return VisibilityMask(words.begin() + static_cast<std::ptrdiff_t>(base),
                          words.begin() + static_cast<std::ptrdiff_t>(base + mask_words));
}

void Dataset::index_pixels()
{
    valid_pixels.assign(captures.size(), {});
    for (std::size_t c = 0; c < captures.size(); ++c) {
        auto &per_view = valid_pixels[c];
        per_view.resize(captures[c].maps.size());
        for (std::size_t v = 0; v < captures[c].maps.size(); ++v) {
            const auto &recs = captures[c].maps[v].records;
            for (std::uint32_t i = 0; i < recs.size(); ++i)
                if (recs[i].valid) per_view[v].push_back(i);
        }
    }
}

Capture capture_object(SceneObject object, const CaptureGeometry &geometry, const LightRig &rig)
{
    Capture cap;
    cap.scene = std::make_shared<const TracedScene>(std::move(object));
    cap.mask_words = (rig.led_count() + 63) / 64;
    cap.maps.resize(geometry.view_count);
    cap.visibility.resize(geometry.view_count);
    const auto &cam = geometry.camera;
    for (int v = 0; v < geometry.view_count; ++v) {
        const auto pose = geometry.pose(v);
        cap.maps[v] = render_attribute_maps(*cap.scene, cam, pose);
        auto &words = cap.visibility[v];
        words.assign(static_cast<std::size_t>(cam.width) * cam.height * cap.mask_words, 0);
        parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t row) {
            for (int col = 0; col < cam.width; ++col) {
                const auto &rec = cap.maps[v].at(col, static_cast<int>(row));
                if (!rec.valid) continue;
                const auto mask = compute_visibility(rec, pose, rig, *cap.scene);
                std::copy(mask.begin(), mask.end(), words.begin() + static_cast<std::ptrdiff_t>(
                                                                        (row * cam.width + col) * cap.mask_words));
            }
        });
    }
    return cap;
}

std::shared_ptr<const OlatBasis> BasisCache::get(int capture, int view, int col, int row)
{
    const auto key = std::make_tuple(capture, view, col, row);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const auto &cap = dataset_.captures[capture];
    const auto &rec = cap.maps[view].at(col, row);
    std::shared_ptr<const OlatBasis> basis;
    if (rec.valid)
        basis = std::make_shared<const OlatBasis>(
            olat_basis(rec, cap.mask(view, col, row), dataset_.geometry.camera, dataset_.rig));
    cache_.emplace(key, basis);
    return basis;
}

AttributeTensor assemble_attribute_tensor(std::span<const AttributeMap> maps, int view_index, PixelRef pixel,
                                          TensorShape shape)
{
    shape.validate();
    if (maps.empty() || view_index < 0 || view_index >= static_cast<int>(maps.size()))
        throw InputError("view index out of range");
    const auto &center_map = maps[view_index];
    if (!center_map.inside(pixel.col, pixel.row) || !center_map.at(pixel.col, pixel.row).valid)
        throw InputError("tensor center pixel is not valid");

    const int views = static_cast<int>(maps.size());
    const int cs = shape.spatial_center(), ca = shape.angular_center();
    AttributeTensor t;
    t.shape = shape;
    t.elements.resize(shape.size());
    for (int k = 0; k < shape.angular; ++k) {
        const auto &m = maps[((view_index + k - ca) % views + views) % views];
        for (int i = 0; i < shape.spatial; ++i)
            for (int j = 0; j < shape.spatial; ++j) {
                const int col = pixel.col + j - cs, row = pixel.row + i - cs;
                if (m.inside(col, row) && m.at(col, row).valid) t.elements[shape.index(i, j, k)] = m.at(col, row);
            }
    }
    const auto &center = center_map.at(pixel.col, pixel.row);
    t.center_point_id = center.id;
    t.center_view = center_map.pose;
    t.center_point_object = center_map.pose.rotation().transpose() * center.x();
    t.view = view_index;
    t.pixel = pixel;
    return t;
}

AttributeTensor assemble_attribute_tensor(const Dataset &dataset, int capture, int view_index, PixelRef pixel,
                                          BasisCache &cache)
{
    const auto &cap = dataset.captures.at(capture);
    auto t = assemble_attribute_tensor(cap.maps, view_index, pixel, dataset.header.shape);
    t.capture = capture;
    t.bases.resize(t.elements.size());
    const int views = static_cast<int>(cap.maps.size());
    const int cs = t.shape.spatial_center(), ca = t.shape.angular_center();
    for (int k = 0; k < t.shape.angular; ++k)
        for (int i = 0; i < t.shape.spatial; ++i)
            for (int j = 0; j < t.shape.spatial; ++j) {
                const int e = t.shape.index(i, j, k);
                if (!t.elements[e].valid) continue;
                t.bases[e] = cache.get(capture, ((view_index + k - ca) % views + views) % views,
                                       pixel.col + j - cs, pixel.row + i - cs);
            }
    return t;
}

InputTensor render_input_tensor(const AttributeTensor &attr, std::span<const double> intensities, Rng *noise,
                                double sigma)
{
    InputTensor out;
    out.shape = attr.shape;
    const std::size_t n = attr.elements.size();
    for (int c = 0; c < 3; ++c) {
        out.values[c].assign(n, 0.0);
        out.gain[c].assign(n, 0.0);
    }
    out.valid.assign(n, 0);
    out.view_spec = attr.center_view.view_spec;
    std::normal_distribution<double> eps(0.0, sigma);
    for (std::size_t e = 0; e < n; ++e) {
        if (!attr.elements[e].valid) continue;
        if (e >= attr.bases.size() || !attr.bases[e]) throw InputError("attribute tensor has no cached basis");
        out.valid[e] = 1;
        const Vec3 b = render_pixel(*attr.bases[e], intensities);
        for (int c = 0; c < 3; ++c) {
            const double factor = noise ? 1.0 + eps(*noise) : 1.0;
            const double value = b[c] * factor;
            out.values[c][e] = value > 0.0 ? value : 0.0;
            out.gain[c][e] = factor > 0.0 ? factor : 0.0;
        }
    }
    return out;
}

InputTensor render_input_tensor(const AttributeTensor &attr, const LightingPattern &pattern, Rng *noise, double sigma)
{
    const auto intensities = pattern.intensities();
    return render_input_tensor(attr, std::span<const double>(intensities), noise, sigma);
}

std::optional<PixelRef> visible_pixel(const Dataset &dataset, int capture, int view, const Vec3 &point_object)
{
    const auto &cap = dataset.captures[capture];
    const auto &cam = dataset.geometry.camera;
    const auto pose = dataset.geometry.pose(view);
    const Vec3 world = pose.rotation() * point_object;
    const auto uv = cam.project(world);
    if (!uv || uv->x() < 0.0 || uv->y() < 0.0 || uv->x() >= cam.width || uv->y() >= cam.height) return std::nullopt;
    const auto hit = cap.scene->intersect(cam.ray_through(uv->x(), uv->y()), pose);
    if (!hit || (cap.scene->surface_point(*hit) - point_object).norm() > kSamePointTolerance) return std::nullopt;
    const auto rec = cap.scene->record_for_hit(*hit, pose);
    if (rec.n().dot(cam.position - world) <= 0.0) return std::nullopt;
    const PixelRef px{static_cast<int>(std::floor(uv->x())), static_cast<int>(std::floor(uv->y()))};
    if (!cap.maps[view].at(px.col, px.row).valid) return std::nullopt;
    return px;
}

namespace {

struct SecondView {
    int view;
    PixelRef pixel;
};

// Uniform over views (other than the anchor) where the point is visible.
std::optional<SecondView> sample_second_view(const Dataset &dataset, int capture, int anchor_view,
                                             const Vec3 &point_object, Rng &rng)
{
    const int views = static_cast<int>(dataset.captures[capture].maps.size());
    if (views < 2) return std::nullopt;
    std::uniform_int_distribution<int> pick(0, views - 2);
    for (int attempt = 0; attempt < kSecondViewTries; ++attempt) {
        int v = pick(rng);
        if (v >= anchor_view) ++v;
        if (auto px = visible_pixel(dataset, capture, v, point_object)) return SecondView{v, *px};
    }
    std::vector<SecondView> visible;
    for (int v = 0; v < views; ++v) {
        if (v == anchor_view) continue;
        if (auto px = visible_pixel(dataset, capture, v, point_object)) visible.push_back({v, *px});
    }
    if (visible.empty()) return std::nullopt;
    return visible[std::uniform_int_distribution<std::size_t>(0, visible.size() - 1)(rng)];
}

} // namespace

PairBatch sample_pair_batch(const Dataset &dataset, Rng &rng, int n, int w_neg, BasisCache &cache)
{
    if (dataset.captures.empty()) throw InputError("dataset is empty");
    if (n < 2) throw InputError("pair batch needs at least 2 groups");
    if (w_neg < 1 || w_neg % 2 == 0) throw InputError("w_neg must be positive and odd");
    if (dataset.valid_pixels.size() != dataset.captures.size()) throw InputError("dataset pixels are not indexed");

    const int radius = w_neg / 2;
    for (int attempt = 0; attempt < kAnchorRetries; ++attempt) {
        const int capture =
            std::uniform_int_distribution<int>(0, static_cast<int>(dataset.captures.size()) - 1)(rng);
        const auto &cap = dataset.captures[capture];
        const int view = std::uniform_int_distribution<int>(0, static_cast<int>(cap.maps.size()) - 1)(rng);
        const auto &pixels = dataset.valid_pixels[capture][view];
        if (pixels.empty()) continue;
        const auto p0 = pixels[std::uniform_int_distribution<std::size_t>(0, pixels.size() - 1)(rng)];
        const auto &map = cap.maps[view];
        const PixelRef anchor{static_cast<int>(p0 % map.width), static_cast<int>(p0 / map.width)};

        std::vector<PixelRef> candidates;
        for (int dr = -radius; dr <= radius; ++dr)
            for (int dc = -radius; dc <= radius; ++dc) {
                const PixelRef q{anchor.col + dc, anchor.row + dr};
                if ((dr || dc) && map.inside(q.col, q.row) && map.at(q.col, q.row).valid) candidates.push_back(q);
            }
        if (static_cast<int>(candidates.size()) < n - 1) continue;
        std::shuffle(candidates.begin(), candidates.end(), rng);
        candidates.insert(candidates.begin(), anchor);

        const Mat3 to_object = map.pose.rotation().transpose();
        std::vector<std::pair<PixelRef, SecondView>> chosen;
        for (std::size_t ci = 0; ci < candidates.size() && static_cast<int>(chosen.size()) < n; ++ci) {
            const auto &q = candidates[ci];
            const Vec3 p = to_object * map.at(q.col, q.row).x();
            const auto second = sample_second_view(dataset, capture, view, p, rng);
            if (!second) {
                if (ci == 0) break; // p0 itself must be usable
                continue;
            }
            chosen.emplace_back(q, *second);
        }
        if (static_cast<int>(chosen.size()) < n) continue;

        PairBatch batch;
        batch.capture = capture;
        batch.anchor_view = view;
        for (const auto &[q, second] : chosen) {
            PairGroup g;
            g.anchor = assemble_attribute_tensor(dataset, capture, view, q, cache);
            g.second = assemble_attribute_tensor(dataset, capture, second.view, second.pixel, cache);
            g.second.center_point_id = g.anchor.center_point_id;
            g.second.center_point_object = g.anchor.center_point_object;
            batch.groups.push_back(std::move(g));
        }
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) batch.negatives.emplace_back(i, j);
        return batch;
    }
    throw DataError("dataset too sparse: no anchor with " + std::to_string(n) + " usable points in a " +
                    std::to_string(w_neg) + "x" + std::to_string(w_neg) + " neighborhood");
}

} // namespace dift
