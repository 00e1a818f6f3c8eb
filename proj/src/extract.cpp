// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/extract.hpp"

#include "dift/binary_io.hpp"

#include "json.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace dift {

namespace {

constexpr std::uint32_t kFeatureVersion = 1;
constexpr Eigen::Index kForwardChunk = 512;

std::vector<int> all_views(int count)
{
    std::vector<int> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) v[i] = i;
    return v;
}

int wrap(long v, int count) { return static_cast<int>(((v % count) + count) % count); }

} // namespace

MeasurementStack render_measurements(const Dataset &dataset, int capture, const LightingPattern &pattern,
                                     std::span<const int> views)
{
    pattern.validate();
    if (pattern.led_count() != dataset.rig.led_count()) throw InputError("pattern and rig LED counts differ");
    const auto &cap = dataset.captures.at(capture);
    const auto &cam = dataset.geometry.camera;
    const int count = static_cast<int>(cap.maps.size());
    const auto requested = views.empty() ? all_views(count) : std::vector<int>(views.begin(), views.end());
    const auto intensities = pattern.intensities();

    MeasurementStack s;
    s.width = cam.width;
    s.height = cam.height;
    s.angular_interval_deg = dataset.geometry.angular_interval_deg;
    s.present.assign(count, 0);
    s.images.resize(count);
    s.masks.resize(count);
    s.view_specs.assign(count, Vec2(1.0, 0.0));
    for (int v : requested) {
        if (v < 0 || v >= count) throw InputError("view " + std::to_string(v) + " out of range");
        if (s.present[v]) continue;
        const auto &map = cap.maps[v];
        s.present[v] = 1;
        s.view_specs[v] = map.pose.view_spec;
        s.images[v].assign(static_cast<std::size_t>(s.width) * s.height * 3, 0.0);
        s.masks[v].assign(static_cast<std::size_t>(s.width) * s.height, 0);
        parallel_for(static_cast<std::size_t>(s.height), [&](std::size_t row) {
            for (int col = 0; col < s.width; ++col) {
                const auto &rec = map.at(col, static_cast<int>(row));
                if (!rec.valid) continue;
                const std::size_t p = row * s.width + col;
                s.masks[v][p] = 1;
                const auto basis = olat_basis(rec, cap.mask(v, col, static_cast<int>(row)), cam, dataset.rig);
                const Vec3 value = render_pixel(basis, intensities);
                for (int c = 0; c < 3; ++c) s.images[v][p * 3 + c] = value[c];
            }
        });
    }
    return s;
}

InputTensor measurement_tensor(const MeasurementStack &stack, int view, PixelRef pixel, TensorShape shape)
{
    shape.validate();
    const int count = stack.view_count();
    InputTensor t;
    t.shape = shape;
    for (int c = 0; c < 3; ++c) {
        t.values[c].assign(shape.size(), 0.0);
        t.gain[c].assign(shape.size(), 0.0);
    }
    t.valid.assign(shape.size(), 0);
    t.view_spec = stack.view_specs[view];
    const int cs = shape.spatial_center(), ca = shape.angular_center();
    for (int k = 0; k < shape.angular; ++k) {
        const int v = wrap(static_cast<long>(view) + k - ca, count);
        if (!stack.present[v]) throw InputError("view " + std::to_string(v) + " missing from measurement stack");
        for (int i = 0; i < shape.spatial; ++i)
            for (int j = 0; j < shape.spatial; ++j) {
                const int col = pixel.col + j - cs, row = pixel.row + i - cs;
                if (col < 0 || row < 0 || col >= stack.width || row >= stack.height || !stack.valid(v, col, row))
                    continue;
                const int e = shape.index(i, j, k);
                t.valid[e] = 1;
                const double *px = stack.pixel(v, col, row);
                for (int c = 0; c < 3; ++c) {
                    t.values[c][e] = px[c];
                    t.gain[c][e] = 1.0;
                }
            }
    }
    return t;
}

std::vector<int> views_with_neighbors(std::span<const int> views, int angular, int view_count)
{
    std::set<int> out;
    for (int v : views)
        for (int k = -(angular / 2); k <= angular / 2; ++k) out.insert(wrap(static_cast<long>(v) + k, view_count));
    return {out.begin(), out.end()};
}

std::size_t FeatureMap::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::vector<FeatureMap> extract_features(const MeasurementStack &stack, const NetworkParams &params,
                                         std::span<const int> views)
{
    const auto shape = params.shape;
    const int count = stack.view_count();
    if (count < shape.angular)
        throw InputError("measurement stack has " + std::to_string(count) + " views, tensors need " +
                         std::to_string(shape.angular));
    const auto requested = views.empty() ? all_views(count) : std::vector<int>(views.begin(), views.end());
    for (int v : requested) {
        if (v < 0 || v >= count) throw InputError("view " + std::to_string(v) + " out of range");
        for (int k = -shape.angular_center(); k <= shape.angular_center(); ++k)
            if (!stack.present[wrap(static_cast<long>(v) + k, count)])
                throw InputError("view " + std::to_string(v) + " lacks angular neighbors in the stack");
    }

    std::vector<FeatureMap> out;
    out.reserve(requested.size());
    for (int v : requested) {
        FeatureMap fm(stack.width, stack.height, v, 3 * kFeatureDim);
        std::vector<PixelRef> pixels;
        for (int row = 0; row < stack.height; ++row)
            for (int col = 0; col < stack.width; ++col)
                if (stack.valid(v, col, row)) pixels.push_back({col, row});
        const auto n = static_cast<Eigen::Index>(pixels.size());
        const Eigen::Index chunks = (n + kForwardChunk - 1) / kForwardChunk;
        parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t chunk) {
            const Eigen::Index lo = static_cast<Eigen::Index>(chunk) * kForwardChunk;
            const Eigen::Index cols = std::min(kForwardChunk, n - lo);
            std::array<Eigen::MatrixXd, 3> inputs;
            for (auto &m : inputs) m.resize(shape.size(), cols);
            Eigen::MatrixXd specs(2, cols);
            for (Eigen::Index c = 0; c < cols; ++c) {
                const auto t = measurement_tensor(stack, v, pixels[lo + c], shape);
                for (int ch = 0; ch < 3; ++ch) inputs[ch].col(c) = tensor_column(t, ch);
                specs.col(c) = t.view_spec;
            }
            for (int ch = 0; ch < 3; ++ch) {
                const auto f = forward(params, inputs[ch], specs).features;
                for (Eigen::Index c = 0; c < cols; ++c) {
                    float *dst = fm.at(pixels[lo + c].col, pixels[lo + c].row) + ch * kFeatureDim;
                    for (int d = 0; d < kFeatureDim; ++d) dst[d] = static_cast<float>(f(d, c));
                }
            }
            for (Eigen::Index c = 0; c < cols; ++c)
                fm.valid[static_cast<std::size_t>(pixels[lo + c].row) * fm.width + pixels[lo + c].col] = 1;
        });
        out.push_back(std::move(fm));
    }
    return out;
}

//---------------------------------------------------------------------------

PcaProjection fit_pca(const Eigen::MatrixXd &samples, std::size_t min_samples)
{
    const auto n = samples.rows();
    if (static_cast<std::size_t>(n) < min_samples || n < 4)
        throw InputError("PCA needs at least " + std::to_string(std::max<std::size_t>(min_samples, 4)) +
                         " samples, got " + std::to_string(n));
    if (samples.cols() < 3) throw InputError("PCA needs at least 3 dimensions");
    if (!samples.allFinite()) throw DataError("PCA samples contain non-finite values");

    PcaProjection p;
    p.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - p.mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw DataError("covariance eigendecomposition failed");
    const auto d = cov.rows();
    p.eigenvalues = solver.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
    const double scale = std::max(std::abs(p.eigenvalues[0]), 1e-300);
    if (!(p.eigenvalues[2] > 1e-12 * scale) || !(p.eigenvalues[0] > 0.0))
        throw DataError("feature covariance has rank below 3");
    p.basis = vectors.leftCols(3);
    for (int c = 0; c < 3; ++c) {
        Eigen::Index arg = 0;
        for (Eigen::Index r = 1; r < d; ++r)
            if (std::abs(p.basis(r, c)) > std::abs(p.basis(arg, c))) arg = r;
        if (p.basis(arg, c) < 0.0) p.basis.col(c) *= -1.0;
    }
    const Eigen::MatrixXd projected = centered * p.basis;
    p.min = projected.colwise().minCoeff().transpose();
    p.max = projected.colwise().maxCoeff().transpose();
    for (int c = 0; c < 3; ++c)
        if (!(p.max[c] > p.min[c])) throw DataError("projected features have zero range");
    return p;
}

PcaProjection fit_pca(std::span<const FeatureMap> maps)
{
    if (maps.empty()) throw InputError("no feature maps for PCA");
    const int dims = maps.front().dims;
    std::size_t total = 0;
    for (const auto &m : maps) {
        if (m.dims != dims) throw InputError("feature maps disagree on dimension");
        total += m.valid_count();
    }
    Eigen::MatrixXd samples(static_cast<Eigen::Index>(total), dims);
    Eigen::Index r = 0;
    for (const auto &m : maps)
        for (int row = 0; row < m.height; ++row)
            for (int col = 0; col < m.width; ++col) {
                if (!m.is_valid(col, row)) continue;
                const float *f = m.at(col, row);
                for (int d = 0; d < dims; ++d) samples(r, d) = f[d];
                ++r;
            }
    return fit_pca(samples);
}

std::uint8_t quantize_axis(double value, double lo, double hi)
{
    const double t = std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

RgbImage project_quantize(const FeatureMap &map, const PcaProjection &pca)
{
    if (pca.mean.size() != map.dims) throw InputError("PCA dimension differs from feature maps");
    RgbImage img(map.width, map.height);
    Eigen::VectorXd x(map.dims);
    for (int row = 0; row < map.height; ++row)
        for (int col = 0; col < map.width; ++col) {
            if (!map.is_valid(col, row)) continue;
            const float *f = map.at(col, row);
            for (int d = 0; d < map.dims; ++d) x[d] = f[d];
            const Eigen::Vector3d p = pca.project(x);
            auto *px = img.at(col, row);
            for (int c = 0; c < 3; ++c) px[c] = quantize_axis(p[c], pca.min[c], pca.max[c]);
        }
    return img;
}

//---------------------------------------------------------------------------

RgbImage filter_image(std::span<const double> filter, TensorShape shape, int cell_px, int gap_px)
{
    if (filter.size() != static_cast<std::size_t>(shape.size())) throw InputError("filter size differs from shape");
    if (cell_px < 1 || gap_px < 0) throw InputError("invalid filter layout");
    double peak = 0.0;
    for (double w : filter) peak = std::max(peak, std::abs(w));
    const int panel = shape.spatial * cell_px;
    RgbImage img(shape.angular * panel + (shape.angular - 1) * gap_px, panel);
    if (peak == 0.0) return img;
    for (int k = 0; k < shape.angular; ++k)
        for (int i = 0; i < shape.spatial; ++i)
            for (int j = 0; j < shape.spatial; ++j) {
                const double w = filter[shape.index(i, j, k)];
                const auto level = static_cast<std::uint8_t>(std::lround(255.0 * std::abs(w) / peak));
                for (int y = 0; y < cell_px; ++y)
                    for (int x = 0; x < cell_px; ++x) {
                        auto *px = img.at(k * (panel + gap_px) + j * cell_px + x, i * cell_px + y);
                        px[w > 0.0 ? 0 : 1] = w == 0.0 ? 0 : level;
                    }
            }
    return img;
}

std::vector<std::filesystem::path> visualize_filters(const NetworkParams &params, const std::filesystem::path &dir)
{
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    const auto filters = first_layer_filters(params);
    for (std::size_t f = 0; f < filters.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "filter_%04zu.png", f);
        written.push_back(dir / name);
        write_png(written.back(), filter_image(filters[f], params.shape));
    }
    return written;
}

StyleMode parse_style_mode(const std::string &name)
{
    if (name == "detail") return StyleMode::Detail;
    if (name == "cartoon") return StyleMode::Cartoon;
    if (name == "sketch") return StyleMode::Sketch;
    throw InputError("unknown stylization mode '" + name + "' (expected detail, cartoon or sketch)");
}

std::vector<double> detail_map(const FeatureMap &map)
{
    std::vector<double> out(static_cast<std::size_t>(map.width) * map.height, 0.0);
    std::vector<double> mean(static_cast<std::size_t>(map.dims));
    static constexpr int kDc[4] = {1, -1, 0, 0}, kDr[4] = {0, 0, 1, -1};
    for (int row = 0; row < map.height; ++row)
        for (int col = 0; col < map.width; ++col) {
            if (!map.is_valid(col, row)) continue;
            std::fill(mean.begin(), mean.end(), 0.0);
            int n = 0;
            for (int k = 0; k < 4; ++k) {
                const int c = col + kDc[k], r = row + kDr[k];
                if (c < 0 || r < 0 || c >= map.width || r >= map.height || !map.is_valid(c, r)) continue;
                const float *f = map.at(c, r);
                for (int d = 0; d < map.dims; ++d) mean[d] += f[d];
                ++n;
            }
            if (n == 0) continue;
            const float *f = map.at(col, row);
            double sq = 0.0;
            for (int d = 0; d < map.dims; ++d) {
                const double diff = f[d] - mean[d] / n;
                sq += diff * diff;
            }
            out[static_cast<std::size_t>(row) * map.width + col] = std::sqrt(sq);
        }
    return out;
}

RgbImage stylize(const FeatureMap &map, const PcaProjection &pca, StyleMode mode, double sketch_threshold)
{
    if (mode == StyleMode::Cartoon) {
        auto img = project_quantize(map, pca);
        for (auto &v : img.pixels) v = static_cast<std::uint8_t>(std::min(3, v / 64) * 85);
        return img;
    }
    const auto detail = detail_map(map);
    const double peak = *std::max_element(detail.begin(), detail.end());
    RgbImage img(map.width, map.height);
    for (std::size_t p = 0; p < detail.size(); ++p) {
        const double t = peak > 0.0 ? detail[p] / peak : 0.0;
        std::uint8_t g;
        if (mode == StyleMode::Detail)
            g = static_cast<std::uint8_t>(std::lround(255.0 * t));
        else
            g = map.valid[p] && t <= sketch_threshold ? 255 : 0;
        img.pixels[3 * p] = img.pixels[3 * p + 1] = img.pixels[3 * p + 2] = g;
    }
    return img;
}

//---------------------------------------------------------------------------

void save_features(const std::filesystem::path &path, std::span<const FeatureMap> maps)
{
    ByteWriter w;
    w.put_magic("DIFTFEAT");
    w.put<std::uint32_t>(kFeatureVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(maps.size()));
    for (const auto &m : maps) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m.view));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m.width));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m.height));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m.dims));
        w.put_array<std::uint8_t>(m.valid);
        w.put_array<float>(m.data);
    }
    w.put<std::uint64_t>(fnv1a64(w.bytes()));
    write_file(path, w.bytes());
}

std::vector<FeatureMap> load_features(const std::filesystem::path &path)
{
    const auto bytes = read_file(path);
    const std::string ctx = path.string();
    if (bytes.size() < 24) throw DataError(ctx + ": truncated feature dump");
    const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
    ByteReader tail({bytes.data() + body.size(), 8}, ctx);
    if (tail.get<std::uint64_t>() != fnv1a64(body)) throw DataError(ctx + ": feature dump checksum mismatch");
    ByteReader r(body, ctx);
    r.expect_magic("DIFTFEAT");
    if (r.get<std::uint32_t>() != kFeatureVersion) throw DataError(ctx + ": unsupported feature dump version");
    const auto count = r.get<std::uint32_t>();
    std::vector<FeatureMap> maps;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto view = static_cast<int>(r.get<std::uint32_t>());
        const auto w = r.get<std::uint32_t>(), h = r.get<std::uint32_t>(), d = r.get<std::uint32_t>();
        if (w == 0 || h == 0 || d == 0 || static_cast<std::uint64_t>(w) * h * (1 + 4ull * d) > r.remaining())
            throw DataError(ctx + ": feature map exceeds file size");
        FeatureMap m(static_cast<int>(w), static_cast<int>(h), view, static_cast<int>(d));
        r.get_array<std::uint8_t>(m.valid);
        r.get_array<float>(m.data);
        maps.push_back(std::move(m));
    }
    if (r.remaining() != 0) throw DataError(ctx + ": trailing bytes in feature dump");
    return maps;
}

void save_pca(const std::filesystem::path &path, const PcaProjection &pca)
{
    nlohmann::ordered_json j;
    j["dims"] = pca.mean.size();
    j["mean"] = std::vector<double>(pca.mean.data(), pca.mean.data() + pca.mean.size());
    j["eigenvalues"] = std::vector<double>(pca.eigenvalues.data(), pca.eigenvalues.data() + pca.eigenvalues.size());
    for (int c = 0; c < 3; ++c) {
        j["basis"].push_back(std::vector<double>(pca.basis.col(c).data(), pca.basis.col(c).data() + pca.basis.rows()));
        j["min"].push_back(pca.min[c]);
        j["max"].push_back(pca.max[c]);
    }
    write_text_file(path, j.dump(2) + "\n");
}

PcaProjection load_pca(const std::filesystem::path &path)
{
    const auto bytes = read_file(path);
    try {
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
        PcaProjection p;
        const auto dims = j.at("dims").get<Eigen::Index>();
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto ev = j.at("eigenvalues").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(mean.size()) != dims || static_cast<Eigen::Index>(ev.size()) != dims)
            throw DataError(path.string() + ": PCA vector length mismatch");
        p.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), dims);
        p.eigenvalues = Eigen::Map<const Eigen::VectorXd>(ev.data(), dims);
        p.basis.resize(dims, 3);
        for (int c = 0; c < 3; ++c) {
            const auto col = j.at("basis").at(c).get<std::vector<double>>();
            if (static_cast<Eigen::Index>(col.size()) != dims) throw DataError(path.string() + ": PCA basis size");
            p.basis.col(c) = Eigen::Map<const Eigen::VectorXd>(col.data(), dims);
            p.min[c] = j.at("min").at(c).get<double>();
            p.max[c] = j.at("max").at(c).get<double>();
        }
        return p;
    } catch (const nlohmann::json::exception &e) {
        throw DataError(path.string() + ": malformed PCA file: " + e.what());
    }
}

} // namespace dift
