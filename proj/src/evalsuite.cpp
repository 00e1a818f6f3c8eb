// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/evalsuite.hpp"

#include "dift/binary_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace dift {

namespace {

constexpr std::uint32_t kCorrVersion = 1;
constexpr std::size_t kSamplingAttemptsPerPoint = 50;

int wrap(long v, int count) { return static_cast<int>(((v % count) + count) % count); }

// Descriptors of one map's valid pixels packed row-wise, with pixel indices
// in ascending order so the first minimum is the lowest index.
struct PackedMap {
    const FeatureMap *map = nullptr;
    std::vector<std::uint32_t> pixels;
    Eigen::MatrixXf rows; ///< dims x valid
};

PackedMap pack(const FeatureMap &m)
{
    PackedMap p;
    p.map = &m;
    for (std::uint32_t i = 0; i < m.valid.size(); ++i)
        if (m.valid[i]) p.pixels.push_back(i);
    p.rows.resize(m.dims, static_cast<Eigen::Index>(p.pixels.size()));
    for (std::size_t k = 0; k < p.pixels.size(); ++k)
        for (int d = 0; d < m.dims; ++d) p.rows(d, static_cast<Eigen::Index>(k)) = m.data[p.pixels[k] * m.dims + d];
    return p;
}

} // namespace

int Correspondence::visible_count() const
{
    return static_cast<int>(std::count_if(views.begin(), views.end(), [](const auto &v) { return v.visible; }));
}

CorrespondenceSet build_correspondences(const Dataset &dataset, int capture, std::size_t count, Rng &rng)
{
    const auto &cap = dataset.captures.at(capture);
    const auto &cam = dataset.geometry.camera;
    const int views = static_cast<int>(cap.maps.size());
    if (dataset.valid_pixels.size() != dataset.captures.size()) throw InputError("dataset pixels are not indexed");
    std::vector<std::size_t> offsets(static_cast<std::size_t>(views) + 1, 0);
    for (int v = 0; v < views; ++v) offsets[v + 1] = offsets[v] + dataset.valid_pixels[capture][v].size();
    if (offsets.back() == 0) throw DataError("capture has no valid pixels");

    CorrespondenceSet set;
    set.capture = capture;
    set.view_count = views;
    std::uniform_int_distribution<std::size_t> pick(0, offsets.back() - 1);
    std::size_t attempts = 0;
    while (set.entries.size() < count) {
        if (++attempts > kSamplingAttemptsPerPoint * count)
            throw DataError("dataset exhausted: only " + std::to_string(set.entries.size()) + " of " +
                            std::to_string(count) + " points are visible in two views");
        const std::size_t flat = pick(rng);
        const int v = static_cast<int>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
        const auto p = dataset.valid_pixels[capture][v][flat - offsets[v]];
        const auto &map = cap.maps[v];
        const auto &rec = map.records[p];
        Correspondence c;
        c.id = rec.id;
        c.point_object = map.pose.rotation().transpose() * rec.x();
        c.views.resize(static_cast<std::size_t>(views));
        parallel_for(static_cast<std::size_t>(views), [&](std::size_t w) {
            const auto px = visible_pixel(dataset, capture, static_cast<int>(w), c.point_object);
            if (!px) return;
            const auto uv = cam.project(dataset.geometry.pose(static_cast<int>(w)).rotation() * c.point_object);
            c.views[w] = {*px, *uv, true};
        });
        if (c.visible_count() >= 2) set.entries.push_back(std::move(c));
    }
    return set;
}

void save_correspondences(const std::filesystem::path &path, const CorrespondenceSet &set)
{
    ByteWriter w;
    w.put_magic("DIFTCORR");
    w.put<std::uint32_t>(kCorrVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(set.capture));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(set.view_count));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(set.entries.size()));
    for (const auto &e : set.entries) {
        w.put<std::uint32_t>(e.id.triangle);
        w.put<std::uint16_t>(e.id.b1);
        w.put<std::uint16_t>(e.id.b2);
        for (int k = 0; k < 3; ++k) w.put<double>(e.point_object[k]);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(e.visible_count()));
        for (std::size_t v = 0; v < e.views.size(); ++v) {
            const auto &cv = e.views[v];
            if (!cv.visible) continue;
            w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
            w.put<std::uint32_t>(static_cast<std::uint32_t>(cv.pixel.col));
            w.put<std::uint32_t>(static_cast<std::uint32_t>(cv.pixel.row));
            w.put<double>(cv.projection.x());
            w.put<double>(cv.projection.y());
        }
    }
    w.put<std::uint64_t>(fnv1a64(w.bytes()));
    write_file(path, w.bytes());
}

CorrespondenceSet load_correspondences(const std::filesystem::path &path)
{
    const auto bytes = read_file(path);
    const std::string ctx = path.string();
    if (bytes.size() < 32) throw DataError(ctx + ": truncated correspondence file");
    const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
    ByteReader tail({bytes.data() + body.size(), 8}, ctx);
    if (tail.get<std::uint64_t>() != fnv1a64(body)) throw DataError(ctx + ": correspondence checksum mismatch");
    ByteReader r(body, ctx);
    r.expect_magic("DIFTCORR");
    if (r.get<std::uint32_t>() != kCorrVersion) throw DataError(ctx + ": unsupported correspondence version");
    CorrespondenceSet set;
    set.capture = static_cast<int>(r.get<std::uint32_t>());
    set.view_count = static_cast<int>(r.get<std::uint32_t>());
    const auto n = r.get<std::uint32_t>();
    if (set.view_count < 1 || n > r.remaining() / 36) throw DataError(ctx + ": bad correspondence header");
    for (std::uint32_t i = 0; i < n; ++i) {
        Correspondence e;
        e.id.triangle = r.get<std::uint32_t>();
        e.id.b1 = r.get<std::uint16_t>();
        e.id.b2 = r.get<std::uint16_t>();
        for (int k = 0; k < 3; ++k) e.point_object[k] = r.get<double>();
        e.views.resize(static_cast<std::size_t>(set.view_count));
        const auto visible = r.get<std::uint32_t>();
        for (std::uint32_t k = 0; k < visible; ++k) {
            const auto v = r.get<std::uint32_t>();
            if (v >= static_cast<std::uint32_t>(set.view_count)) throw DataError(ctx + ": view index out of range");
            auto &cv = e.views[v];
            cv.pixel.col = static_cast<int>(r.get<std::uint32_t>());
            cv.pixel.row = static_cast<int>(r.get<std::uint32_t>());
            cv.projection.x() = r.get<double>();
            cv.projection.y() = r.get<double>();
            cv.visible = true;
        }
        set.entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) throw DataError(ctx + ": trailing bytes in correspondence file");
    return set;
}

MatchResult matching_accuracy(std::span<const FeatureMap> maps, const CorrespondenceSet &set, int gap, double tol,
                              std::span<const int> query_views)
{
    if (set.view_count < 1) throw InputError("correspondence set has no views");
    if (!(tol >= 0.0)) throw InputError("tolerance must be non-negative");
    std::map<int, std::size_t> by_view;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (!by_view.emplace(maps[i].view, i).second) throw InputError("duplicate view in feature maps");
        if (maps[i].dims != maps.front().dims) throw InputError("feature maps disagree on dimension");
    }
    // Queries as (entry, view) pairs in a fixed order.
    std::vector<std::pair<std::size_t, int>> queries;
    std::set<int> targets;
    const std::set<int> sources(query_views.begin(), query_views.end());
    for (std::size_t e = 0; e < set.entries.size(); ++e)
        for (const auto &[v, mi] : by_view) {
            if (!sources.empty() && !sources.count(v)) continue;
            const int t = wrap(static_cast<long>(v) + gap, set.view_count);
            const auto &entry = set.entries[e];
            if (!by_view.count(t) || !entry.views[v].visible || !entry.views[t].visible) continue;
            const auto &q = entry.views[v].pixel;
            if (!maps[mi].is_valid(q.col, q.row)) continue;
            queries.emplace_back(e, v);
            targets.insert(t);
        }
    if (queries.empty())
        throw DataError("no correspondence is visible at view gap " + std::to_string(gap) + " in the mapped views");

    std::map<int, PackedMap> packed;
    for (int t : targets) packed.emplace(t, pack(maps[by_view.at(t)]));

    std::vector<std::uint8_t> hit(queries.size(), 0);
    parallel_for(queries.size(), [&](std::size_t qi) {
        const auto [e, v] = queries[qi];
        const auto &entry = set.entries[e];
        const int t = wrap(static_cast<long>(v) + gap, set.view_count);
        const auto &qmap = maps[by_view.at(v)];
        const auto &target = packed.at(t);
        if (target.pixels.empty()) return;
        const auto &qp = entry.views[v].pixel;
        const Eigen::Map<const Eigen::VectorXf> query(qmap.at(qp.col, qp.row), qmap.dims);
        Eigen::Index best = 0;
        (target.rows.colwise() - query).colwise().squaredNorm().minCoeff(&best);
        const auto pix = target.pixels[static_cast<std::size_t>(best)];
        const Vec2 center(pix % target.map->width + 0.5, pix / target.map->width + 0.5);
        if ((center - entry.views[t].projection).norm() <= tol || std::isinf(tol)) hit[qi] = 1;
    });
    MatchResult r;
    r.queries = queries.size();
    r.correct = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), std::uint8_t{1}));
    r.percent = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.queries);
    return r;
}

MatchResult chance_floor(std::span<const FeatureMap> maps, const CorrespondenceSet &set, int gap, double tol,
                         std::uint64_t seed, std::span<const int> query_views)
{
    Rng rng(seed);
    std::vector<FeatureMap> shuffled(maps.begin(), maps.end());
    for (auto &m : shuffled) {
        std::vector<std::uint32_t> valid;
        for (std::uint32_t i = 0; i < m.valid.size(); ++i)
            if (m.valid[i]) valid.push_back(i);
        auto order = valid;
        std::shuffle(order.begin(), order.end(), rng);
        const auto source = m.data;
        for (std::size_t k = 0; k < valid.size(); ++k)
            std::copy_n(source.begin() + static_cast<std::ptrdiff_t>(order[k]) * m.dims, m.dims,
                        m.data.begin() + static_cast<std::ptrdiff_t>(valid[k]) * m.dims);
    }
    return matching_accuracy(shuffled, set, gap, tol, query_views);
}

std::vector<FeatureMap> window_descriptors(const MeasurementStack &stack, std::span<const int> views, int window)
{
    if (window < 1 || window % 2 == 0) throw InputError("window must be positive and odd");
    const int r = window / 2;
    std::vector<FeatureMap> out;
    for (int v : views) {
        if (v < 0 || v >= stack.view_count() || !stack.present[v])
            throw InputError("view " + std::to_string(v) + " missing from measurement stack");
        FeatureMap m(stack.width, stack.height, v, window * window * 3);
        for (int row = 0; row < stack.height; ++row)
            for (int col = 0; col < stack.width; ++col) {
                if (!stack.valid(v, col, row)) continue;
                m.valid[static_cast<std::size_t>(row) * m.width + col] = 1;
                float *d = m.at(col, row);
                for (int i = -r; i <= r; ++i)
                    for (int j = -r; j <= r; ++j, d += 3) {
                        const int c = col + j, rr = row + i;
                        if (c < 0 || rr < 0 || c >= stack.width || rr >= stack.height || !stack.valid(v, c, rr))
                            continue;
                        const double *px = stack.pixel(v, c, rr);
                        for (int k = 0; k < 3; ++k) d[k] = static_cast<float>(px[k]);
                    }
            }
        out.push_back(std::move(m));
    }
    return out;
}

MatchResult baseline_window_matching(const MeasurementStack &stack, std::span<const int> query_views,
                                     const CorrespondenceSet &set, int gap, double tol, int window)
{
    std::set<int> views(query_views.begin(), query_views.end());
    for (int q : query_views) views.insert(wrap(static_cast<long>(q) + gap, set.view_count));
    const auto maps = window_descriptors(stack, std::vector<int>(views.begin(), views.end()), window);
    return matching_accuracy(maps, set, gap, tol, query_views);
}

std::vector<FeatureMap> rgb_descriptors(std::span<const FeatureMap> maps, const PcaProjection &pca)
{
    std::vector<FeatureMap> out;
    for (const auto &m : maps) {
        const auto img = project_quantize(m, pca);
        FeatureMap d(m.width, m.height, m.view, 3);
        d.valid = m.valid;
        for (std::size_t i = 0; i < img.pixels.size(); ++i) d.data[i] = img.pixels[i];
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<int> protocol_query_views(const MatchingProtocol &protocol, int view_count)
{
    if (!protocol.query_views.empty()) return protocol.query_views;
    const int n = std::min(12, view_count);
    std::vector<int> v;
    for (int i = 0; i < n; ++i) v.push_back(static_cast<int>(static_cast<long>(i) * view_count / n));
    return v;
}

std::vector<MatchingScore> evaluate_matching(const Dataset &dataset, const NetworkParams &params,
                                             const LightingPattern &pattern, const CorrespondenceSet &set,
                                             const MatchingProtocol &protocol)
{
    const int views = static_cast<int>(dataset.geometry.view_count);
    if (set.view_count != views) throw InputError("correspondences and dataset disagree on view count");
    const auto queries = protocol_query_views(protocol, views);
    std::set<int> needed(queries.begin(), queries.end());
    for (int g : protocol.gaps)
        for (int q : queries) needed.insert(wrap(static_cast<long>(q) + g, views));
    const std::vector<int> feature_views(needed.begin(), needed.end());
    const auto render_views = views_with_neighbors(feature_views, params.shape.angular, views);

    const auto stack = render_measurements(dataset, set.capture, pattern, render_views);
    const auto features = extract_features(stack, params, feature_views);
    const auto pca = fit_pca(features);
    const auto rgb = rgb_descriptors(features, pca);
    const auto windows = window_descriptors(stack, feature_views, protocol.baseline_window);

    // Each gap is scored on its own (query, query + gap) view pairs.
    auto subset = [&](const std::vector<FeatureMap> &all, int gap) {
        std::set<int> keep(queries.begin(), queries.end());
        for (int q : queries) keep.insert(wrap(static_cast<long>(q) + gap, views));
        std::vector<FeatureMap> out;
        for (const auto &m : all)
            if (keep.count(m.view)) out.push_back(m);
        return out;
    };

    std::vector<MatchingScore> scores;
    for (int g : protocol.gaps) {
        const auto f = subset(features, g), c = subset(rgb, g), w = subset(windows, g);
        for (double tol : protocol.tolerances) {
            MatchingScore s;
            s.gap = g;
            s.tol = tol;
            s.dift = matching_accuracy(f, set, g, tol, queries);
            s.pca_rgb = matching_accuracy(c, set, g, tol, queries);
            s.baseline = matching_accuracy(w, set, g, tol, queries);
            s.chance = chance_floor(f, set, g, tol, protocol.seed, queries);
            scores.push_back(s);
        }
    }
    return scores;
}

//---------------------------------------------------------------------------

bool AblationAxes::empty() const
{
    return lambdas.empty() && shapes.empty() && w_negs.empty() && intervals_deg.empty() && lightings.empty();
}

std::string shape_name(TensorShape shape)
{
    return std::to_string(shape.spatial) + "x" + std::to_string(shape.spatial) + "x" + std::to_string(shape.angular);
}

std::string AblationReport::table() const
{
    std::ostringstream os;
    os << "axis\tlambda\tshape\tw_neg\tinterval_deg\tlighting\titerations\tmean_pos\tmean_neg\tmargin\tacc_1px_g"
       << gap << "\tacc_2px_g" << gap << "\twall_s\n";
    char buf[512];
    for (const auto &r : rows) {
        std::snprintf(buf, sizeof buf, "%s\t%g\t%s\t%d\t%g\t%s\t%d\t%.6f\t%.6f\t%.6f\t%.2f\t%.2f\t%.1f\n",
                      r.axis.c_str(), r.config.lambda, shape_name(r.config.shape).c_str(), r.config.w_neg,
                      r.interval_deg, r.config.lighting == LightingMode::Joint ? "joint" : "fixed4",
                      r.config.iterations, r.metrics.mean_positive, r.metrics.mean_negative, r.metrics.margin,
                      r.accuracy_1px, r.accuracy_2px, r.wall_seconds);
        os << buf;
    }
    return os.str();
}

std::string AblationReport::to_json() const
{
    nlohmann::ordered_json j;
    j["gap"] = gap;
    j["rows"] = nlohmann::json::array();
    for (const auto &r : rows) {
        nlohmann::ordered_json row;
        row["axis"] = r.axis;
        row["lambda"] = r.config.lambda;
        row["shape"] = shape_name(r.config.shape);
        row["w_neg"] = r.config.w_neg;
        row["interval_deg"] = r.interval_deg;
        row["lighting"] = r.config.lighting == LightingMode::Joint ? "joint" : "fixed4";
        row["iterations"] = r.config.iterations;
        row["seed"] = r.config.seed;
        row["mean_pos"] = r.metrics.mean_positive;
        row["mean_neg"] = r.metrics.mean_negative;
        row["margin"] = r.metrics.margin;
        row["accuracy_1px"] = r.accuracy_1px;
        row["accuracy_2px"] = r.accuracy_2px;
        row["wall_s"] = r.wall_seconds;
        j["rows"].push_back(row);
    }
    return j.dump(2);
}

AblationReport run_ablations(const AblationSettings &settings, const AblationAxes &axes, const DatasetSource &source,
                             const std::function<void(const AblationRow &)> &on_row)
{
    struct Job {
        std::string axis;
        TrainConfig config;
        double interval;
    };
    std::vector<Job> jobs;
    const auto &base = settings.base;
    if (axes.empty()) jobs.push_back({"base", base, settings.base_interval_deg});
    for (double l : axes.lambdas) {
        jobs.push_back({"lambda", base, settings.base_interval_deg});
        jobs.back().config.lambda = l;
    }
    for (const auto &s : axes.shapes) {
        jobs.push_back({"shape", base, settings.base_interval_deg});
        jobs.back().config.shape = s;
    }
    for (int w : axes.w_negs) {
        jobs.push_back({"w_neg", base, settings.base_interval_deg});
        jobs.back().config.w_neg = w;
    }
    for (double i : axes.intervals_deg) jobs.push_back({"interval", base, i});
    for (auto m : axes.lightings) {
        jobs.push_back({"lighting", base, settings.base_interval_deg});
        jobs.back().config.lighting = m;
    }

    AblationReport report;
    report.gap = settings.gap;
    for (auto &job : jobs) {
        const auto start = std::chrono::steady_clock::now();
        const auto data = source(job.interval);
        if (!data.train || !data.heldout) throw InputError("dataset source returned no data");
        if (job.config.lighting == LightingMode::Fixed && !job.config.fixed_pattern)
            job.config.fixed_pattern = four_point_pattern(data.train->rig);
        data.train->header.shape = job.config.shape;
        data.heldout->header.shape = job.config.shape;

        const auto trained = train(*data.train, job.config);
        AblationRow row;
        row.axis = job.axis;
        row.config = job.config;
        row.interval_deg = job.interval;
        auto heldout = settings.heldout;
        heldout.w_neg = job.config.w_neg;
        row.metrics = evaluate_heldout(trained.checkpoint.params, trained.checkpoint.pattern, *data.heldout, heldout);

        Rng corr_rng(settings.protocol.seed);
        const auto set = build_correspondences(*data.heldout, 0, settings.correspondence_points, corr_rng);
        auto protocol = settings.protocol;
        protocol.gaps = {settings.gap};
        protocol.tolerances = {1.0, 2.0};
        const auto scores = evaluate_matching(*data.heldout, trained.checkpoint.params, trained.checkpoint.pattern,
                                              set, protocol);
        row.accuracy_1px = scores[0].dift.percent;
        row.accuracy_2px = scores[1].dift.percent;
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.rows.push_back(row);
        if (on_row) on_row(row);
    }
    return report;
}

} // namespace dift
