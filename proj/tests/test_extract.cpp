// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/binary_io.hpp"
#include "dift/extract.hpp"

#include "test_support.hpp"

#include <chrono>
#include <set>

namespace dift {
namespace {

using testing::shared_blob;

MeasurementStack constant_stack(int w, int h, int views, Vec3 color)
{
    MeasurementStack s;
    s.width = w;
    s.height = h;
    s.angular_interval_deg = 360.0 / views;
    s.present.assign(views, 1);
    s.images.assign(views, std::vector<double>(static_cast<std::size_t>(w) * h * 3));
    s.masks.assign(views, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 1));
    for (int v = 0; v < views; ++v) {
        s.view_specs.push_back(rotate_pose(v * s.angular_interval_deg).view_spec);
        for (std::size_t p = 0; p < static_cast<std::size_t>(w) * h; ++p)
            for (int c = 0; c < 3; ++c) s.images[v][3 * p + c] = color[c];
    }
    return s;
}

MeasurementStack random_stack(int w, int h, int views, Rng &rng)
{
    auto s = constant_stack(w, h, views, Vec3::Zero());
    for (int v = 0; v < views; ++v) {
        for (auto &x : s.images[v]) x = uniform01(rng);
        for (auto &m : s.masks[v]) m = uniform01(rng) < 0.85;
    }
    return s;
}

TEST(Measurements, MatchTrainingRenderingPath)
{
    const auto &ds = shared_blob();
    Rng rng(1);
    const auto pattern = testing::random_pattern(ds.rig.led_count(), rng);
    const auto stack = render_measurements(ds, 0, pattern);
    BasisCache cache(ds);
    int checked = 0;
    for (int v : {0, 5, 23})
        for (std::size_t k = 0; k < ds.valid_pixels[0][v].size(); k += 7) {
            const auto p = ds.valid_pixels[0][v][k];
            const PixelRef px{static_cast<int>(p % 16), static_cast<int>(p / 16)};
            const auto attr = assemble_attribute_tensor(ds, 0, v, px, cache);
            const auto train_t = render_input_tensor(attr, pattern, nullptr);
            const auto run_t = measurement_tensor(stack, v, px, ds.header.shape);
            EXPECT_EQ(train_t.valid, run_t.valid);
            EXPECT_EQ(train_t.view_spec, run_t.view_spec);
            for (int c = 0; c < 3; ++c)
                for (std::size_t e = 0; e < train_t.values[c].size(); ++e)
                    EXPECT_LE(std::abs(train_t.values[c][e] - run_t.values[c][e]),
                              1e-12 * std::max(1.0, std::abs(train_t.values[c][e])));
            ++checked;
        }
    EXPECT_GT(checked, 10);
}

TEST(Measurements, MaskIsAttributeValidityAndDarkPatternIsBlack)
{
    const auto &ds = shared_blob();
    const auto dark = LightingPattern::binary(std::vector<bool>(ds.rig.led_count(), false));
    const std::vector<int> views{3, 4};
    const auto s = render_measurements(ds, 0, dark, views);
    EXPECT_EQ(s.present[3], 1);
    EXPECT_EQ(s.present[0], 0);
    for (int v : views)
        for (int row = 0; row < 16; ++row)
            for (int col = 0; col < 16; ++col) {
                EXPECT_EQ(s.valid(v, col, row), ds.captures[0].maps[v].at(col, row).valid);
                for (int c = 0; c < 3; ++c) EXPECT_EQ(s.pixel(v, col, row)[c], 0.0);
            }
    EXPECT_THROW(render_measurements(ds, 0, LightingPattern::uniform_half(3)), InputError);
}

TEST(Extract, FeaturesMatchPerTensorForward)
{
    const auto &ds = shared_blob();
    Rng rng(2);
    const auto params = init_params(ds.header.shape, rng, 16);
    const auto pattern = LightingPattern::uniform_half(ds.rig.led_count());
    const auto stack = render_measurements(ds, 0, pattern);
    const std::vector<int> views{0, 12};
    const auto maps = extract_features(stack, params, views);
    ASSERT_EQ(maps.size(), 2u);
    for (const auto &m : maps) {
        EXPECT_EQ(m.valid_count(), ds.captures[0].maps[m.view].valid_count());
        for (int row = 0; row < 16; ++row)
            for (int col = 0; col < 16; ++col) {
                if (!m.is_valid(col, row)) {
                    for (int d = 0; d < m.dims; ++d) EXPECT_EQ(m.at(col, row)[d], 0.0f);
                    continue;
                }
                const auto t = measurement_tensor(stack, m.view, {col, row}, ds.header.shape);
                for (int c = 0; c < 3; ++c) {
                    const auto f = forward_one(params, t, c);
                    double norm = 0.0;
                    for (int d = 0; d < kFeatureDim; ++d) {
                        const float got = m.at(col, row)[c * kFeatureDim + d];
                        EXPECT_NEAR(got, f[d], 1e-6);
                        norm += double(got) * got;
                    }
                    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
                }
            }
    }
}

TEST(Extract, ConstantStackGivesIdenticalInteriorFeatures)
{
    const auto stack = constant_stack(12, 12, 8, Vec3(0.2, 0.5, 0.8));
    Rng rng(3);
    const auto params = init_params({3, 3}, rng, 16);
    const std::vector<int> views{2};
    const auto maps = extract_features(stack, params, views);
    const float *ref = maps[0].at(5, 5);
    for (int row = 1; row < 11; ++row)
        for (int col = 1; col < 11; ++col)
            for (int d = 0; d < 30; ++d) EXPECT_EQ(maps[0].at(col, row)[d], ref[d]);
}

TEST(Extract, SeamWrapMatchesCyclicShift)
{
    Rng rng(4);
    const int views = 10, shift = 4;
    const auto stack = random_stack(10, 10, views, rng);
    auto shifted = stack;
    for (int v = 0; v < views; ++v) {
        const int src = (v - shift + views) % views;
        shifted.images[v] = stack.images[src];
        shifted.masks[v] = stack.masks[src];
        shifted.view_specs[v] = stack.view_specs[src];
    }
    const auto params = init_params({3, 5}, rng, 16);
    for (int v : {0, 1, 9}) {
        const std::vector<int> a{v}, b{(v + shift) % views};
        const auto fa = extract_features(stack, params, a), fb = extract_features(shifted, params, b);
        EXPECT_EQ(fa[0].valid, fb[0].valid);
        EXPECT_EQ(fa[0].data, fb[0].data);
    }
}

TEST(Extract, RejectsShortOrIncompleteStacks)
{
    Rng rng(5);
    const auto params = init_params({3, 5}, rng, 8);
    EXPECT_THROW(extract_features(constant_stack(8, 8, 3, Vec3::Ones()), params), InputError);
    auto s = constant_stack(8, 8, 10, Vec3::Ones());
    s.present[6] = 0;
    const std::vector<int> views{5};
    EXPECT_THROW(extract_features(s, params, views), InputError);
    EXPECT_EQ(views_with_neighbors(std::vector<int>{0}, 5, 10), (std::vector<int>{0, 1, 2, 8, 9}));
}

// -- PCA ------------------------------------------------------------------------

Eigen::MatrixXd anisotropic_samples(int n, int d, Rng &rng)
{
    std::normal_distribution<double> g(0, 1);
    Eigen::MatrixXd mix(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) mix(i, j) = g(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(mix).householderQ();
    Eigen::MatrixXd x(n, d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) x(r, c) = g(rng) * (d - c) * 0.3;
    Eigen::RowVectorXd offset(d);
    for (int c = 0; c < d; ++c) offset[c] = g(rng);
    return (x * q.transpose()).rowwise() + offset;
}

void fix_sign(Eigen::VectorXd &v)
{
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
}

TEST(Pca, MatchesJacobiOracle)
{
    Rng rng(6);
    const auto x = anisotropic_samples(3000, 30, rng);
    const auto pca = fit_pca(x);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - mean;
    const Eigen::MatrixXd cov = c.transpose() * c / (x.rows() - 1.0);
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    testing::jacobi_eigen(cov, values, vectors);
    for (int i = 0; i < 30; ++i) EXPECT_LT(testing::rel_err(pca.eigenvalues[i], values[i]), 1e-8) << i;
    for (int k = 0; k < 3; ++k) {
        Eigen::VectorXd want = vectors.col(k);
        fix_sign(want);
        EXPECT_LT((pca.basis.col(k) - want).cwiseAbs().maxCoeff(), 1e-8) << k;
    }
    EXPECT_LT((pca.basis.transpose() * pca.basis - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    for (int k = 0; k < 3; ++k) EXPECT_LT(pca.min[k], pca.max[k]);
}

TEST(Pca, RecoversExactSubspace)
{
    Rng rng(7);
    std::normal_distribution<double> g(0, 1);
    Eigen::MatrixXd span(10, 3);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 3; ++j) span(i, j) = g(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(span).householderQ() *
                              Eigen::MatrixXd::Identity(10, 3);
    Eigen::MatrixXd coeff(1500, 3);
    for (int r = 0; r < 1500; ++r)
        for (int j = 0; j < 3; ++j) coeff(r, j) = g(rng) * (3 - j);
    Eigen::VectorXd offset(10);
    for (int i = 0; i < 10; ++i) offset[i] = g(rng);
    const Eigen::MatrixXd x = (coeff * q.transpose()).rowwise() + offset.transpose();
    const auto pca = fit_pca(x);
    const Eigen::MatrixXd proj = q * q.transpose();
    EXPECT_LT((proj * pca.basis - pca.basis).norm(), 1e-10);
    for (int r = 0; r < 1500; r += 97) {
        const Eigen::VectorXd xr = x.row(r).transpose();
        const Eigen::VectorXd back = pca.mean + pca.basis * pca.project(xr);
        EXPECT_LT((back - xr).norm(), 1e-10);
    }
    EXPECT_LT(std::abs(pca.eigenvalues[3]), 1e-12 * pca.eigenvalues[0]);
}

TEST(Pca, DegenerateInputsRejected)
{
    Rng rng(8);
    const auto x = anisotropic_samples(500, 6, rng);
    EXPECT_THROW(fit_pca(x), InputError);
    Eigen::MatrixXd rank2 = Eigen::MatrixXd::Zero(2000, 6);
    for (int r = 0; r < 2000; ++r) {
        rank2(r, 0) = uniform01(rng);
        rank2(r, 1) = uniform01(rng);
    }
    EXPECT_THROW(fit_pca(rank2), DataError);
}

TEST(Quantize, HalfLevelBoundAndEndpoints)
{
    Rng rng(9);
    const double lo = -0.7, hi = 2.3;
    EXPECT_EQ(quantize_axis(lo, lo, hi), 0);
    EXPECT_EQ(quantize_axis(hi, lo, hi), 255);
    EXPECT_EQ(quantize_axis(lo - 5, lo, hi), 0);
    EXPECT_EQ(quantize_axis(hi + 5, lo, hi), 255);
    std::uint8_t prev = 0;
    for (int k = 0; k <= 100000; ++k) {
        const double x = lo + (hi - lo) * k / 100000.0;
        const auto q = quantize_axis(x, lo, hi);
        EXPECT_LE(std::abs(lo + q * (hi - lo) / 255.0 - x), (hi - lo) / 510.0 + 1e-12);
        EXPECT_GE(q, prev);
        prev = q;
    }
}

FeatureMap map_from_stack_features(Rng &rng)
{
    FeatureMap m(40, 40, 0, 30);
    for (int row = 0; row < 40; ++row)
        for (int col = 0; col < 40; ++col) {
            if ((row < 2 && col < 2)) continue;
            m.valid[row * 40 + col] = 1;
            for (int d = 0; d < 30; ++d) m.at(col, row)[d] = static_cast<float>(uniform01(rng));
        }
    return m;
}

TEST(Pca, ProjectQuantizeCoversRange)
{
    Rng rng(10);
    const std::vector<FeatureMap> maps{map_from_stack_features(rng)};
    const auto pca = fit_pca(maps);
    const auto img = project_quantize(maps[0], pca);
    for (int c = 0; c < 3; ++c) {
        int lo = 255, hi = 0;
        for (int p = 0; p < 1600; ++p) {
            if (!maps[0].valid[p]) {
                EXPECT_EQ(img.pixels[3 * p + c], 0);
                continue;
            }
            lo = std::min<int>(lo, img.pixels[3 * p + c]);
            hi = std::max<int>(hi, img.pixels[3 * p + c]);
        }
        EXPECT_EQ(lo, 0);
        EXPECT_EQ(hi, 255);
    }
}

TEST(Filters, ColorsAndLayout)
{
    const TensorShape shape{3, 5};
    std::vector<double> pos(45, 0.5);
    pos[0] = 1.0;
    const auto img = filter_image(pos, shape);
    EXPECT_EQ(img.width, 5 * 24 + 4 * 2);
    EXPECT_EQ(img.height, 24);
    EXPECT_EQ(img.at(0, 0)[0], 255);
    EXPECT_EQ(img.at(9, 0)[0], 128);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < img.width; ++x) {
            EXPECT_EQ(img.at(x, y)[1], 0);
            EXPECT_EQ(img.at(x, y)[2], 0);
        }
    // Gap columns stay black.
    EXPECT_EQ(img.at(24, 5)[0], 0);
    std::vector<double> neg(45, -2.0);
    const auto g = filter_image(neg, shape);
    EXPECT_EQ(g.at(3, 3)[0], 0);
    EXPECT_EQ(g.at(3, 3)[1], 255);
    EXPECT_THROW(filter_image(std::vector<double>(44, 1.0), shape), InputError);
}

TEST(Filters, OneImagePerFilter)
{
    Rng rng(11);
    const auto params = init_params({3, 3}, rng, 12);
    const auto dir = testing::scratch_dir("filters");
    const auto files = visualize_filters(params, dir / "f");
    EXPECT_EQ(files.size(), 12u);
    for (const auto &f : files) {
        const auto img = read_png(f);
        EXPECT_EQ(img.width, 3 * 24 + 2 * 2);
    }
}

TEST(Style, Properties)
{
    Rng rng(12);
    const std::vector<FeatureMap> maps{map_from_stack_features(rng)};
    const auto pca = fit_pca(maps);
    const auto cartoon = stylize(maps[0], pca, StyleMode::Cartoon);
    for (auto v : cartoon.pixels) EXPECT_TRUE(v == 0 || v == 85 || v == 170 || v == 255);
    const auto sketch = stylize(maps[0], pca, StyleMode::Sketch);
    for (auto v : sketch.pixels) EXPECT_TRUE(v == 0 || v == 255);
    EXPECT_EQ(sketch.at(0, 0)[0], 0);
    const auto detail = stylize(maps[0], pca, StyleMode::Detail);
    EXPECT_EQ(detail.at(0, 0)[0], 0);
    EXPECT_EQ(*std::max_element(detail.pixels.begin(), detail.pixels.end()), 255);
    EXPECT_EQ(parse_style_mode("sketch"), StyleMode::Sketch);
    EXPECT_THROW(parse_style_mode("oil"), InputError);

    FeatureMap flat(6, 6, 0, 30);
    std::fill(flat.valid.begin(), flat.valid.end(), 1);
    std::fill(flat.data.begin(), flat.data.end(), 0.25f);
    for (double d : detail_map(flat)) EXPECT_EQ(d, 0.0);
}

TEST(FeatureIo, RoundTripAndCorruption)
{
    Rng rng(13);
    const std::vector<FeatureMap> maps{map_from_stack_features(rng), map_from_stack_features(rng)};
    const auto dir = testing::scratch_dir("featio");
    save_features(dir / "f.diftfeat", maps);
    const auto back = load_features(dir / "f.diftfeat");
    ASSERT_EQ(back.size(), 2u);
    for (int i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].data, maps[i].data);
        EXPECT_EQ(back[i].valid, maps[i].valid);
        EXPECT_EQ(back[i].dims, 30);
    }
    auto bytes = read_file(dir / "f.diftfeat");
    bytes[100] ^= 1;
    write_file(dir / "bad.diftfeat", bytes);
    EXPECT_THROW(load_features(dir / "bad.diftfeat"), DataError);

    const auto pca = fit_pca(maps);
    save_pca(dir / "pca.json", pca);
    const auto p2 = load_pca(dir / "pca.json");
    EXPECT_EQ(p2.basis, pca.basis);
    EXPECT_EQ(p2.mean, pca.mean);
    EXPECT_EQ(p2.min, pca.min);
    EXPECT_EQ(p2.max, pca.max);
}

TEST(Extract, ThroughputScalesLinearly)
{
    Rng rng(14);
    const auto params = init_params({5, 5}, rng, 64);
    const auto small = constant_stack(40, 40, 5, Vec3(0.3, 0.2, 0.1));
    const auto large = constant_stack(80, 40, 5, Vec3(0.3, 0.2, 0.1));
    const std::vector<int> views{2};
    auto best = [&](const MeasurementStack &s) {
        double t = 1e30;
        for (int k = 0; k < 3; ++k) {
            const auto t0 = std::chrono::steady_clock::now();
            extract_features(s, params, views);
            t = std::min(t, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        return t;
    };
    set_max_threads(1);
    const double ts = best(small), tl = best(large);
    set_max_threads(0);
    EXPECT_LE(tl, 2.5 * ts) << ts << " " << tl;
}

} // namespace
} // namespace dift
