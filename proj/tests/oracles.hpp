// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Fixtures and independent oracles shared by the unit and acceptance tests.

#pragma once

#include "dift/evalsuite.hpp"
#include "dift/extract.hpp"
#include "dift/net.hpp"
#include "dift/photometry.hpp"
#include "dift/pipeline.hpp"
#include "dift/tensordata.hpp"
#include "dift/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>
#include <vector>

namespace dift::testing {

inline double rel_err(double a, double b, double floor = 1e-300)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Fresh empty directory under the system temp dir, private to this process.
inline std::filesystem::path scratch_dir(const std::string &name)
{
    auto dir = std::filesystem::temp_directory_path() / ("dift_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Vec3 random_unit(Rng &rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v(n(rng), n(rng), n(rng));
    return v.normalized();
}

inline Vec3 random_hemisphere(Rng &rng)
{
    Vec3 v = random_unit(rng);
    if (v.z() < 0) v.z() = -v.z();
    if (v.z() < 1e-3) v.z() = 1e-3;
    return v.normalized();
}

// -- GGX oracle ---------------------------------------------------------------
//
// Written against the textbook anisotropic GGX form in terms of the
// rotated tangent frame (t', b', n), with the closed-form G1 and the
// pow-5 Schlick term.

inline double oracle_g1(const Vec3 &w, const Vec3 &t, const Vec3 &b, const Vec3 &n, double ax, double ay)
{
    const double c = w.dot(n);
    if (c <= 0.0) return 0.0;
    const double s2 = std::max(0.0, 1.0 - c * c);
    if (s2 == 0.0) return 1.0;
    const double proj_t = w.dot(t), proj_b = w.dot(b);
    const double cos2_phi = proj_t * proj_t / s2, sin2_phi = proj_b * proj_b / s2;
    const double alpha2 = cos2_phi * ax * ax + sin2_phi * ay * ay;
    const double tan2 = s2 / (c * c);
    return 2.0 / (1.0 + std::sqrt(1.0 + alpha2 * tan2));
}

inline double oracle_specular(const Vec3 &wi, const Vec3 &wo, const Vec3 &n, const Vec3 &t, double ax, double ay,
                              double rotation)
{
    const double ci = wi.dot(n), co = wo.dot(n);
    if (ci <= 0.0 || co <= 0.0) return 0.0;
    const Vec3 b0 = n.cross(t);
    const Vec3 tr = std::cos(rotation) * t + std::sin(rotation) * b0;
    const Vec3 br = n.cross(tr);
    const Vec3 h = (wi + wo).normalized();
    const double ht = h.dot(tr) / ax, hb = h.dot(br) / ay, hn = h.dot(n);
    const double denom = ht * ht + hb * hb + hn * hn;
    const double d = 1.0 / (kPi * ax * ay * denom * denom);
    const double g = oracle_g1(wi, tr, br, n, ax, ay) * oracle_g1(wo, tr, br, n, ax, ay);
    const double f = 0.04 + 0.96 * std::pow(1.0 - wi.dot(h), 5.0);
    return d * g * f / (4.0 * ci * co);
}

/// One LED's contribution per channel, evaluated directly in world space.
inline Vec3 oracle_summand(const AttributeRecord &attr, const Led &led, const Vec3 &eye, double k)
{
    const Vec3 x = attr.x(), n = attr.n(), t = attr.t();
    const Vec3 to_l = led.position - x;
    const double r = to_l.norm();
    const Vec3 wi = to_l / r, wo = (eye - x).normalized();
    const double cos_p = wi.dot(n), cos_l = -wi.dot(led.normal);
    if (cos_p <= 0.0 || cos_l <= 0.0 || wo.dot(n) <= 0.0) return Vec3::Zero();
    const double psi = std::pow(cos_l, k);
    const auto p = attr.svbrdf();
    const double ax = std::max(p.roughness_x, 0.01), ay = std::max(p.roughness_y, 0.01);
    const double spec = oracle_specular(wi, wo, n, t, ax, ay, p.tangent_rotation);
    Vec3 out;
    for (int c = 0; c < 3; ++c)
        out[c] = psi * cos_p * cos_l / (r * r) * (p.diffuse_albedo[c] / kPi + p.specular_albedo[c] * spec);
    return out;
}

inline AttributeRecord random_record(Rng &rng)
{
    AttributeRecord a;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 x(0.4 * (2 * u(rng) - 1), 0.4 * (2 * u(rng) - 1), 0.4 * (2 * u(rng) - 1));
    const Vec3 n = random_unit(rng);
    Vec3 t = random_unit(rng);
    t = (t - n * n.dot(t)).normalized();
    for (int i = 0; i < 3; ++i) {
        a.position[i] = static_cast<float>(x[i]);
        a.normal[i] = static_cast<float>(n[i]);
        a.tangent[i] = static_cast<float>(t[i]);
        a.diffuse[i] = static_cast<float>(u(rng));
        a.specular[i] = static_cast<float>(u(rng));
    }
    // Re-orthogonalize at stored precision so the frame check passes.
    Vec3 nf = a.n().normalized(), tf = a.t();
    tf = (tf - nf * nf.dot(tf)).normalized();
    for (int i = 0; i < 3; ++i) {
        a.normal[i] = static_cast<float>(nf[i]);
        a.tangent[i] = static_cast<float>(tf[i]);
    }
    a.roughness_x = static_cast<float>(0.02 + 0.8 * u(rng));
    a.roughness_y = static_cast<float>(0.02 + 0.8 * u(rng));
    a.tangent_rotation = static_cast<float>(2 * kPi * u(rng));
    a.valid = true;
    return a;
}

inline VisibilityMask all_visible(std::size_t leds)
{
    VisibilityMask m((leds + 63) / 64, 0);
    for (std::size_t l = 0; l < leds; ++l) m[l / 64] |= 1ull << (l % 64);
    return m;
}

inline LightingPattern random_pattern(std::size_t leds, Rng &rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    LightingPattern p;
    for (std::size_t l = 0; l < leds; ++l) {
        p.a.push_back(n(rng));
        p.b.push_back(n(rng));
    }
    return p;
}

// -- Tiny datasets ------------------------------------------------------------

inline CaptureGeometry tiny_geometry(int size = 16, int views = 24)
{
    CaptureGeometry g;
    g.camera = Camera::turntable(size, size);
    g.view_count = views;
    g.angular_interval_deg = 360.0 / views;
    return g;
}

inline RigConfig tiny_rig() { return RigConfig{3.0, 2, 0.0}; }

inline Dataset tiny_dataset(std::uint64_t seed = 1, ShapeFamily family = ShapeFamily::Blob, int size = 16,
                            int views = 24, TensorShape shape = {3, 3})
{
    const ObjectSpec spec{seed, family};
    return generate_dataset(std::span<const ObjectSpec>(&spec, 1), tiny_geometry(size, views), tiny_rig(), shape);
}

/// Cached tiny datasets shared across tests of one binary.
inline const Dataset &shared_blob()
{
    static const Dataset ds = tiny_dataset(1, ShapeFamily::Blob);
    return ds;
}

inline const Dataset &shared_sphere()
{
    static const Dataset ds = tiny_dataset(2, ShapeFamily::Sphere);
    return ds;
}

/// Tiny pipeline config, written out for CLI-level tests.
inline PipelineConfig tiny_config()
{
    PipelineConfig c;
    c.train_objects = {{1, ShapeFamily::Blob}};
    c.heldout_objects = {{2, ShapeFamily::Sphere}};
    c.width = c.height = 16;
    c.views = 24;
    c.interval_deg = 15.0;
    c.rig = tiny_rig();
    c.shape = {3, 3};
    c.iterations = 20;
    c.log_every = 10;
    c.batch = 6;
    c.hidden = 16;
    c.correspondences = 40;
    c.gaps = {1, 2};
    c.query_views = 6;
    c.heldout_batches = 2;
    return c;
}

// -- Symmetric eigensolver oracle ---------------------------------------------

/// Cyclic Jacobi rotations; returns eigenvalues descending with matching
/// eigenvector columns.
inline void jacobi_eigen(Eigen::MatrixXd a, Eigen::VectorXd &values, Eigen::MatrixXd &vectors)
{
    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) > a(y, y); });
    values.resize(n);
    vectors.resize(n, n);
    for (int i = 0; i < n; ++i) {
        values[i] = a(order[i], order[i]);
        vectors.col(i) = v.col(order[i]);
    }
}

// -- Toy pair batch ------------------------------------------------------------

/// Hand-built batch whose tensors carry random OLAT bases over `leds` LEDs.
/// Every element is valid; views differ between anchor and second.
struct ToyBatch {
    PairBatch batch;
    std::vector<std::shared_ptr<OlatBasis>> bases;
};

inline ToyBatch toy_batch(Rng &rng, int groups = 2, std::size_t leds = 3, TensorShape shape = {3, 3})
{
    ToyBatch toy;
    auto make = [&](int g, int view) {
        AttributeTensor t;
        t.shape = shape;
        t.elements.resize(shape.size());
        t.bases.resize(shape.size());
        for (int e = 0; e < shape.size(); ++e) {
            t.elements[e].valid = true;
            auto b = std::make_shared<OlatBasis>(leds);
            for (auto &v : b->data) v = 0.05 + uniform01(rng);
            toy.bases.push_back(b);
            t.bases[e] = b;
        }
        t.center_point_id = PointId{static_cast<std::uint32_t>(g), 0, 0};
        t.center_view = rotate_pose(view * 15.0);
        t.view = view;
        return t;
    };
    toy.batch.anchor_view = 0;
    for (int g = 0; g < groups; ++g) toy.batch.groups.push_back({make(g, 0), make(g, 1 + g)});
    for (int i = 0; i < groups; ++i)
        for (int j = i + 1; j < groups; ++j) toy.batch.negatives.emplace_back(i, j);
    return toy;
}

/// Loss of a toy batch under a pattern with the noise stream replayed from `noise_seed`.
inline double toy_loss(const NetworkParams &params, const LightingPattern &pattern, const PairBatch &batch,
                       int channel, double lambda, std::uint64_t noise_seed)
{
    Rng noise(noise_seed);
    const auto in = pattern.intensities();
    const auto r = render_batch(batch, in, channel, &noise, kMeasurementNoiseSigma);
    return pair_loss(forward(params, r.inputs, r.view_specs).features, r.tags, lambda).loss;
}

} // namespace dift::testing
