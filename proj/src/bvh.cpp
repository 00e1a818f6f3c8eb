// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/bvh.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace dift {

namespace {

constexpr std::uint32_t kLeafSize = 4;

// Barycentric slack so rays through a shared edge cannot slip between the
// two rounded tests of its neighbors.
constexpr double kEdgeSlack = 1e-10;

bool slab_test(const Vec3 &lo, const Vec3 &hi, const Vec3 &origin, const Vec3 &inv_dir, double t_min,
               double t_max)
{
    for (int a = 0; a < 3; ++a) {
        double t0 = (lo[a] - origin[a]) * inv_dir[a];
        double t1 = (hi[a] - origin[a]) * inv_dir[a];
        if (t0 > t1) std::swap(t0, t1);
        // NaN from 0*inf compares false and leaves the interval untouched.
        if (t0 > t_min) t_min = t0;
        if (t1 < t_max) t_max = t1;
        if (t_min > t_max) return false;
    }
    return true;
}

} // namespace

Bvh::Bvh(std::span<const Vec3> vertices, std::span<const std::array<std::uint32_t, 3>> triangles)
{
    tris_.reserve(triangles.size());
    std::vector<Vec3> centroids;
    for (std::uint32_t i = 0; i < triangles.size(); ++i) {
        const auto &t = triangles[i];
        const Vec3 &a = vertices[t[0]];
        const Vec3 &b = vertices[t[1]];
        const Vec3 &c = vertices[t[2]];
        const Vec3 e1 = b - a, e2 = c - a;
        if (0.5 * e1.cross(e2).norm() < kDegenerateTriangleArea) continue;
        tris_.push_back({a, e1, e2, i});
        centroids.push_back((a + b + c) / 3.0);
    }
    if (tris_.empty()) return;
    nodes_.reserve(2 * tris_.size());
    build(0, static_cast<std::uint32_t>(tris_.size()), centroids);
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3> &centroids)
{
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    Vec3 clo = lo, chi = hi;
    for (auto i = begin; i < end; ++i) {
        const auto &t = tris_[i];
        for (const Vec3 &p : {t.p0, Vec3(t.p0 + t.e1), Vec3(t.p0 + t.e2)}) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        clo = clo.cwiseMin(centroids[i]);
        chi = chi.cwiseMax(centroids[i]);
    }
    nodes_[index].lo = lo;
    nodes_[index].hi = hi;

    if (end - begin <= kLeafSize) {
        nodes_[index].first = begin;
        nodes_[index].count = end - begin;
        return index;
    }

    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const auto mid = begin + (end - begin) / 2;
    // Sort the primitive range and its centroids together.
    std::vector<std::uint32_t> order(end - begin);
    std::iota(order.begin(), order.end(), begin);
    std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(),
                     [&](std::uint32_t x, std::uint32_t y) {
                         if (centroids[x][axis] != centroids[y][axis])
                             return centroids[x][axis] < centroids[y][axis];
                         return x < y;
                     });
    std::vector<Tri> tris(end - begin);
    std::vector<Vec3> cents(end - begin);
    for (std::size_t k = 0; k < order.size(); ++k) {
        tris[k] = tris_[order[k]];
        cents[k] = centroids[order[k]];
    }
    std::copy(tris.begin(), tris.end(), tris_.begin() + begin);
    std::copy(cents.begin(), cents.end(), centroids.begin() + begin);

    build(begin, mid, centroids);
    const auto right = build(mid, end, centroids);
    nodes_[index].first = right;
    nodes_[index].count = 0;
    return index;
}

template <bool AnyHit>
std::optional<RayHit> Bvh::traverse(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max) const
{
    if (nodes_.empty() || !(t_max > t_min)) return std::nullopt;
    const Vec3 inv_dir = dir.cwiseInverse();
    std::optional<RayHit> best;
    std::uint32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node &node = nodes_[stack[--top]];
        if (!slab_test(node.lo, node.hi, origin, inv_dir, t_min, t_max)) continue;
        if (node.count == 0) {
            const auto self = static_cast<std::uint32_t>(&node - nodes_.data());
            stack[top++] = node.first;
            stack[top++] = self + 1;
            continue;
        }
        for (auto i = node.first; i < node.first + node.count; ++i) {
            // Moller-Trumbore
            const Tri &tri = tris_[i];
            const Vec3 pvec = dir.cross(tri.e2);
            const double det = tri.e1.dot(pvec);
            if (std::abs(det) < 1e-300) continue;
            const double inv_det = 1.0 / det;
            const Vec3 tvec = origin - tri.p0;
            const double u = tvec.dot(pvec) * inv_det;
            if (u < -kEdgeSlack || u > 1.0 + kEdgeSlack) continue;
            const Vec3 qvec = tvec.cross(tri.e1);
            const double v = dir.dot(qvec) * inv_det;
            if (v < -kEdgeSlack || u + v > 1.0 + kEdgeSlack) continue;
            const double t = tri.e2.dot(qvec) * inv_det;
            if (t <= t_min || t > t_max || (t == t_max && !best)) continue;
            if constexpr (AnyHit) return RayHit{t, tri.id, u, v};
            // Equal distances resolve to the lowest triangle id.
            if (!best || t < best->t || (t == best->t && tri.id < best->triangle)) best = RayHit{t, tri.id, u, v};
            t_max = best->t;
        }
    }
    return best;
}

std::optional<RayHit> Bvh::closest_hit(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max) const
{
    return traverse<false>(origin, dir, t_min, t_max);
}

bool Bvh::occluded(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max) const
{
    return traverse<true>(origin, dir, t_min, t_max).has_value();
}

} // namespace dift
