// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dift/common.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dift {

/// Triangles whose area falls below this are never reported as hits.
inline constexpr double kDegenerateTriangleArea = 1e-12;

struct RayHit {
    double t = 0.0;
    std::uint32_t triangle = 0;
    double b1 = 0.0; ///< barycentric weight of vertex 1
    double b2 = 0.0; ///< barycentric weight of vertex 2
};

/// Binary bounding-volume hierarchy over a static triangle soup, split at
/// the object median of the longest centroid axis.
class Bvh {
public:
    Bvh() = default;
    Bvh(std::span<const Vec3> vertices, std::span<const std::array<std::uint32_t, 3>> triangles);

    std::optional<RayHit> closest_hit(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max) const;
    bool occluded(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Eigen::Vector3d lo, hi;
        std::uint32_t first = 0; // first primitive (leaf) or right child (inner)
        std::uint32_t count = 0; // primitive count; 0 marks an inner node
    };
    struct Tri {
        Vec3 p0, e1, e2;
        std::uint32_t id;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3> &centroids);
    template <bool AnyHit>
    std::optional<RayHit> traverse(const Vec3 &origin, const Vec3 &dir, double t_min, double t_max) const;

    std::vector<Node> nodes_;
    std::vector<Tri> tris_;
};

} // namespace dift
