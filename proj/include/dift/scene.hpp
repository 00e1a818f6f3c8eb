// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural turntable scenes and per-view attribute maps.
//
// World frame: y is up and the turntable axis is the y axis through the
// origin. Image coordinates have pixel (col, row) covering
// [col, col+1) x [row, row+1), row growing downward.

#pragma once

#include "dift/bvh.hpp"
#include "dift/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dift {

inline constexpr double kRoughnessFloor = 0.01;

struct SvbrdfParams {
    Vec3 diffuse_albedo = Vec3::Zero();
    Vec3 specular_albedo = Vec3::Zero();
    double roughness_x = 0.5;
    double roughness_y = 0.5;
    double tangent_rotation = 0.0; ///< radians

    void validate() const;
};

struct Ray {
    Vec3 origin;
    Vec3 dir;
};

struct Camera {
    Vec3 position = Vec3::Zero();
    Vec3 forward = Vec3::UnitZ();
    Vec3 up = Vec3::UnitY();
    Vec3 right = Vec3::UnitX();
    double focal_px = 1.0;
    Vec2 principal_point = Vec2::Zero();
    int width = 0;
    int height = 0;

    /// Pinhole looking at the turntable center from `elevation_deg` above
    /// the horizontal plane; focal length frames a radius-0.5 object.
    static Camera turntable(int width, int height, double distance = 2.0, double elevation_deg = 45.0);

    /// Ray through continuous image location (u, v); pixel centers sit at
    /// half-integers.
    Ray ray_through(double u, double v) const;
    Ray pixel_ray(int col, int row) const { return ray_through(col + 0.5, row + 0.5); }
    /// Continuous image location of a world point, or nullopt behind the camera.
    std::optional<Vec2> project(const Vec3 &world) const;
    /// World-space size of one pixel at `world`.
    double pixel_footprint(const Vec3 &world) const;

    void validate() const;
};

struct TurntablePose {
    double theta_deg = 0.0;
    Vec2 view_spec = Vec2(1.0, 0.0); ///< (cos theta, sin theta)

    /// Object-to-world rotation about the y axis.
    Mat3 rotation() const;
};

TurntablePose rotate_pose(double theta_deg);

enum class ShapeFamily : std::uint32_t { Sphere = 0, Torus = 1, Blob = 2, Superellipsoid = 3 };

ShapeFamily parse_family(std::string_view name);
std::string_view family_name(ShapeFamily family);

/// Texture grid of material parameters over uv in [0,1]^2, u periodic.
struct MaterialMap {
    int width = 0;
    int height = 0;
    std::vector<SvbrdfParams> texels;

    SvbrdfParams sample(const Vec2 &uv) const;
};

struct SceneObject {
    ShapeFamily family = ShapeFamily::Sphere;
    std::uint64_t seed = 0;
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;
    std::vector<Vec3> tangents;
    std::vector<Vec2> uvs;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    MaterialMap material;

    void validate() const;
};

SceneObject generate_scene(std::uint64_t seed, ShapeFamily family);

/// Stable surface-point identity: triangle plus barycentrics quantized to 1e-4.
struct PointId {
    std::uint32_t triangle = 0;
    std::uint16_t b1 = 0;
    std::uint16_t b2 = 0;

    bool operator==(const PointId &) const = default;
    static PointId from_barycentrics(std::uint32_t triangle, double b1, double b2);
};

/// One pixel of an attribute map. Values are stored at f32 precision so that
/// every code path, in memory or reloaded from disk, shades identical inputs.
struct AttributeRecord {
    std::array<float, 3> position{}; ///< world space at the map's pose
    std::array<float, 3> normal{};
    std::array<float, 3> tangent{};
    std::array<float, 3> diffuse{};
    std::array<float, 3> specular{};
    float roughness_x = 0.0f;
    float roughness_y = 0.0f;
    float tangent_rotation = 0.0f;
    PointId id{};
    bool valid = false;

    Vec3 x() const { return {position[0], position[1], position[2]}; }
    // Shading frame, re-orthonormalized in double from the f32 fields.
    Vec3 n() const { return Vec3(normal[0], normal[1], normal[2]).normalized(); }
    Vec3 t() const
    {
        const Vec3 nn = n(), raw(tangent[0], tangent[1], tangent[2]);
        return (raw - nn * nn.dot(raw)).normalized();
    }
    SvbrdfParams svbrdf() const;

    bool operator==(const AttributeRecord &) const = default;
};

struct AttributeMap {
    int width = 0;
    int height = 0;
    TurntablePose pose;
    std::vector<AttributeRecord> records; ///< row-major

    const AttributeRecord &at(int col, int row) const { return records[static_cast<std::size_t>(row) * width + col]; }
    bool inside(int col, int row) const { return col >= 0 && row >= 0 && col < width && row < height; }
    std::size_t valid_count() const;
};

/// A scene object with its acceleration structure, built in object space.
class TracedScene {
public:
    explicit TracedScene(SceneObject object);

    const SceneObject &object() const { return object_; }
    const Bvh &bvh() const { return bvh_; }

    /// Closest hit of a world-space ray against the object posed at `pose`.
    std::optional<RayHit> intersect(const Ray &world_ray, const TurntablePose &pose) const;
    /// Attribute record for a hit (world space at `pose`).
    AttributeRecord record_for_hit(const RayHit &hit, const TurntablePose &pose) const;
    /// Object-space position of a surface point.
    Vec3 surface_point(const RayHit &hit) const;

private:
    SceneObject object_;
    Bvh bvh_;
};

/// Cast the ray through image location (u, v) and return its attribute record.
AttributeRecord cast_record(const TracedScene &scene, const Camera &camera, const TurntablePose &pose, double u,
                            double v);

AttributeMap render_attribute_maps(const TracedScene &scene, const Camera &camera, const TurntablePose &pose);

/// Offset used to leave the surface when tracing shadow segments.
inline constexpr double kShadowEpsilon = 1e-4;

bool trace_visibility(const TracedScene &scene, const TurntablePose &pose, const Vec3 &x_p, const Vec3 &x_l);

// DIFTATTR container; layout in docs/FORMATS.md.
void save_attribute_map(const std::filesystem::path &path, const AttributeMap &map);
AttributeMap load_attribute_map(const std::filesystem::path &path);

} // namespace dift
