// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/scene.hpp"

#include "dift/binary_io.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dift {

//---------------------------------------------------------------------------
// Types

void SvbrdfParams::validate() const
{
    auto in01 = [](const Vec3 &v) { return (v.array() >= 0.0).all() && (v.array() <= 1.0).all(); };
    if (!in01(diffuse_albedo) || !in01(specular_albedo)) throw InputError("albedo outside [0,1]");
    if (!(roughness_x >= kRoughnessFloor && roughness_x <= 1.0 && roughness_y >= kRoughnessFloor &&
          roughness_y <= 1.0))
        throw InputError("roughness outside [0.01, 1]");
    if (!std::isfinite(tangent_rotation)) throw InputError("non-finite tangent rotation");
}

Camera Camera::turntable(int width, int height, double distance, double elevation_deg)
{
    Camera cam;
    const double el = elevation_deg * kPi / 180.0;
    cam.position = Vec3(0.0, distance * std::sin(el), distance * std::cos(el));
    cam.forward = (-cam.position).normalized();
    cam.right = cam.forward.cross(Vec3::UnitY()).normalized();
    cam.up = cam.right.cross(cam.forward);
    cam.width = width;
    cam.height = height;
    cam.principal_point = Vec2(0.5 * width, 0.5 * height);
    const double half_angle = std::asin(0.5 / distance);
    cam.focal_px = 0.5 * std::min(width, height) / (1.05 * std::tan(half_angle));
    cam.validate();
    return cam;
}

Ray Camera::ray_through(double u, double v) const
{
    const Vec3 d = forward * focal_px + right * (u - principal_point.x()) - up * (v - principal_point.y());
    return {position, d.normalized()};
}

std::optional<Vec2> Camera::project(const Vec3 &world) const
{
    const Vec3 d = world - position;
    const double z = d.dot(forward);
    if (z <= 1e-12) return std::nullopt;
    return Vec2(principal_point.x() + focal_px * d.dot(right) / z, principal_point.y() - focal_px * d.dot(up) / z);
}

double Camera::pixel_footprint(const Vec3 &world) const { return (world - position).dot(forward) / focal_px; }

void Camera::validate() const
{
    const double tol = 1e-9;
    if (std::abs(forward.norm() - 1) > tol || std::abs(up.norm() - 1) > tol || std::abs(right.norm() - 1) > tol ||
        std::abs(forward.dot(up)) > tol || std::abs(forward.dot(right)) > tol || std::abs(up.dot(right)) > tol)
        throw InputError("camera basis is not orthonormal");
    if (!(focal_px > 0.0)) throw InputError("camera focal length must be positive");
    if (width < 8 || height < 8) throw InputError("camera resolution must be at least 8x8");
}

Mat3 TurntablePose::rotation() const
{
    return Eigen::AngleAxisd(theta_deg * kPi / 180.0, Vec3::UnitY()).toRotationMatrix();
}

TurntablePose rotate_pose(double theta_deg)
{
    if (!std::isfinite(theta_deg)) throw InputError("turntable angle must be finite");
    double wrapped = std::fmod(theta_deg, 360.0);
    if (wrapped < 0.0) wrapped += 360.0;
    if (wrapped >= 360.0) wrapped = 0.0;
    const double rad = wrapped * kPi / 180.0;
    return {wrapped, Vec2(std::cos(rad), std::sin(rad))};
}

ShapeFamily parse_family(std::string_view name)
{
    if (name == "sphere") return ShapeFamily::Sphere;
    if (name == "torus") return ShapeFamily::Torus;
    if (name == "blob") return ShapeFamily::Blob;
    if (name == "superellipsoid") return ShapeFamily::Superellipsoid;
    throw InputError("unknown shape family '" + std::string(name) + "'");
}

std::string_view family_name(ShapeFamily family)
{
    switch (family) {
    case ShapeFamily::Sphere: return "sphere";
    case ShapeFamily::Torus: return "torus";
    case ShapeFamily::Blob: return "blob";
    case ShapeFamily::Superellipsoid: return "superellipsoid";
    }
    throw InputError("unknown shape family");
}

SvbrdfParams MaterialMap::sample(const Vec2 &uv) const
{
    // Bilinear, periodic in u, clamped in v.
    const double x = uv.x() * width - 0.5;
    const double y = std::clamp(uv.y() * height - 0.5, 0.0, height - 1.0);
    const double fx = std::floor(x), fy = std::floor(y);
    const double wx = x - fx, wy = y - fy;
    auto wrap = [&](long i) { return static_cast<int>(((i % width) + width) % width); };
    const int x0 = wrap(static_cast<long>(fx)), x1 = wrap(static_cast<long>(fx) + 1);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, height - 1);
    const auto &a = texels[static_cast<std::size_t>(y0) * width + x0];
    const auto &b = texels[static_cast<std::size_t>(y0) * width + x1];
    const auto &c = texels[static_cast<std::size_t>(y1) * width + x0];
    const auto &d = texels[static_cast<std::size_t>(y1) * width + x1];
    const double wa = (1 - wx) * (1 - wy), wb = wx * (1 - wy), wc = (1 - wx) * wy, wd = wx * wy;
    SvbrdfParams p;
    p.diffuse_albedo = wa * a.diffuse_albedo + wb * b.diffuse_albedo + wc * c.diffuse_albedo + wd * d.diffuse_albedo;
    p.specular_albedo =
        wa * a.specular_albedo + wb * b.specular_albedo + wc * c.specular_albedo + wd * d.specular_albedo;
    p.roughness_x = wa * a.roughness_x + wb * b.roughness_x + wc * c.roughness_x + wd * d.roughness_x;
    p.roughness_y = wa * a.roughness_y + wb * b.roughness_y + wc * c.roughness_y + wd * d.roughness_y;
    p.tangent_rotation =
        wa * a.tangent_rotation + wb * b.tangent_rotation + wc * c.tangent_rotation + wd * d.tangent_rotation;
    return p;
}

void SceneObject::validate() const
{
    const auto n = vertices.size();
    if (normals.size() != n || tangents.size() != n || uvs.size() != n)
        throw InputError("scene object attribute arrays differ in length");
    for (const auto &t : triangles)
        for (auto i : t)
            if (i >= n) throw InputError("triangle index out of range");
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(normals[i].norm() - 1.0) > 1e-9 || std::abs(tangents[i].norm() - 1.0) > 1e-9 ||
            std::abs(normals[i].dot(tangents[i])) > 1e-6)
            throw InputError("vertex frame is not orthonormal at vertex " + std::to_string(i));
    }
    if (material.width <= 0 || material.height <= 0 ||
        material.texels.size() != static_cast<std::size_t>(material.width) * material.height)
        throw InputError("material map has inconsistent size");
    for (const auto &t : material.texels) t.validate();
}

PointId PointId::from_barycentrics(std::uint32_t triangle, double b1, double b2)
{
    auto q = [](double b) { return static_cast<std::uint16_t>(std::lround(std::clamp(b, 0.0, 1.0) * 1e4)); };
    return {triangle, q(b1), q(b2)};
}

SvbrdfParams AttributeRecord::svbrdf() const
{
    SvbrdfParams p;
    p.diffuse_albedo = Vec3(diffuse[0], diffuse[1], diffuse[2]);
    p.specular_albedo = Vec3(specular[0], specular[1], specular[2]);
    p.roughness_x = roughness_x;
    p.roughness_y = roughness_y;
    p.tangent_rotation = tangent_rotation;
    return p;
}

std::size_t AttributeMap::valid_count() const
{
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto &r) { return r.valid; }));
}

//---------------------------------------------------------------------------
// Procedural generation

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double lattice(std::uint64_t key, long i, long j, long k = 0)
{
    std::uint64_t h = splitmix(key ^ splitmix(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ull ^
                                              splitmix(static_cast<std::uint64_t>(j) * 0x85157af5ull ^
                                                       static_cast<std::uint64_t>(k) * 0x9e3779b1ull)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on a lattice periodic in x with the given period.
double value_noise2(std::uint64_t key, double x, double y, long period_x)
{
    const double fx = std::floor(x), fy = std::floor(y);
    const long ix = static_cast<long>(fx), iy = static_cast<long>(fy);
    const double sx = smooth(x - fx), sy = smooth(y - fy);
    auto w = [&](long i) { return ((i % period_x) + period_x) % period_x; };
    const double v00 = lattice(key, w(ix), iy), v10 = lattice(key, w(ix + 1), iy);
    const double v01 = lattice(key, w(ix), iy + 1), v11 = lattice(key, w(ix + 1), iy + 1);
    return (v00 * (1 - sx) + v10 * sx) * (1 - sy) + (v01 * (1 - sx) + v11 * sx) * sy;
}

double value_noise3(std::uint64_t key, const Vec3 &p)
{
    const Vec3 f(std::floor(p.x()), std::floor(p.y()), std::floor(p.z()));
    const long ix = static_cast<long>(f.x()), iy = static_cast<long>(f.y()), iz = static_cast<long>(f.z());
    const double sx = smooth(p.x() - f.x()), sy = smooth(p.y() - f.y()), sz = smooth(p.z() - f.z());
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? sx : 1 - sx) * (dy ? sy : 1 - sy) * (dz ? sz : 1 - sz);
                acc += w * lattice(key, ix + dx, iy + dy, iz + dz);
            }
    return acc;
}

struct NoiseField {
    std::uint64_t key;
    int octaves;
    long base_u; // cells around the u period at octave 0
    long base_v;

    // Fractal sum in [0,1], contrast-stretched so both flat and busy regions occur.
    double operator()(double u, double v) const
    {
        double sum = 0.0, norm = 0.0, amp = 1.0;
        for (int o = 0; o < octaves; ++o) {
            const long fu = base_u << o, fv = base_v << o;
            sum += amp * value_noise2(key + static_cast<std::uint64_t>(o) * 7919, u * fu, v * fv, fu);
            norm += amp;
            amp *= 0.5;
        }
        return std::clamp((sum / norm - 0.5) * 2.2 + 0.5, 0.0, 1.0);
    }
};

struct ParametricSurface {
    std::function<Vec3(double u, double v)> position;
    bool periodic_v = false; // torus; otherwise rows 0 and nv are poles
};

ParametricSurface make_surface(ShapeFamily family, Rng &rng, std::uint64_t noise_key)
{
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    switch (family) {
    case ShapeFamily::Sphere:
        return {[](double u, double v) {
                    const double phi = 2 * kPi * u, th = kPi * v;
                    return Vec3(std::sin(th) * std::cos(phi), std::cos(th), std::sin(th) * std::sin(phi));
                },
                false};
    case ShapeFamily::Torus: {
        const double major = uni(0.62, 0.72), minor = 1.0 - major;
        const Mat3 tilt = Eigen::AngleAxisd(uni(-0.4, 0.4), Vec3::UnitX()).toRotationMatrix();
        return {[=](double u, double v) {
                    const double phi = 2 * kPi * u, beta = 2 * kPi * v;
                    const double ring = major + minor * std::cos(beta);
                    return Vec3(tilt * Vec3(ring * std::cos(phi), minor * std::sin(beta), ring * std::sin(phi)));
                },
                true};
    }
    case ShapeFamily::Blob: {
        const double amp = uni(0.15, 0.3), freq = uni(1.5, 2.5);
        return {[=](double u, double v) {
                    const double phi = 2 * kPi * u, th = kPi * v;
                    const Vec3 dir(std::sin(th) * std::cos(phi), std::cos(th), std::sin(th) * std::sin(phi));
                    const double n = 0.65 * value_noise3(noise_key, dir * freq + Vec3::Constant(11.3)) +
                                     0.35 * value_noise3(noise_key + 1, dir * 2 * freq + Vec3::Constant(3.7));
                    return Vec3(dir * (1.0 + amp * (2.0 * n - 1.0)));
                },
                false};
    }
    case ShapeFamily::Superellipsoid: {
        const double e1 = uni(0.5, 1.4), e2 = uni(0.5, 1.4);
        const Vec3 axes(uni(0.7, 1.0), uni(0.7, 1.0), uni(0.7, 1.0));
        auto spow = [](double x, double e) { return std::copysign(std::pow(std::abs(x), e), x); };
        return {[=](double u, double v) {
                    const double phi = 2 * kPi * u, th = kPi * v;
                    const double s = spow(std::sin(th), e1);
                    return Vec3(axes.x() * s * spow(std::cos(phi), e2), axes.y() * spow(std::cos(th), e1),
                                axes.z() * s * spow(std::sin(phi), e2));
                },
                false};
    }
    }
    throw InputError("unknown shape family");
}

Vec3 any_perpendicular(const Vec3 &n)
{
    const Vec3 axis = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
    return (axis - axis.dot(n) * n).normalized();
}

Vec3 orthogonalize(const Vec3 &t, const Vec3 &n)
{
    const Vec3 perp = t - t.dot(n) * n;
    const double len = perp.norm();
    if (len < 1e-8) return any_perpendicular(n);
    Vec3 out = perp / len;
    // One more pass removes rounding left by the first projection.
    out = (out - out.dot(n) * n).normalized();
    return out;
}

constexpr int kMeshU = 96;
constexpr int kMeshV = 48;
constexpr int kTextureU = 128;
constexpr int kTextureV = 64;
constexpr double kObjectRadius = 0.45;

} // namespace

SceneObject generate_scene(std::uint64_t seed, ShapeFamily family)
{
    if (static_cast<std::uint32_t>(family) > static_cast<std::uint32_t>(ShapeFamily::Superellipsoid))
        throw InputError("unknown shape family");

    Rng rng(splitmix(seed * 4 + static_cast<std::uint64_t>(family)));
    SceneObject obj;
    obj.family = family;
    obj.seed = seed;

    const auto surface = make_surface(family, rng, splitmix(seed + 17));
    const int nu = kMeshU, nv = kMeshV;
    const int cols = nu + 1, rows = nv + 1;
    auto vid = [&](int i, int j) { return static_cast<std::uint32_t>(j * cols + i); };
    // Seam duplicates (and pole rings) share one canonical vertex for normal averaging.
    auto canonical = [&](int i, int j) {
        if (!surface.periodic_v && (j == 0 || j == nv)) return vid(0, j);
        return vid(i % nu, surface.periodic_v ? j % nv : j);
    };

    obj.vertices.resize(static_cast<std::size_t>(cols) * rows);
    obj.uvs.resize(obj.vertices.size());
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) {
            const double u = static_cast<double>(i % nu) / nu;
            const double v = surface.periodic_v ? static_cast<double>(j % nv) / nv : static_cast<double>(j) / nv;
            obj.vertices[vid(i, j)] = surface.position(u, v);
            obj.uvs[vid(i, j)] = Vec2(static_cast<double>(i) / nu, static_cast<double>(j) / nv);
        }
    // Exact copies across seams keep the mesh closed.
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) obj.vertices[vid(i, j)] = obj.vertices[canonical(i, j)];

    double max_r = 0.0;
    for (const auto &p : obj.vertices) max_r = std::max(max_r, p.norm());
    for (auto &p : obj.vertices) p *= kObjectRadius / max_r;

    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            const std::array<std::uint32_t, 3> t0{vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)};
            const std::array<std::uint32_t, 3> t1{vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)};
            for (const auto &t : {t0, t1}) {
                const Vec3 &a = obj.vertices[t[0]], &b = obj.vertices[t[1]], &c = obj.vertices[t[2]];
                if (0.5 * (b - a).cross(c - a).norm() >= kDegenerateTriangleArea) obj.triangles.push_back(t);
            }
        }

    double signed_volume = 0.0;
    for (const auto &t : obj.triangles)
        signed_volume += obj.vertices[t[0]].dot(obj.vertices[t[1]].cross(obj.vertices[t[2]]));
    if (signed_volume < 0.0)
        for (auto &t : obj.triangles) std::swap(t[1], t[2]);

    std::vector<Vec3> accum(obj.vertices.size(), Vec3::Zero());
    std::vector<std::uint32_t> canon(obj.vertices.size());
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) canon[vid(i, j)] = canonical(i, j);
    for (const auto &t : obj.triangles) {
        const Vec3 &a = obj.vertices[t[0]], &b = obj.vertices[t[1]], &c = obj.vertices[t[2]];
        const Vec3 area_normal = (b - a).cross(c - a);
        for (auto i : t) accum[canon[i]] += area_normal;
    }
    obj.normals.resize(obj.vertices.size());
    obj.tangents.resize(obj.vertices.size());
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) {
            const auto id = vid(i, j);
            Vec3 n = accum[canon[id]];
            n = n.norm() > 0 ? Vec3(n.normalized()) : Vec3(obj.vertices[id].normalized());
            obj.normals[id] = n;
            // uv-derived tangent: direction of increasing u, then Gram-Schmidt.
            const Vec3 du = obj.vertices[canonical((i + 1) % nu, j)] - obj.vertices[canonical((i + nu - 1) % nu, j)];
            obj.tangents[id] = orthogonalize(du, n);
        }

    // Independent value-noise fields per material parameter.
    auto field = [&](int index) {
        const int octaves = 2 + static_cast<int>(rng() % 3);
        const long base = 4 + static_cast<long>(rng() % 4);
        return NoiseField{splitmix(seed * 131 + static_cast<std::uint64_t>(index) * 1013 + 5), octaves, base,
                          std::max(2L, base / 2)};
    };
    const NoiseField kd[3] = {field(0), field(1), field(2)};
    const NoiseField ks[3] = {field(3), field(4), field(5)};
    const NoiseField rx = field(6), ry = field(7), rot = field(8);

    auto &mat = obj.material;
    mat.width = kTextureU;
    mat.height = kTextureV;
    mat.texels.resize(static_cast<std::size_t>(mat.width) * mat.height);
    for (int y = 0; y < mat.height; ++y)
        for (int x = 0; x < mat.width; ++x) {
            const double u = (x + 0.5) / mat.width, v = (y + 0.5) / mat.height;
            SvbrdfParams p;
            for (int c = 0; c < 3; ++c) {
                p.diffuse_albedo[c] = 0.05 + 0.85 * kd[c](u, v);
                p.specular_albedo[c] = 0.1 + 0.9 * ks[c](u, v);
            }
            p.roughness_x = 0.05 + 0.65 * rx(u, v);
            p.roughness_y = 0.05 + 0.65 * ry(u, v);
            p.tangent_rotation = kPi * rot(u, v) * 0.999;
            mat.texels[static_cast<std::size_t>(y) * mat.width + x] = p;
        }

    obj.validate();
    return obj;
}

//---------------------------------------------------------------------------
// Ray casting

TracedScene::TracedScene(SceneObject object) : object_(std::move(object)), bvh_(object_.vertices, object_.triangles)
{
}

std::optional<RayHit> TracedScene::intersect(const Ray &world_ray, const TurntablePose &pose) const
{
    const Mat3 inv = pose.rotation().transpose();
    return bvh_.closest_hit(inv * world_ray.origin, inv * world_ray.dir, 0.0, std::numeric_limits<double>::infinity());
}

Vec3 TracedScene::surface_point(const RayHit &hit) const
{
    const auto &t = object_.triangles[hit.triangle];
    const double b0 = 1.0 - hit.b1 - hit.b2;
    return b0 * object_.vertices[t[0]] + hit.b1 * object_.vertices[t[1]] + hit.b2 * object_.vertices[t[2]];
}

AttributeRecord TracedScene::record_for_hit(const RayHit &hit, const TurntablePose &pose) const
{
    const auto &tri = object_.triangles[hit.triangle];
    const double b0 = 1.0 - hit.b1 - hit.b2;
    auto lerp = [&](const auto &attr) {
        return (b0 * attr[tri[0]] + hit.b1 * attr[tri[1]] + hit.b2 * attr[tri[2]]).eval();
    };
    const Vec3 n_obj = lerp(object_.normals).normalized();
    const Vec3 t_obj = orthogonalize(lerp(object_.tangents), n_obj);
    const Vec2 uv = lerp(object_.uvs);
    const Mat3 rot = pose.rotation();
    const Vec3 x = rot * surface_point(hit);
    const Vec3 n = rot * n_obj;
    const Vec3 t = rot * t_obj;
    const SvbrdfParams m = object_.material.sample(uv);

    AttributeRecord r;
    for (int k = 0; k < 3; ++k) {
        r.position[k] = static_cast<float>(x[k]);
        r.normal[k] = static_cast<float>(n[k]);
        r.tangent[k] = static_cast<float>(t[k]);
        r.diffuse[k] = static_cast<float>(m.diffuse_albedo[k]);
        r.specular[k] = static_cast<float>(m.specular_albedo[k]);
    }
    r.roughness_x = static_cast<float>(std::max(m.roughness_x, kRoughnessFloor));
    r.roughness_y = static_cast<float>(std::max(m.roughness_y, kRoughnessFloor));
    r.tangent_rotation = static_cast<float>(m.tangent_rotation);
    r.id = PointId::from_barycentrics(hit.triangle, hit.b1, hit.b2);
    r.valid = true;
    return r;
}

AttributeRecord cast_record(const TracedScene &scene, const Camera &camera, const TurntablePose &pose, double u,
                            double v)
{
    const auto hit = scene.intersect(camera.ray_through(u, v), pose);
    if (!hit) return AttributeRecord{};
    return scene.record_for_hit(*hit, pose);
}

AttributeMap render_attribute_maps(const TracedScene &scene, const Camera &camera, const TurntablePose &pose)
{
    camera.validate();
    AttributeMap map;
    map.width = camera.width;
    map.height = camera.height;
    map.pose = pose;
    map.records.resize(static_cast<std::size_t>(map.width) * map.height);
    parallel_for(static_cast<std::size_t>(map.height), [&](std::size_t row) {
        for (int col = 0; col < map.width; ++col)
            map.records[row * map.width + col] = cast_record(scene, camera, pose, col + 0.5, row + 0.5);
    });
    return map;
}

bool trace_visibility(const TracedScene &scene, const TurntablePose &pose, const Vec3 &x_p, const Vec3 &x_l)
{
    const Vec3 seg = x_l - x_p;
    const double len = seg.norm();
    if (len <= kShadowEpsilon) return true;
    const Vec3 dir = seg / len;
    const Mat3 inv = pose.rotation().transpose();
    const Vec3 origin = inv * (x_p + kShadowEpsilon * dir);
    return !scene.bvh().occluded(origin, inv * dir, 0.0, len - kShadowEpsilon);
}

//---------------------------------------------------------------------------
// DIFTATTR

namespace {

constexpr std::uint32_t kAttrVersion = 1;
const char *const kAttrFields[] = {"px", "py", "pz", "nx", "ny", "nz", "tx", "ty", "tz", "kd_r", "kd_g",
                                   "kd_b", "ks_r", "ks_g", "ks_b", "alpha_x", "alpha_y", "aniso_rot",
                                   "triangle", "bary1", "bary2"};
constexpr std::size_t kAttrFieldCount = std::size(kAttrFields);

} // namespace

void save_attribute_map(const std::filesystem::path &path, const AttributeMap &map)
{
    ByteWriter w;
    w.put_magic("DIFTATTR");
    w.put<std::uint32_t>(kAttrVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(map.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(map.height));
    w.put<double>(map.pose.theta_deg);
    w.put<std::uint32_t>(kAttrFieldCount);
    for (const char *f : kAttrFields) w.put_string(f);
    for (const auto &r : map.records) {
        const float rec[kAttrFieldCount] = {
            r.position[0], r.position[1], r.position[2], r.normal[0],   r.normal[1],
            r.normal[2],   r.tangent[0],  r.tangent[1],  r.tangent[2],  r.diffuse[0],
            r.diffuse[1],  r.diffuse[2],  r.specular[0], r.specular[1], r.specular[2],
            r.roughness_x, r.roughness_y, r.tangent_rotation, static_cast<float>(r.id.triangle),
            static_cast<float>(r.id.b1), static_cast<float>(r.id.b2)};
        w.put_array<float>(rec);
    }
    std::vector<std::uint8_t> mask((map.records.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < map.records.size(); ++i)
        if (map.records[i].valid) mask[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    w.put_bytes(mask);
    w.put<std::uint64_t>(fnv1a64(w.bytes()));
    write_file(path, w.bytes());
}

AttributeMap load_attribute_map(const std::filesystem::path &path)
{
    const auto bytes = read_file(path);
    if (bytes.size() < 8) throw DataError(path.string() + ": truncated attribute map");
    ByteReader tail({bytes.data() + bytes.size() - 8, 8}, path.string());
    const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
    if (tail.get<std::uint64_t>() != fnv1a64(body)) throw DataError(path.string() + ": checksum mismatch");

    ByteReader r(body, path.string());
    r.expect_magic("DIFTATTR");
    if (r.get<std::uint32_t>() != kAttrVersion) throw DataError(path.string() + ": unsupported version");
    AttributeMap map;
    map.width = static_cast<int>(r.get<std::uint32_t>());
    map.height = static_cast<int>(r.get<std::uint32_t>());
    map.pose = rotate_pose(r.get<double>());
    if (r.get<std::uint32_t>() != kAttrFieldCount) throw DataError(path.string() + ": unexpected field list");
    for (const char *f : kAttrFields)
        if (r.get_string() != f) throw DataError(path.string() + ": unexpected field list");
    map.records.resize(static_cast<std::size_t>(map.width) * map.height);
    for (auto &rec : map.records) {
        float v[kAttrFieldCount];
        r.get_array<float>(v);
        for (int k = 0; k < 3; ++k) {
            rec.position[k] = v[k];
            rec.normal[k] = v[3 + k];
            rec.tangent[k] = v[6 + k];
            rec.diffuse[k] = v[9 + k];
            rec.specular[k] = v[12 + k];
        }
        rec.roughness_x = v[15];
        rec.roughness_y = v[16];
        rec.tangent_rotation = v[17];
        rec.id = {static_cast<std::uint32_t>(v[18]), static_cast<std::uint16_t>(v[19]),
                  static_cast<std::uint16_t>(v[20])};
    }
    const auto mask = r.get_bytes((map.records.size() + 7) / 8);
    for (std::size_t i = 0; i < map.records.size(); ++i) {
        map.records[i].valid = (mask[i / 8] >> (i % 8)) & 1u;
        if (!map.records[i].valid) map.records[i] = AttributeRecord{};
    }
    if (r.remaining() != 0) throw DataError(path.string() + ": trailing bytes");
    return map;
}

} // namespace dift
