// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/photometry.hpp"

#include "dift/binary_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dift {

namespace {

constexpr double kFresnelF0 = 0.04;
std::atomic<std::uint64_t> g_roughness_clamps{0};

double clamp_roughness(double alpha)
{
    if (alpha < kRoughnessFloor) {
        g_roughness_clamps.fetch_add(1, std::memory_order_relaxed);
        return kRoughnessFloor;
    }
    return alpha;
}

// Direction expressed in the anisotropy frame rotated by `angle` about z.
inline Vec3 rotate_azimuth(const Vec3 &w, double cos_r, double sin_r)
{
    return {cos_r * w.x() + sin_r * w.y(), -sin_r * w.x() + cos_r * w.y(), w.z()};
}

inline double smith_lambda(const Vec3 &w, double ax, double ay)
{
    const double z2 = w.z() * w.z();
    const double tan2 = (ax * ax * w.x() * w.x() + ay * ay * w.y() * w.y()) / z2;
    return 0.5 * (-1.0 + std::sqrt(1.0 + tan2));
}

inline double lobe_rotated(const Vec3 &wi, const Vec3 &wo, double ax, double ay, double cos_r, double sin_r)
{
    const Vec3 h = (wi + wo).normalized();
    const Vec3 hr = rotate_azimuth(h, cos_r, sin_r);
    const double e = hr.x() * hr.x() / (ax * ax) + hr.y() * hr.y() / (ay * ay) + hr.z() * hr.z();
    const double d = 1.0 / (kPi * ax * ay * e * e);
    const double g = 1.0 / ((1.0 + smith_lambda(rotate_azimuth(wi, cos_r, sin_r), ax, ay)) *
                            (1.0 + smith_lambda(rotate_azimuth(wo, cos_r, sin_r), ax, ay)));
    const double c = std::max(0.0, 1.0 - wi.dot(h));
    const double c2 = c * c;
    const double f = kFresnelF0 + (1.0 - kFresnelF0) * c2 * c2 * c;
    return d * g * f / (4.0 * wi.z() * wo.z());
}

} // namespace

//---------------------------------------------------------------------------

LightRig LightRig::box(const RigConfig &config)
{
    if (!(config.box_size > 0.0) || config.leds_per_side < 1 || !(config.angular_exponent >= 0.0))
        throw ConfigError("invalid rig configuration");
    LightRig rig;
    rig.angular_exponent = config.angular_exponent;
    const double half = 0.5 * config.box_size;
    const int n = config.leds_per_side;
    for (int axis = 0; axis < 3; ++axis)
        for (double side : {1.0, -1.0}) {
            const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    Vec3 p = Vec3::Zero();
                    p[axis] = side * half;
                    p[ua] = -half + (c + 0.5) * config.box_size / n;
                    p[va] = -half + (r + 0.5) * config.box_size / n;
                    Vec3 nrm = Vec3::Zero();
                    nrm[axis] = -side;
                    rig.leds.push_back({p, nrm});
                }
        }
    rig.validate();
    return rig;
}

void LightRig::validate() const
{
    if (leds.size() < 4) throw ConfigError("light rig needs at least 4 LEDs");
    for (const auto &l : leds)
        if (std::abs(l.normal.norm() - 1.0) > 1e-9) throw ConfigError("LED normal is not unit length");
    if (!(angular_exponent >= 0.0)) throw ConfigError("angular exponent must be non-negative");
}

LightingPattern LightingPattern::uniform_half(std::size_t led_count)
{
    return {std::vector<double>(led_count, 0.0), std::vector<double>(led_count, 1.0)};
}

LightingPattern LightingPattern::binary(const std::vector<bool> &on)
{
    LightingPattern p;
    for (bool v : on) {
        p.a.push_back(v ? 1.0 : -1.0);
        p.b.push_back(0.0);
    }
    return p;
}

std::vector<double> LightingPattern::intensities() const
{
    std::vector<double> out(a.size());
    for (std::size_t l = 0; l < a.size(); ++l) out[l] = pattern_intensity_and_grad(a[l], b[l]).intensity;
    return out;
}

void LightingPattern::validate() const
{
    if (a.size() != b.size()) throw InputError("pattern parameter arrays differ in length");
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (!std::isfinite(a[l]) || !std::isfinite(b[l])) throw InputError("non-finite pattern parameter");
        if (a[l] == 0.0 && b[l] == 0.0) throw InputError("pattern parameters (0, 0) are not allowed");
    }
}

IntensityGrad pattern_intensity_and_grad(double a, double b)
{
    if (!std::isfinite(a) || !std::isfinite(b)) throw InputError("non-finite pattern parameter");
    if (a == 0.0 && b == 0.0) throw InputError("pattern parameters (0, 0) are not allowed");
    const double r = std::hypot(a, b);
    const double ca = std::clamp(a / r, -1.0, 1.0);
    const double cb = b / r;
    return {0.5 * (ca + 1.0), cb * cb / (2.0 * r), -ca * cb / (2.0 * r)};
}

Vec3 to_local_frame(const Vec3 &w, const Vec3 &n, const Vec3 &t)
{
    if (std::abs(n.dot(t)) > 1e-4) throw InputError("shading frame is not orthogonal");
    return {w.dot(t), w.dot(n.cross(t)), w.dot(n)};
}

double ggx_specular_lobe(const Vec3 &wi_local, const Vec3 &wo_local, const SvbrdfParams &params)
{
    if (wi_local.z() <= 0.0 || wo_local.z() <= 0.0) return 0.0;
    const double ax = clamp_roughness(params.roughness_x);
    const double ay = clamp_roughness(params.roughness_y);
    return lobe_rotated(wi_local, wo_local, ax, ay, std::cos(params.tangent_rotation),
                        std::sin(params.tangent_rotation));
}

Vec3 ggx_brdf(const Vec3 &wi_local, const Vec3 &wo_local, const SvbrdfParams &params)
{
    if (wi_local.z() <= 0.0 || wo_local.z() <= 0.0) return Vec3::Zero();
    const double lobe = ggx_specular_lobe(wi_local, wo_local, params);
    return params.diffuse_albedo / kPi + params.specular_albedo * lobe;
}

std::uint64_t roughness_clamp_count() { return g_roughness_clamps.load(); }

double light_geometry(const Vec3 &x_l, const Vec3 &n_l, const Vec3 &x_p, const Vec3 &n_p, double k)
{
    const Vec3 d = x_l - x_p;
    const double r2 = d.squaredNorm();
    const double r = std::sqrt(r2);
    if (!(r >= 1e-6)) throw InputError("light and surface point coincide");
    const Vec3 wi = d / r;
    const double cos_p = std::max(0.0, wi.dot(n_p));
    const double cos_l = std::max(0.0, -wi.dot(n_l));
    if (cos_p == 0.0 || cos_l == 0.0) return 0.0;
    const double psi = k == 0.0 ? 1.0 : std::pow(cos_l, k);
    return psi * cos_p * cos_l / r2;
}

VisibilityMask compute_visibility(const AttributeRecord &attr, const TurntablePose &pose, const LightRig &rig,
                                  const TracedScene &scene)
{
    VisibilityMask mask((rig.led_count() + 63) / 64, 0);
    if (!attr.valid) return mask;
    const Vec3 x = attr.x(), n = attr.n();
    for (std::size_t l = 0; l < rig.led_count(); ++l) {
        const auto &led = rig.leds[l];
        // LEDs that cannot contribute are left unset without tracing.
        if (light_geometry(led.position, led.normal, x, n, rig.angular_exponent) == 0.0) continue;
        if (trace_visibility(scene, pose, x, led.position)) mask[l / 64] |= 1ull << (l % 64);
    }
    return mask;
}

OlatBasis olat_basis(const AttributeRecord &attr, const VisibilityMask &visibility, const Camera &camera,
                     const LightRig &rig)
{
    OlatBasis basis(rig.led_count());
    if (!attr.valid) return basis;
    const Vec3 x = attr.x(), n = attr.n(), t = attr.t();
    const SvbrdfParams p = attr.svbrdf();
    const Vec3 wo = to_local_frame((camera.position - x).normalized(), n, t);
    if (wo.z() <= 0.0) return basis;

    const Vec3 diffuse = p.diffuse_albedo / kPi;
    const double ax = clamp_roughness(p.roughness_x), ay = clamp_roughness(p.roughness_y);
    const double cos_r = std::cos(p.tangent_rotation), sin_r = std::sin(p.tangent_rotation);
    const Vec3 bitangent = n.cross(t);
    for (std::size_t l = 0; l < rig.led_count(); ++l) {
        if (!led_visible(visibility, l)) continue;
        const auto &led = rig.leds[l];
        const double g = light_geometry(led.position, led.normal, x, n, rig.angular_exponent);
        if (g == 0.0) continue;
        const Vec3 wi_world = (led.position - x).normalized();
        const Vec3 wi(wi_world.dot(t), wi_world.dot(bitangent), wi_world.dot(n));
        if (wi.z() <= 0.0) continue;
        const double lobe = lobe_rotated(wi, wo, ax, ay, cos_r, sin_r);
        for (int c = 0; c < 3; ++c) basis.at(c, l) = g * (diffuse[c] + p.specular_albedo[c] * lobe);
    }
    return basis;
}

OlatBasis olat_basis(const AttributeRecord &attr, const TurntablePose &pose, const Camera &camera,
                     const LightRig &rig, const TracedScene &scene)
{
    return olat_basis(attr, compute_visibility(attr, pose, rig, scene), camera, rig);
}

Vec3 render_pixel(const OlatBasis &basis, std::span<const double> intensities)
{
    if (intensities.size() != basis.leds) throw InputError("pattern and basis LED counts differ");
    Vec3 out = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
        const auto ch = basis.channel(c);
        double acc = 0.0;
        for (std::size_t l = 0; l < basis.leds; ++l) acc += intensities[l] * ch[l];
        out[c] = acc;
    }
    return out;
}

Vec3 render_pixel(const OlatBasis &basis, const LightingPattern &pattern)
{
    if (pattern.led_count() != basis.leds) throw InputError("pattern and basis LED counts differ");
    const auto intensities = pattern.intensities();
    return render_pixel(basis, std::span<const double>(intensities));
}

PatternGrad pattern_backward_from_intensity(const LightingPattern &pattern, std::span<const double> d_intensity)
{
    if (d_intensity.size() != pattern.led_count()) throw InputError("gradient and pattern LED counts differ");
    PatternGrad g{std::vector<double>(pattern.led_count()), std::vector<double>(pattern.led_count())};
    for (std::size_t l = 0; l < pattern.led_count(); ++l) {
        const auto ig = pattern_intensity_and_grad(pattern.a[l], pattern.b[l]);
        g.d_a[l] = d_intensity[l] * ig.d_da;
        g.d_b[l] = d_intensity[l] * ig.d_db;
    }
    return g;
}

PatternGrad pattern_backward(const LightingPattern &pattern, std::span<const MeasurementGrad> terms)
{
    std::vector<double> d_intensity(pattern.led_count(), 0.0);
    for (const auto &term : terms) {
        if (term.basis->leds != pattern.led_count()) throw InputError("pattern and basis LED counts differ");
        if (term.d_measurement == 0.0) continue;
        const auto ch = term.basis->channel(term.channel);
        for (std::size_t l = 0; l < ch.size(); ++l) d_intensity[l] += term.d_measurement * ch[l];
    }
    return pattern_backward_from_intensity(pattern, d_intensity);
}

//---------------------------------------------------------------------------

void save_pattern(const std::filesystem::path &path, const LightingPattern &pattern)
{
    pattern.validate();
    std::string text = "# index a b intensity\n";
    char line[160];
    const auto intensity = pattern.intensities();
    for (std::size_t l = 0; l < pattern.led_count(); ++l) {
        std::snprintf(line, sizeof line, "%zu %.17g %.17g %.17g\n", l, pattern.a[l], pattern.b[l], intensity[l]);
        text += line;
    }
    write_text_file(path, text);
}

LightingPattern load_pattern(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pattern file " + path.string());
    LightingPattern p;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::size_t index;
        double a, b, intensity;
        if (!(ss >> index >> a >> b >> intensity) || index != p.a.size())
            throw DataError(path.string() + ": malformed pattern line '" + line + "'");
        p.a.push_back(a);
        p.b.push_back(b);
    }
    p.validate();
    return p;
}

std::string format_rig_config(const RigConfig &config)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "box_size = %.17g\nleds_per_side = %d\nangular_exponent = %.17g\n",
                  config.box_size, config.leds_per_side, config.angular_exponent);
    return buf;
}

RigConfig parse_rig_config(const std::string &text)
{
    RigConfig config;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError("rig config: expected 'key = value', got '" + line + "'");
            continue;
        }
        std::istringstream key_ss(line.substr(0, eq)), val_ss(line.substr(eq + 1));
        std::string key;
        key_ss >> key;
        bool ok = false;
        if (key == "box_size") ok = static_cast<bool>(val_ss >> config.box_size);
        else if (key == "leds_per_side") ok = static_cast<bool>(val_ss >> config.leds_per_side);
        else if (key == "angular_exponent") ok = static_cast<bool>(val_ss >> config.angular_exponent);
        else throw ConfigError("rig config: unknown key '" + key + "'");
        if (!ok) throw ConfigError("rig config: bad value for '" + key + "'");
    }
    return config;
}

} // namespace dift
