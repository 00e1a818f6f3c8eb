// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Lightstage model and direct-lighting image formation. A pixel measurement
// is linear in the LED intensities, so each pixel is summarized by its
// one-light-at-a-time (OLAT) basis and any pattern renders as a dot product.

#pragma once

#include "dift/common.hpp"
#include "dift/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dift {

struct Led {
    Vec3 position;
    Vec3 normal; ///< emitting direction, unit
};

struct RigConfig {
    double box_size = 3.0;    ///< edge length of the cubic box, centered on the turntable
    int leds_per_side = 6;    ///< LEDs per face = leds_per_side^2
    double angular_exponent = 0.0;
};

struct LightRig {
    std::vector<Led> leds;
    double angular_exponent = 0.0; ///< k in Psi = ((-w_i).n_l)^k

    static LightRig box(const RigConfig &config);
    std::size_t led_count() const { return leds.size(); }
    void validate() const;
};

/// Per-channel OLAT responses, channel-major: value(c, l) = data[c * leds + l].
struct OlatBasis {
    std::size_t leds = 0;
    std::vector<double> data;

    OlatBasis() = default;
    explicit OlatBasis(std::size_t led_count) : leds(led_count), data(3 * led_count, 0.0) {}
    double &at(int channel, std::size_t led) { return data[channel * leds + led]; }
    double at(int channel, std::size_t led) const { return data[channel * leds + led]; }
    std::span<const double> channel(int c) const { return {data.data() + c * leds, leds}; }
};

struct LightingPattern {
    std::vector<double> a;
    std::vector<double> b;

    /// Every LED at a = 0, b = 1, i.e. intensity 0.5.
    static LightingPattern uniform_half(std::size_t led_count);
    /// Pattern realizing intensities that are exactly 0 or 1.
    static LightingPattern binary(const std::vector<bool> &on);

    std::size_t led_count() const { return a.size(); }
    std::vector<double> intensities() const;
    void validate() const;
};

struct IntensityGrad {
    double intensity;
    double d_da;
    double d_db;
};

/// I = (a / sqrt(a^2 + b^2) + 1) / 2 with its analytic partials.
IntensityGrad pattern_intensity_and_grad(double a, double b);

/// Coordinates of world direction w in the frame (t, n x t, n).
Vec3 to_local_frame(const Vec3 &w, const Vec3 &n, const Vec3 &t);

/// Anisotropic GGX BRDF (per channel, 1/sr) for local-frame directions.
Vec3 ggx_brdf(const Vec3 &wi_local, const Vec3 &wo_local, const SvbrdfParams &params);
/// Specular lobe without albedo: D G F / (4 cos_i cos_o).
double ggx_specular_lobe(const Vec3 &wi_local, const Vec3 &wo_local, const SvbrdfParams &params);
/// Number of roughness values raised to the floor since process start.
std::uint64_t roughness_clamp_count();

/// 1/r^2 * Psi * (w_i.n_p)+ * (-w_i.n_l)+ for one LED.
double light_geometry(const Vec3 &x_l, const Vec3 &n_l, const Vec3 &x_p, const Vec3 &n_p, double k);

/// One bit per LED; set bits mark LEDs visible from the surface point.
using VisibilityMask = std::vector<std::uint64_t>;

VisibilityMask compute_visibility(const AttributeRecord &attr, const TurntablePose &pose, const LightRig &rig,
                                  const TracedScene &scene);
inline bool led_visible(const VisibilityMask &mask, std::size_t led) { return (mask[led / 64] >> (led % 64)) & 1u; }

/// OLAT basis from an attribute record and precomputed LED visibility.
OlatBasis olat_basis(const AttributeRecord &attr, const VisibilityMask &visibility, const Camera &camera,
                     const LightRig &rig);
/// OLAT basis with visibility traced against the scene.
OlatBasis olat_basis(const AttributeRecord &attr, const TurntablePose &pose, const Camera &camera,
                     const LightRig &rig, const TracedScene &scene);

Vec3 render_pixel(const OlatBasis &basis, const LightingPattern &pattern);
/// Same, for already-derived intensities.
Vec3 render_pixel(const OlatBasis &basis, std::span<const double> intensities);

struct PatternGrad {
    std::vector<double> d_a;
    std::vector<double> d_b;
};

/// Chains dL/dI(l) through the intensity reparameterization.
PatternGrad pattern_backward_from_intensity(const LightingPattern &pattern, std::span<const double> d_intensity);

/// One measurement's contribution to the pattern gradient.
struct MeasurementGrad {
    const OlatBasis *basis;
    int channel;
    double d_measurement; ///< dL/dB for this channel
};

PatternGrad pattern_backward(const LightingPattern &pattern, std::span<const MeasurementGrad> terms);

// Text formats: pattern "index a b intensity" per line; rig as key = value.
void save_pattern(const std::filesystem::path &path, const LightingPattern &pattern);
LightingPattern load_pattern(const std::filesystem::path &path);
std::string format_rig_config(const RigConfig &config);
RigConfig parse_rig_config(const std::string &text);

} // namespace dift
