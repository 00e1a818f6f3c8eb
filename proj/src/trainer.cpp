// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/trainer.hpp"

#include "dift/binary_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dift {

namespace {

constexpr std::uint64_t kSamplingStream = 0x9e3779b97f4a7c15ULL;

std::vector<std::span<double>> pattern_blocks(LightingPattern &p) { return {p.a, p.b}; }

void summarize_pattern(const LightingPattern &pattern, TrainLogRecord &rec)
{
    const auto in = pattern.intensities();
    rec.intensity_min = *std::min_element(in.begin(), in.end());
    rec.intensity_max = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double x : in) sum += x;
    rec.intensity_mean = sum / static_cast<double>(in.size());
}

std::string describe_batch(const PairBatch &batch, int channel, const PairLoss &loss)
{
    std::ostringstream os;
    os << "capture " << batch.capture << ", anchor view " << batch.anchor_view << ", channel " << channel
       << ", L_pos " << loss.positive << ", L_neg " << loss.negative << ", groups:";
    for (const auto &g : batch.groups)
        os << " (" << g.anchor.pixel.col << "," << g.anchor.pixel.row << ")->v" << g.second.view << "("
           << g.second.pixel.col << "," << g.second.pixel.row << ")";
    return os.str();
}

} // namespace

void TrainConfig::validate() const
{
    shape.validate();
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
    if (batch < 2) throw ConfigError("batch must be at least 2");
    if (!(lambda > 0.0) || !(learning_rate > 0.0) || !(lighting_learning_rate > 0.0))
        throw ConfigError("lambda and learning rates must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
    if (w_neg < 3 || w_neg % 2 == 0) throw ConfigError("w_neg must be odd and at least 3");
    if (hidden < 1) throw ConfigError("hidden width must be positive");
    if (checkpoint_every < 0 || log_every < 0) throw ConfigError("cadences must be non-negative");
    if (lighting == LightingMode::Fixed) {
        if (!fixed_pattern) throw ConfigError("fixed lighting requires a pattern");
        fixed_pattern->validate();
    }
}

int TrainConfig::effective_batch() const { return std::min(batch, w_neg * w_neg); }

std::string TrainLogRecord::to_json() const
{
    nlohmann::ordered_json j;
    j["step"] = step;
    j["L"] = loss;
    j["L_pos"] = loss_pos;
    j["L_neg"] = loss_neg;
    j["mean_pos"] = mean_pos;
    j["mean_neg"] = mean_neg;
    j["I_min"] = intensity_min;
    j["I_mean"] = intensity_mean;
    j["I_max"] = intensity_max;
    j["wall_s"] = wall_seconds;
    return j.dump();
}

LightingPattern four_point_pattern(const LightRig &rig)
{
    const Vec3 up = Vec3::UnitY();
    std::vector<bool> on(rig.led_count(), false);
    std::vector<Vec3> faces;
    for (const auto &led : rig.leds)
        if (std::abs(led.normal.y()) < 0.5 &&
            std::none_of(faces.begin(), faces.end(), [&](const Vec3 &f) { return f.dot(led.normal) > 0.99; }))
            faces.push_back(led.normal);
    if (faces.size() != 4) throw ConfigError("four-point pattern needs a rig with four side faces");
    for (const auto &face : faces) {
        const Vec3 along = up.cross(face);
        std::size_t best = rig.led_count();
        for (std::size_t l = 0; l < rig.led_count(); ++l) {
            if (rig.leds[l].normal.dot(face) < 0.99) continue;
            if (best == rig.led_count()) {
                best = l;
                continue;
            }
            const Vec3 &p = rig.leds[l].position, &q = rig.leds[best].position;
            if (p.y() > q.y() + 1e-9 || (std::abs(p.y() - q.y()) <= 1e-9 && p.dot(along) > q.dot(along))) best = l;
        }
        on[best] = true;
    }
    return LightingPattern::binary(on);
}

RenderedBatch render_batch(const PairBatch &batch, std::span<const double> intensities, int channel, Rng *noise,
                           double sigma)
{
    if (channel < 0 || channel > 2) throw InputError("channel out of range");
    if (batch.groups.empty()) throw InputError("empty pair batch");
    RenderedBatch out;
    const auto shape = batch.groups.front().anchor.shape;
    const auto cols = static_cast<Eigen::Index>(2 * batch.groups.size());
    out.inputs.resize(shape.size(), cols);
    out.view_specs.resize(2, cols);
    for (std::size_t g = 0; g < batch.groups.size(); ++g) {
        out.sources.push_back(&batch.groups[g].anchor);
        out.sources.push_back(&batch.groups[g].second);
        out.tags.push_back({static_cast<int>(g), 0});
        out.tags.push_back({static_cast<int>(g), 1});
    }
    // Noise draws stay serial so the stream is independent of threading.
    for (Eigen::Index c = 0; c < cols; ++c) {
        out.tensors.push_back(render_input_tensor(*out.sources[c], intensities, noise, sigma));
        out.inputs.col(c) = tensor_column(out.tensors.back(), channel);
        out.view_specs.col(c) = out.tensors.back().view_spec;
    }
    return out;
}

BatchGradients batch_gradients(const NetworkParams &params, const LightingPattern &pattern,
                               const RenderedBatch &rendered, int channel, double lambda, bool with_pattern)
{
    const auto cache = forward(params, rendered.inputs, rendered.view_specs);
    BatchGradients out;
    out.loss = pair_loss(cache.features, rendered.tags, lambda);
    auto back = backward(params, cache, out.loss.d_features);
    out.network = std::move(back.grads);
    out.d_inputs = std::move(back.d_inputs);
    if (with_pattern) {
        std::vector<MeasurementGrad> terms;
        for (std::size_t c = 0; c < rendered.tensors.size(); ++c) {
            const auto &t = rendered.tensors[c];
            const auto &src = *rendered.sources[c];
            for (std::size_t e = 0; e < t.valid.size(); ++e) {
                if (!t.valid[e]) continue;
                const double d = out.d_inputs(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(c)) *
                                 t.gain[channel][e];
                terms.push_back({src.bases[e].get(), channel, d});
            }
        }
        out.pattern = pattern_backward(pattern, terms);
    }
    return out;
}

Checkpoint initial_checkpoint(const Dataset &dataset, const TrainConfig &config)
{
    config.validate();
    Checkpoint ck;
    Rng init_rng(config.seed);
    ck.params = init_params(config.shape, init_rng, config.hidden);
    ck.adam = AdamState::for_blocks(ck.params.blocks(), {config.learning_rate});
    ck.pattern = config.lighting == LightingMode::Fixed ? *config.fixed_pattern
                                                        : LightingPattern::uniform_half(dataset.rig.led_count());
    if (ck.pattern.led_count() != dataset.rig.led_count())
        throw ConfigError("pattern has " + std::to_string(ck.pattern.led_count()) + " LEDs, rig has " +
                          std::to_string(dataset.rig.led_count()));
    ck.pattern_adam = AdamState::for_blocks(pattern_blocks(ck.pattern), {config.lighting_learning_rate});
    ck.lambda = config.lambda;
    ck.seed = config.seed;
    ck.w_neg = config.w_neg;
    ck.angular_interval_deg = dataset.geometry.angular_interval_deg;
    ck.lighting_mode = config.lighting == LightingMode::Joint ? "joint" : "fixed";
    return ck;
}

TrainResult train(const Dataset &dataset, const TrainConfig &config, const TrainLogSink &sink)
{
    return train_from(dataset, config, initial_checkpoint(dataset, config), sink);
}

TrainResult train_from(const Dataset &dataset, const TrainConfig &config, Checkpoint ck, const TrainLogSink &sink)
{
    config.validate();
    if (!(dataset.header.shape == config.shape)) throw ConfigError("dataset tensor shape differs from config");
    if (!(ck.params.shape == config.shape)) throw ConfigError("checkpoint tensor shape differs from config");
    if (ck.pattern.led_count() != dataset.rig.led_count()) throw ConfigError("pattern LED count differs from rig");
    if (dataset.valid_pixels.size() != dataset.captures.size()) throw InputError("dataset pixels are not indexed");

    const bool joint = config.lighting == LightingMode::Joint;
    const int n = config.effective_batch();
    Rng rng(config.seed ^ kSamplingStream ^ static_cast<std::uint64_t>(ck.step));

    TrainResult result;
    const auto start = std::chrono::steady_clock::now();
    auto blocks = ck.params.blocks();
    auto pblocks = pattern_blocks(ck.pattern);
    const auto fixed_before = ck.pattern;

    for (; ck.step < config.iterations;) {
        BasisCache cache(dataset);
        const PairBatch batch = sample_pair_batch(dataset, rng, n, config.w_neg, cache);
        const int channel = std::uniform_int_distribution<int>(0, 2)(rng);
        const auto intensities = ck.pattern.intensities();
        const auto rendered = render_batch(batch, intensities, channel, &rng, config.noise_sigma);
        const auto grads = batch_gradients(ck.params, ck.pattern, rendered, channel, config.lambda, joint);

        if (!std::isfinite(grads.loss.loss)) {
            const std::string what = "non-finite loss at step " + std::to_string(ck.step) + ": " +
                                     describe_batch(batch, channel, grads.loss);
            if (!config.checkpoint_dir.empty()) {
                std::filesystem::create_directories(config.checkpoint_dir);
                write_text_file(config.checkpoint_dir / "nonfinite_batch.txt", what + "\n");
            }
            throw Error(ErrorCategory::Internal, what);
        }

        const auto gblocks = grads.network.blocks();
        adam_step(blocks, gblocks, ck.adam);
        if (joint) {
            const std::vector<std::span<const double>> pg{grads.pattern.d_a, grads.pattern.d_b};
            adam_step(pblocks, pg, ck.pattern_adam);
            for (double i : ck.pattern.intensities())
                if (!(i >= 0.0 && i <= 1.0)) throw Error(ErrorCategory::Internal, "pattern left [0,1]");
        }
        ++ck.step;

        if (config.log_every > 0 && (ck.step % config.log_every == 0 || ck.step == config.iterations)) {
            TrainLogRecord rec;
            rec.step = ck.step;
            rec.loss = grads.loss.loss;
            rec.loss_pos = grads.loss.positive;
            rec.loss_neg = grads.loss.negative;
            rec.mean_pos = grads.loss.mean_positive();
            rec.mean_neg = grads.loss.mean_negative();
            summarize_pattern(ck.pattern, rec);
            rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.log.push_back(rec);
            if (sink) sink(rec);
        }
        if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() && ck.step % config.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "step_%08lld.diftnet", static_cast<long long>(ck.step));
            std::filesystem::create_directories(config.checkpoint_dir);
            save_checkpoint(config.checkpoint_dir / name, ck);
        }
    }
    if (!joint && (ck.pattern.a != fixed_before.a || ck.pattern.b != fixed_before.b))
        throw Error(ErrorCategory::Internal, "fixed pattern changed during training");
    result.checkpoint = std::move(ck);
    return result;
}

HeldoutMetrics evaluate_heldout(const NetworkParams &params, const LightingPattern &pattern, const Dataset &heldout,
                                const HeldoutOptions &options)
{
    if (options.batches < 1) throw InputError("held-out evaluation needs at least one batch");
    if (!(heldout.header.shape == params.shape)) throw InputError("held-out dataset shape differs from network");
    Rng rng(options.seed);
    const int n = std::min(options.batch, options.w_neg * options.w_neg);
    const auto intensities = pattern.intensities();
    double pos = 0.0, neg = 0.0;
    HeldoutMetrics m;
    for (int b = 0; b < options.batches; ++b) {
        BasisCache cache(heldout);
        const auto batch = sample_pair_batch(heldout, rng, n, options.w_neg, cache);
        for (int channel = 0; channel < 3; ++channel) {
            const auto rendered = render_batch(batch, intensities, channel, nullptr, 0.0);
            const auto cache_f = forward(params, rendered.inputs, rendered.view_specs);
            // lambda = 1 keeps the negative sum in the same units.
            const auto loss = pair_loss(cache_f.features, rendered.tags, 1.0);
            pos += loss.positive;
            neg += loss.negative;
            m.positive_pairs += loss.positive_pairs;
            m.negative_pairs += loss.negative_pairs;
        }
    }
    m.mean_positive = pos / static_cast<double>(m.positive_pairs);
    m.mean_negative = neg / static_cast<double>(m.negative_pairs);
    m.margin = m.mean_negative - m.mean_positive;
    return m;
}

} // namespace dift
