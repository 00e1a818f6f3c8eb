// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/net.hpp"

#include "dift/binary_io.hpp"

#include <cmath>

namespace dift {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

Eigen::MatrixXd leaky(const Eigen::MatrixXd &z)
{
    return z.unaryExpr([](double x) { return x > 0.0 ? x : kLeakySlope * x; });
}

Eigen::MatrixXd leaky_grad(const Eigen::MatrixXd &z)
{
    return z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : kLeakySlope; });
}

} // namespace

std::vector<std::pair<int, int>> NetworkParams::width_schedule() const
{
    std::vector<std::pair<int, int>> w;
    w.emplace_back(input_dim(), hidden);
    for (int l = 1; l < kInjectAfter; ++l) w.emplace_back(hidden, hidden);
    w.emplace_back(hidden + 2, hidden);
    for (int l = kInjectAfter + 1; l < kLayerCount - 1; ++l) w.emplace_back(hidden, hidden);
    w.emplace_back(hidden, kFeatureDim);
    return w;
}

NetworkParams NetworkParams::zeros(TensorShape shape, int hidden)
{
    shape.validate();
    if (hidden < 1) throw InputError("hidden width must be positive");
    NetworkParams p;
    p.shape = shape;
    p.hidden = hidden;
    for (const auto &[in, out] : p.width_schedule())
        p.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    return p;
}

std::vector<std::span<double>> NetworkParams::blocks()
{
    std::vector<std::span<double>> out;
    for (auto &l : layers) {
        out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
        out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
}

std::vector<std::span<const double>> NetworkParams::blocks() const
{
    std::vector<std::span<const double>> out;
    for (const auto &l : layers) {
        out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
        out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
}

std::size_t NetworkParams::parameter_count() const
{
    std::size_t n = 0;
    for (const auto &b : blocks()) n += b.size();
    return n;
}

NetworkParams init_params(TensorShape shape, Rng &rng, int hidden)
{
    auto p = NetworkParams::zeros(shape, hidden);
    for (auto &l : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.cols() + l.weight.rows()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        // Column-major fill order, part of the reproducibility contract.
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = dist(rng);
    }
    return p;
}

ForwardCache forward(const NetworkParams &params, const Eigen::MatrixXd &inputs, const Eigen::MatrixXd &view_specs)
{
    if (params.layers.size() != kLayerCount) throw InputError("network must have 11 layers");
    if (inputs.rows() != params.input_dim()) throw InputError("input size does not match network");
    if (view_specs.rows() != 2 || view_specs.cols() != inputs.cols()) throw InputError("view spec shape mismatch");

    const Eigen::Index batch = inputs.cols();
    ForwardCache cache;
    cache.inputs.reserve(kLayerCount);
    cache.pre.reserve(kLayerCount);
    Eigen::MatrixXd act = inputs;
    for (int l = 0; l < kLayerCount; ++l) {
        if (l == kInjectAfter) {
            Eigen::MatrixXd joined(act.rows() + 2, batch);
            joined << act, view_specs;
            act = std::move(joined);
        }
        const auto &layer = params.layers[l];
        Eigen::MatrixXd z = layer.weight * act;
        z.colwise() += layer.bias;
        cache.inputs.push_back(std::move(act));
        act = l + 1 < kLayerCount ? leaky(z) : z;
        cache.pre.push_back(std::move(z));
    }
    cache.norms = act.colwise().norm().transpose();
    cache.features.resize(kFeatureDim, batch);
    cache.guarded.assign(static_cast<std::size_t>(batch), false);
    for (Eigen::Index c = 0; c < batch; ++c) {
        if (cache.norms[c] < kNormGuard) {
            cache.features.col(c) = Eigen::VectorXd::Unit(kFeatureDim, 0);
            cache.guarded[c] = true;
        } else {
            cache.features.col(c) = act.col(c) / cache.norms[c];
        }
    }
    return cache;
}

Eigen::VectorXd tensor_column(const InputTensor &tensor, int channel)
{
    const auto &v = tensor.values.at(channel);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd forward_one(const NetworkParams &params, const InputTensor &tensor, int channel, bool *guarded)
{
    if (!(tensor.shape == params.shape)) throw InputError("tensor shape does not match network");
    Eigen::MatrixXd spec(2, 1);
    spec << tensor.view_spec.x(), tensor.view_spec.y();
    const auto cache = forward(params, tensor_column(tensor, channel), spec);
    if (guarded) *guarded = cache.guarded[0];
    return cache.features.col(0);
}

BackwardResult backward(const NetworkParams &params, const ForwardCache &cache, const Eigen::MatrixXd &d_features)
{
    const Eigen::Index batch = cache.features.cols();
    if (d_features.rows() != kFeatureDim || d_features.cols() != batch) throw InputError("feature gradient shape");

    BackwardResult out;
    out.grads = NetworkParams::zeros(params.shape, params.hidden);

    // Through the normalization: dy = (I - F F^T) dF / |y|.
    Eigen::MatrixXd delta(kFeatureDim, batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
        if (cache.guarded[c]) {
            delta.col(c).setZero();
            continue;
        }
        const auto f = cache.features.col(c);
        const auto g = d_features.col(c);
        delta.col(c) = (g - f * f.dot(g)) / cache.norms[c];
    }

    for (int l = kLayerCount - 1; l >= 0; --l) {
        if (l + 1 < kLayerCount) delta = delta.cwiseProduct(leaky_grad(cache.pre[l]));
        auto &g = out.grads.layers[l];
        g.weight.noalias() = delta * cache.inputs[l].transpose();
        g.bias = delta.rowwise().sum();
        Eigen::MatrixXd d_in = params.layers[l].weight.transpose() * delta;
        if (l == kInjectAfter) d_in.conservativeResize(params.hidden, Eigen::NoChange); // drop view-spec rows
        delta = std::move(d_in);
    }
    out.d_inputs = std::move(delta);
    return out;
}

PairLoss pair_loss(const Eigen::MatrixXd &features, std::span<const FeatureTag> tags, double lambda)
{
    if (features.rows() != kFeatureDim || static_cast<std::size_t>(features.cols()) != tags.size())
        throw InputError("feature/tag count mismatch");
    PairLoss out;
    out.d_features = Eigen::MatrixXd::Zero(kFeatureDim, features.cols());
    const auto n = static_cast<Eigen::Index>(tags.size());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto &ti = tags[i], &tj = tags[j];
            double weight;
            if (ti.group == tj.group && ti.view_tag != tj.view_tag) {
                weight = 1.0;
            } else if (ti.group != tj.group && ti.view_tag == 0 && tj.view_tag == 0) {
                weight = -lambda;
            } else {
                continue;
            }
            const Eigen::VectorXd diff = features.col(i) - features.col(j);
            const double dist = diff.norm();
            if (weight > 0) {
                out.positive += dist;
                ++out.positive_pairs;
            } else {
                out.negative += dist;
                ++out.negative_pairs;
            }
            const Eigen::VectorXd g = weight * diff / std::max(dist, kNormGuard);
            out.d_features.col(i) += g;
            out.d_features.col(j) -= g;
        }
    out.loss = out.positive - lambda * out.negative;
    return out;
}

AdamState AdamState::for_blocks(std::span<const std::span<double>> blocks, AdamConfig config)
{
    AdamState s;
    s.config = config;
    for (const auto &b : blocks) {
        s.m.emplace_back(b.size(), 0.0);
        s.v.emplace_back(b.size(), 0.0);
    }
    return s;
}

bool adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState &state)
{
    if (params.size() != grads.size() || params.size() != state.m.size()) throw InputError("Adam block count");
    for (std::size_t b = 0; b < params.size(); ++b)
        if (params[b].size() != grads[b].size() || params[b].size() != state.m[b].size())
            throw InputError("Adam block size mismatch");
    for (const auto &g : grads)
        for (double x : g)
            if (!std::isfinite(x)) {
                ++state.skipped;
                return false;
            }

    const auto &c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto &m = state.m[b];
        auto &v = state.v[b];
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            const double g = grads[b][i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            params[b][i] -= c.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.epsilon);
        }
    }
    return true;
}

std::vector<std::vector<double>> first_layer_filters(const NetworkParams &params)
{
    const auto &w = params.layers.at(0).weight;
    std::vector<std::vector<double>> filters(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        filters[r].resize(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index c = 0; c < w.cols(); ++c) filters[r][c] = w(r, c);
    }
    return filters;
}

void set_first_layer_filters(NetworkParams &params, const std::vector<std::vector<double>> &filters)
{
    auto &w = params.layers.at(0).weight;
    if (filters.size() != static_cast<std::size_t>(w.rows())) throw InputError("filter count mismatch");
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        if (filters[r].size() != static_cast<std::size_t>(w.cols())) throw InputError("filter size mismatch");
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = filters[r][c];
    }
}

//---------------------------------------------------------------------------

namespace {

void put_adam(ByteWriter &w, const AdamState &s)
{
    w.put<double>(s.config.learning_rate);
    w.put<double>(s.config.beta1);
    w.put<double>(s.config.beta2);
    w.put<double>(s.config.epsilon);
    w.put<std::int64_t>(s.step);
    w.put<std::uint64_t>(s.skipped);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.m.size()));
    for (std::size_t b = 0; b < s.m.size(); ++b) {
        w.put<std::uint64_t>(s.m[b].size());
        w.put_array<double>(s.m[b]);
        w.put_array<double>(s.v[b]);
    }
}

AdamState get_adam(ByteReader &r)
{
    AdamState s;
    s.config.learning_rate = r.get<double>();
    s.config.beta1 = r.get<double>();
    s.config.beta2 = r.get<double>();
    s.config.epsilon = r.get<double>();
    s.step = r.get<std::int64_t>();
    s.skipped = r.get<std::uint64_t>();
    const auto blocks = r.get<std::uint32_t>();
    for (std::uint32_t b = 0; b < blocks; ++b) {
        const auto n = r.get<std::uint64_t>();
        if (n > r.remaining() / 16) throw DataError("checkpoint: Adam block exceeds file size");
        s.m.emplace_back(n);
        s.v.emplace_back(n);
        r.get_array<double>(s.m.back());
        r.get_array<double>(s.v.back());
    }
    return s;
}

} // namespace

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ck)
{
    ByteWriter w;
    w.put_magic("DIFTNETW");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.shape.spatial));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.shape.angular));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.hidden));
    const auto schedule = ck.params.width_schedule();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(schedule.size()));
    for (const auto &[in, out] : schedule) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(in));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(out));
    }
    for (const auto &b : ck.params.blocks()) w.put_array<double>(b);
    put_adam(w, ck.adam);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.pattern.led_count()));
    w.put_array<double>(ck.pattern.a);
    w.put_array<double>(ck.pattern.b);
    put_adam(w, ck.pattern_adam);
    w.put<std::int64_t>(ck.step);
    w.put<double>(ck.lambda);
    w.put<std::uint64_t>(ck.seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.w_neg));
    w.put<double>(ck.angular_interval_deg);
    w.put_string(ck.lighting_mode);
    w.put<std::uint64_t>(fnv1a64(w.bytes()));
    write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path &path)
{
    const auto bytes = read_file(path);
    const std::string ctx = path.string();
    if (bytes.size() < 16) throw DataError(ctx + ": truncated checkpoint");
    const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
    ByteReader tail({bytes.data() + body.size(), 8}, ctx);
    if (tail.get<std::uint64_t>() != fnv1a64(body)) throw DataError(ctx + ": checkpoint checksum mismatch");

    ByteReader r(body, ctx);
    r.expect_magic("DIFTNETW");
    if (r.get<std::uint32_t>() != kCheckpointVersion) throw DataError(ctx + ": unsupported checkpoint version");
    Checkpoint ck;
    TensorShape shape;
    shape.spatial = static_cast<int>(r.get<std::uint32_t>());
    shape.angular = static_cast<int>(r.get<std::uint32_t>());
    const int hidden = static_cast<int>(r.get<std::uint32_t>());
    try {
        ck.params = NetworkParams::zeros(shape, hidden);
    } catch (const InputError &e) {
        throw DataError(ctx + ": " + e.what());
    }
    const auto layers = r.get<std::uint32_t>();
    const auto expected = ck.params.width_schedule();
    if (layers != expected.size()) throw DataError(ctx + ": unexpected layer count");
    for (const auto &[in, out] : expected)
        if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(in) ||
            r.get<std::uint32_t>() != static_cast<std::uint32_t>(out))
            throw DataError(ctx + ": width schedule mismatch");
    for (auto &b : ck.params.blocks()) r.get_array<double>(b);
    ck.adam = get_adam(r);
    const auto leds = r.get<std::uint32_t>();
    if (leds > r.remaining() / 16) throw DataError(ctx + ": pattern exceeds file size");
    ck.pattern.a.resize(leds);
    ck.pattern.b.resize(leds);
    r.get_array<double>(ck.pattern.a);
    r.get_array<double>(ck.pattern.b);
    ck.pattern_adam = get_adam(r);
    ck.step = r.get<std::int64_t>();
    ck.lambda = r.get<double>();
    ck.seed = r.get<std::uint64_t>();
    ck.w_neg = static_cast<int>(r.get<std::uint32_t>());
    ck.angular_interval_deg = r.get<double>();
    ck.lighting_mode = r.get_string();
    if (r.remaining() != 0) throw DataError(ctx + ": trailing bytes in checkpoint");
    return ck;
}

} // namespace dift
