// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.
//
//   dift_acceptance --work <dir> --cli <path to dift> [--only 1,2,...] [--reuse]

#include "dift/binary_io.hpp"
#include "dift/pipeline.hpp"

#include "oracles.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dift;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, auto... args)
{
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli {
public:
    Cli(fs::path exe, fs::path logs) : exe_(std::move(exe)), logs_(std::move(logs)) { fs::create_directories(logs_); }

    /// Runs one subcommand and returns its summary object; throws on a nonzero exit.
    json run(const std::string &args)
    {
        const auto log = logs_ / fmt("cli_%03d.log", ++count_);
        const std::string cmd = "\"" + exe_.string() + "\" " + args + " > \"" + log.string() + "\" 2>&1";
        std::cerr << "[acceptance] dift " << args << "\n";
        const int status = std::system(cmd.c_str());
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        const auto out = slurp(log);
        if (code != 0) throw std::runtime_error("dift " + args + " exited " + std::to_string(code) + ":\n" + out);
        const auto at = out.rfind("DIFT-SUMMARY ");
        if (at == std::string::npos) throw std::runtime_error("no summary line from dift " + args);
        return json::parse(out.substr(at + 13, out.find('\n', at) - at - 13));
    }

private:
    fs::path exe_;
    fs::path logs_;
    int count_ = 0;
};

bool same_bytes(const fs::path &a, const fs::path &b)
{
    return fs::exists(a) && fs::exists(b) && read_file(a) == read_file(b);
}

// Training log lines with the wall-clock field removed.
std::vector<std::string> log_without_wall_time(const fs::path &p)
{
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) {
        auto j = json::parse(line);
        j.erase("wall_s");
        out.push_back(j.dump());
    }
    return out;
}

// -- 1 ------------------------------------------------------------------------

// Max relative error of analytic against central differences, with
// |fd| below `floor` compared on the absolute scale of `floor`.
struct FdTally {
    double worst = 0.0;
    std::size_t checked = 0;
    std::size_t kinked = 0; ///< no step kept every activation on one side
    void add(double analytic, double fd, double floor)
    {
        worst = std::max(worst, std::abs(analytic - fd) / std::max(std::abs(fd), floor));
        ++checked;
    }
};

struct Probe {
    double loss;
    std::vector<bool> signs; ///< pre-activation > 0, every layer and column
};

Probe probe(const NetworkParams &params, const Eigen::MatrixXd &inputs, const Eigen::MatrixXd &view_specs,
            std::span<const FeatureTag> tags, double lambda)
{
    const auto fc = forward(params, inputs, view_specs);
    Probe p{pair_loss(fc.features, tags, lambda).loss, {}};
    for (std::size_t l = 0; l + 1 < fc.pre.size(); ++l)
        for (Eigen::Index i = 0; i < fc.pre[l].size(); ++i) p.signs.push_back(fc.pre[l](i) > 0.0);
    return p;
}

// Central difference of `eval` in one coordinate. The step shrinks until
// neither side crosses an activation kink; nullopt if none qualifies.
std::optional<double> central_difference(const std::function<Probe(double)> &eval)
{
    const auto base = eval(0.0).signs;
    for (double h : {1e-6, 1e-7, 1e-8}) {
        const auto plus = eval(h), minus = eval(-h);
        if (plus.signs == base && minus.signs == base) return (plus.loss - minus.loss) / (2 * h);
    }
    return std::nullopt;
}

Outcome criterion_gradients()
{
    const auto start = Clock::now();
    constexpr double kFloor = 1e-4;
    FdTally pattern_t, param_t, input_t;
    auto check = [&](FdTally &t, double analytic, const std::function<Probe(double)> &eval) {
        if (const auto fd = central_difference(eval))
            t.add(analytic, *fd, kFloor);
        else
            ++t.kinked;
    };
    Rng rng(0xacce97);
    const int trials = 6;
    for (int trial = 0; trial < trials; ++trial) {
        auto toy = testing::toy_batch(rng, 2, 3, {3, 3});
        Rng init(500 + trial);
        // Every parameter of a narrow network, a sample of the default one.
        const bool wide = trial % 2 == 1;
        auto params = init_params({3, 3}, init, wide ? kDefaultHidden : 16);
        auto pattern = testing::random_pattern(3, rng);
        const int channel = trial % 3;
        const double lambda = trial < 3 ? 0.01 : 0.5;
        const std::uint64_t noise_seed = 900 + trial;

        // The full chain from (a, b) with the noise stream replayed.
        auto full = [&] {
            Rng noise(noise_seed);
            const auto in = pattern.intensities();
            const auto r = render_batch(toy.batch, in, channel, &noise, kMeasurementNoiseSigma);
            return probe(params, r.inputs, r.view_specs, r.tags, lambda);
        };
        Rng noise(noise_seed);
        const auto in = pattern.intensities();
        const auto rendered = render_batch(toy.batch, in, channel, &noise, kMeasurementNoiseSigma);
        const auto g = batch_gradients(params, pattern, rendered, channel, lambda, true);

        for (std::size_t l = 0; l < 3; ++l)
            for (int which = 0; which < 2; ++which) {
                double &x = (which ? pattern.b : pattern.a)[l];
                const double orig = x;
                check(pattern_t, which ? g.pattern.d_b[l] : g.pattern.d_a[l], [&](double h) {
                    x = orig + h;
                    auto p = full();
                    x = orig;
                    return p;
                });
            }

        auto blocks = params.blocks();
        const auto gb = g.network.blocks();
        std::uniform_int_distribution<std::size_t> pick(0, 1u << 30);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::size_t n = blocks[b].size();
            const std::size_t samples = wide ? std::min<std::size_t>(n, 40) : n;
            for (std::size_t s = 0; s < samples; ++s) {
                const std::size_t i = wide ? pick(rng) % n : s;
                const double orig = blocks[b][i];
                check(param_t, gb[b][i], [&](double h) {
                    blocks[b][i] = orig + h;
                    auto p = full();
                    blocks[b][i] = orig;
                    return p;
                });
            }
        }

        auto inputs = rendered.inputs;
        for (Eigen::Index r = 0; r < inputs.rows(); ++r)
            for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
                const double orig = inputs(r, c);
                check(input_t, g.d_inputs(r, c), [&](double h) {
                    inputs(r, c) = orig + h;
                    auto p = probe(params, inputs, rendered.view_specs, rendered.tags, lambda);
                    inputs(r, c) = orig;
                    return p;
                });
            }
    }
    const double secs = since(start);
    const double worst = std::max({pattern_t.worst, param_t.worst, input_t.worst});
    const std::size_t kinked = pattern_t.kinked + param_t.kinked + input_t.kinked;
    Outcome o;
    o.pass = worst < 1e-4 && secs < 60.0;
    o.detail = fmt("%d toy batches; max rel err (a,b) %.2e [%zu], params %.2e [%zu], inputs %.2e [%zu]; "
                   "%zu entries skipped at activation kinks; %.1f s",
                   trials, pattern_t.worst, pattern_t.checked, param_t.worst, param_t.checked, input_t.worst,
                   input_t.checked, kinked, secs);
    return o;
}

// -- 2 ------------------------------------------------------------------------

Outcome criterion_rendering()
{
    Rng rng(0x0a7);
    const auto rig = LightRig::box(RigConfig{});
    const auto cam = Camera::turntable(64, 64);
    const auto vis = testing::all_visible(rig.led_count());
    double worst = 0.0, worst_lin = 0.0;
    std::size_t nonzero = 0, zero_mismatch = 0;
    for (int k = 0; k < 1000; ++k) {
        const auto rec = testing::random_record(rng);
        const auto basis = olat_basis(rec, vis, cam, rig);
        for (std::size_t l = 0; l < rig.led_count(); ++l) {
            const Vec3 want = testing::oracle_summand(rec, rig.leds[l], cam.position, 0.0);
            for (int c = 0; c < 3; ++c) {
                if (want[c] == 0.0) {
                    zero_mismatch += basis.at(c, l) != 0.0;
                    continue;
                }
                ++nonzero;
                worst = std::max(worst, testing::rel_err(basis.at(c, l), want[c]));
            }
        }
        // Superposition over two random patterns.
        std::vector<double> i1(rig.led_count()), i2(rig.led_count()), mix(rig.led_count());
        const double al = uniform01(rng), be = uniform01(rng);
        for (std::size_t l = 0; l < rig.led_count(); ++l) {
            i1[l] = uniform01(rng);
            i2[l] = uniform01(rng);
            mix[l] = al * i1[l] + be * i2[l];
        }
        const Vec3 lhs = render_pixel(basis, std::span<const double>(mix));
        const Vec3 rhs = al * render_pixel(basis, std::span<const double>(i1)) +
                         be * render_pixel(basis, std::span<const double>(i2));
        for (int c = 0; c < 3; ++c)
            if (lhs[c] != 0.0 || rhs[c] != 0.0) worst_lin = std::max(worst_lin, testing::rel_err(lhs[c], rhs[c]));
    }
    Outcome o;
    o.pass = worst < 1e-10 && worst_lin < 1e-12 && zero_mismatch == 0 && nonzero > 100000;
    o.detail = fmt("1000 configurations x 216 LEDs; max rel err %.2e over %zu nonzero summands, %zu zero mismatches; "
                   "linearity %.2e",
                   worst, nonzero, zero_mismatch, worst_lin);
    return o;
}

// -- 3 ------------------------------------------------------------------------

Outcome criterion_intensity()
{
    Rng rng(0x1e6);
    std::uniform_real_distribution<double> expo(-300.0, 300.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t violations = 0;
    for (int k = 0; k < 1000000; ++k) {
        double a, b;
        if (k % 2 == 0) {
            a = normal(rng);
            b = normal(rng);
        } else {
            // Magnitudes spread across the double range.
            a = std::copysign(std::pow(10.0, expo(rng)), normal(rng));
            b = std::copysign(std::pow(10.0, expo(rng)), normal(rng));
        }
        if (k % 1000 == 1) a = 0.0;
        if (k % 1000 == 3) b = 0.0;
        const double i = pattern_intensity_and_grad(a, b).intensity;
        if (!(i >= 0.0 && i <= 1.0)) ++violations;
    }
    const double half = pattern_intensity_and_grad(0.0, 1.0).intensity;
    const double diag = pattern_intensity_and_grad(1.0, 1.0).intensity;
    const double want = 0.5 * (1.0 / std::sqrt(2.0) + 1.0);
    const double ulp = std::nextafter(want, 2.0) - want;
    Outcome o;
    o.pass = violations == 0 && half == 0.5 && std::abs(diag - want) <= 2 * ulp;
    o.detail = fmt("10^6 samples, %zu violations; I(0,1)=%.17g; I(1,1)-expected=%.1e (ulp %.1e)", violations, half,
                   diag - want, ulp);
    return o;
}

// -- 4 ------------------------------------------------------------------------

Outcome criterion_unit_norm()
{
    Rng rng(0x10e5);
    double worst = 0.0;
    std::size_t total = 0;
    std::normal_distribution<double> normal(0.0, 1.0);
    const TensorShape shapes[] = {{5, 5}, {1, 5}, {5, 1}, {3, 3}};
    for (int block = 0; block < 20; ++block) {
        const auto shape = shapes[block % 4];
        Rng init(block);
        const auto params = init_params(shape, init);
        const int cols = 5000;
        Eigen::MatrixXd inputs(params.input_dim(), cols), specs(2, cols);
        // Input scales from tiny to large.
        const double scale = std::pow(10.0, block % 5 - 3);
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (Eigen::Index r = 0; r < inputs.rows(); ++r) inputs(r, c) = scale * std::abs(normal(rng));
            const double th = 2 * kPi * uniform01(rng);
            specs(0, c) = std::cos(th);
            specs(1, c) = std::sin(th);
        }
        const auto out = forward(params, inputs, specs).features;
        for (Eigen::Index c = 0; c < cols; ++c) worst = std::max(worst, std::abs(out.col(c).norm() - 1.0));
        total += cols;
    }
    Outcome o;
    o.pass = total >= 100000 && worst <= 1e-6;
    o.detail = fmt("%zu inputs; max | ||F|| - 1 | = %.2e", total, worst);
    return o;
}

// -- 8 (in-process parts) -------------------------------------------------------

Outcome pca_against_oracle(const fs::path &features_path)
{
    const auto maps = load_features(features_path);
    const auto pca = fit_pca(maps);
    std::size_t n = 0;
    for (const auto &m : maps) n += m.valid_count();
    const int dims = maps.front().dims;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), dims);
    Eigen::Index r = 0;
    for (const auto &m : maps)
        for (int row = 0; row < m.height; ++row)
            for (int col = 0; col < m.width; ++col)
                if (m.is_valid(col, row)) {
                    for (int d = 0; d < dims; ++d) x(r, d) = m.at(col, row)[d];
                    ++r;
                }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - mean;
    const Eigen::MatrixXd cov = c.transpose() * c / (static_cast<double>(n) - 1.0);
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    testing::jacobi_eigen(cov, values, vectors);
    double eig_err = 0.0, vec_err = 0.0;
    for (int i = 0; i < 3; ++i) {
        eig_err = std::max(eig_err, testing::rel_err(pca.eigenvalues[i], values[i]));
        Eigen::VectorXd want = vectors.col(i);
        Eigen::Index arg;
        want.cwiseAbs().maxCoeff(&arg);
        if (want[arg] < 0) want = -want;
        vec_err = std::max(vec_err, (pca.basis.col(i) - want).cwiseAbs().maxCoeff());
    }
    for (int i = 3; i < dims; ++i)
        eig_err = std::max(eig_err, std::abs(pca.eigenvalues[i] - values[i]) / values[0]);

    // Every quantized code against its continuous coordinate.
    double worst_q = 0.0;
    for (const auto &m : maps) {
        const auto img = project_quantize(m, pca);
        for (int row = 0; row < m.height; ++row)
            for (int col = 0; col < m.width; ++col) {
                if (!m.is_valid(col, row)) continue;
                Eigen::VectorXd f(dims);
                for (int d = 0; d < dims; ++d) f[d] = m.at(col, row)[d];
                const Eigen::Vector3d p = pca.project(f);
                for (int k = 0; k < 3; ++k) {
                    const double lo = pca.min[k], hi = pca.max[k];
                    const double v = std::clamp(p[k], lo, hi);
                    const double level = (hi - lo) / 255.0;
                    const double back = lo + img.at(col, row)[k] * level;
                    worst_q = std::max(worst_q, std::abs(back - v) / level);
                }
            }
    }
    Outcome o;
    o.pass = eig_err < 1e-8 && vec_err < 1e-8 && worst_q <= 0.5 + 1e-9;
    o.detail = fmt("PCA over %zu samples: eigen err %.2e, vector err %.2e; quantization %.4f levels", n, eig_err,
                   vec_err, worst_q);
    return o;
}

// -- Run ----------------------------------------------------------------------

struct Runner {
    fs::path work;
    Cli cli;
    bool reuse = false;
    std::set<int> only;
    std::vector<std::pair<int, Outcome>> results;

    bool wanted(int id) const { return only.empty() || only.count(id); }

    void report(int id, const std::string &title, const std::function<Outcome()> &fn)
    {
        if (!wanted(id)) return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception &e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << title << "): " << o.detail
                  << std::endl;
        results.emplace_back(id, o);
    }

    fs::path tiny_config_file()
    {
        const auto p = work / "tiny.json";
        if (!fs::exists(p)) {
            fs::create_directories(work);
            std::ofstream(p) << testing::tiny_config().to_json().dump(2) << "\n";
        }
        return p;
    }

    std::string tiny() { return "--config \"" + tiny_config_file().string() + "\" "; }

    // Full-scale gen and train, shared by criteria 5 to 7.
    const fs::path &full_gen()
    {
        static const fs::path dir = [this] {
            const auto d = work / "full" / "gen";
            if (!(reuse && fs::exists(d / "heldout.corr"))) {
                fs::remove_all(d);
                cli.run("gen --out \"" + d.string() + "\"");
            }
            return d;
        }();
        return dir;
    }

    const fs::path &full_train()
    {
        static const fs::path dir = [this] {
            const auto d = work / "full" / "train";
            if (!(reuse && fs::exists(d / "checkpoint.diftnet"))) {
                fs::remove_all(d);
                cli.run("train --dataset \"" + (full_gen() / "train.dift").string() + "\" --out \"" + d.string() + "\"");
            }
            return d;
        }();
        return dir;
    }

    const json &full_eval()
    {
        static const json report = [this] {
            const auto d = work / "full" / "eval";
            if (!(reuse && fs::exists(d / "eval.json")))
                cli.run("eval --checkpoint \"" + (full_train() / "checkpoint.diftnet").string() + "\" --heldout \"" +
                        (full_gen() / "heldout.dift").string() + "\" --correspondences \"" +
                        (full_gen() / "heldout.corr").string() + "\" --out \"" + d.string() + "\"");
            std::cout << "held-out matching (percent):\n" << slurp(d / "matching.tsv");
            return json::parse(slurp(d / "eval.json"));
        }();
        return report;
    }

    Outcome training_outcome()
    {
        const PipelineConfig config;
        auto train = load_dataset(full_gen() / "train.dift");
        auto held = load_dataset(full_gen() / "heldout.dift");
        train.index_pixels();
        held.index_pixels();
        const auto init = initial_checkpoint(train, config.train_config(train.rig));
        const auto before = evaluate_heldout(init.params, init.pattern, held, config.heldout_options());
        const auto &after = full_eval();
        const double pos = after["mean_pos"], neg = after["mean_neg"], margin = after["margin"];
        const double drop = 1.0 - pos / before.mean_positive;
        Outcome o;
        o.pass = drop >= 0.5 && margin > 0.0;
        o.detail = fmt("init mean_pos %.4e mean_neg %.4e; final mean_pos %.4e mean_neg %.4e; pos drop %.1f%%, "
                       "margin %.3e",
                       before.mean_positive, before.mean_negative, pos, neg, 100.0 * drop, margin);
        return o;
    }

    Outcome matching_utility()
    {
        for (const auto &row : full_eval()["matching"])
            if (row["gap"] == 10 && row["tol"] == 2.0) {
                const double d = row["dift"], b = row["baseline_ssd"], c = row["chance"];
                Outcome o;
                o.pass = d >= b + 10.0 && d >= c + 30.0;
                o.detail = fmt("gap 10, 2 px: DiFT %.2f, window SSD %.2f, chance %.2f", d, b, c);
                return o;
            }
        return {false, "no gap 10 / 2 px row in eval report"};
    }

    Outcome ablation_trend()
    {
        const PipelineConfig config;
        auto train = load_dataset(full_gen() / "train.dift");
        auto held = load_dataset(full_gen() / "heldout.dift");
        train.index_pixels();
        held.index_pixels();
        AblationSettings settings;
        settings.base = config.train_config(train.rig);
        settings.base.checkpoint_every = 0;
        settings.base.log_every = 0;
        settings.base_interval_deg = config.interval_deg;
        settings.heldout = config.heldout_options();
        settings.gap = 10;
        settings.correspondence_points = config.correspondences;
        settings.protocol = config.matching_protocol();
        AblationAxes axes;
        axes.shapes = {{1, 5}, {5, 1}};
        const auto report = run_ablations(
            settings, axes, [&](double) { return DatasetPair{&train, &held}; },
            [](const AblationRow &r) {
                std::cerr << "[acceptance] ablation " << shape_name(r.config.shape) << " done in " << r.wall_seconds
                          << " s\n";
            });
        fs::create_directories(work / "full" / "ablate");
        std::ofstream(work / "full" / "ablate" / "ablation.tsv") << report.table();
        std::cout << "tensor-shape ablation (" << settings.base.iterations << " iterations each):\n" << report.table();
        const auto &base = full_eval();
        std::cout << fmt("base 5x5x5 (criterion 5 run): mean_pos %.6f mean_neg %.6f margin %.6f\n",
                         base["mean_pos"].get<double>(), base["mean_neg"].get<double>(),
                         base["margin"].get<double>());
        const double m115 = report.rows[0].metrics.margin, m551 = report.rows[1].metrics.margin;
        Outcome o;
        o.pass = m115 >= m551;
        o.detail = fmt("margin 1x1x5 %.4e vs 5x5x1 %.4e", m115, m551);
        return o;
    }

    Outcome pca_and_extract()
    {
        const auto d = work / "tiny8";
        fs::remove_all(d);
        cli.run(tiny() + "gen --out \"" + (d / "gen").string() + "\"");
        cli.run(tiny() + "train --dataset \"" + (d / "gen" / "train.dift").string() + "\" --out \"" +
                (d / "train").string() + "\"");
        for (const char *run : {"x1", "x2"})
            cli.run(tiny() + "extract --checkpoint \"" + (d / "train" / "checkpoint.diftnet").string() +
                    "\" --capture \"" + (d / "gen" / "heldout.dift").string() + "\" --out \"" + (d / run).string() +
                    "\"");
        std::size_t images = 0, identical = 0;
        for (const auto &e : fs::directory_iterator(d / "x1" / "images")) {
            ++images;
            identical += same_bytes(e.path(), d / "x2" / "images" / e.path().filename());
        }
        const int views = testing::tiny_config().views;
        auto o = pca_against_oracle(d / "x1" / "features.diftfeat");
        const bool extract_ok = images == static_cast<std::size_t>(views) && identical == images &&
                                same_bytes(d / "x1" / "features.diftfeat", d / "x2" / "features.diftfeat");
        o.pass = o.pass && extract_ok;
        o.detail += fmt("; extract wrote %zu images for %d views, %zu byte-identical across runs", images, views,
                        identical);
        return o;
    }

    Outcome determinism()
    {
        const auto d = work / "tiny9";
        fs::remove_all(d);
        for (const char *run : {"a", "b"}) {
            cli.run(tiny() + "gen --out \"" + (d / run / "gen").string() + "\"");
            cli.run(tiny() + "train --iters 200 --dataset \"" + (d / run / "gen" / "train.dift").string() +
                    "\" --out \"" + (d / run / "train").string() + "\"");
        }
        std::vector<std::string> differ;
        for (const char *f : {"gen/train.dift", "gen/heldout.dift", "gen/heldout.corr", "train/checkpoint.diftnet",
                              "train/pattern.txt"})
            if (!same_bytes(d / "a" / f, d / "b" / f)) differ.push_back(f);
        if (log_without_wall_time(d / "a" / "train" / "train_log.jsonl") !=
            log_without_wall_time(d / "b" / "train" / "train_log.jsonl"))
            differ.push_back("train/train_log.jsonl (excluding wall_s)");
        // In-process generation of the same config matches the CLI bytes.
        const auto c = testing::tiny_config();
        const auto again = generate_dataset(c.train_objects, c.geometry(), c.rig, c.shape);
        save_dataset(d / "inproc.dift", again);
        if (!same_bytes(d / "a" / "gen" / "train.dift", d / "inproc.dift")) differ.push_back("in-process train.dift");
        Outcome o;
        o.pass = differ.empty();
        std::string list;
        for (const auto &f : differ) list += " " + f;
        o.detail = differ.empty() ? "datasets, correspondences, checkpoint and pattern bit-identical across runs; logs equal "
                                    "apart from wall time"
                                  : "differs:" + list;
        return o;
    }
};

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"dift acceptance"};
    std::string work, exe, only;
    bool reuse = false;
    app.add_option("--work", work, "Scratch directory")->required();
    app.add_option("--cli", exe, "dift executable")->required()->check(CLI::ExistingFile);
    app.add_option("--only", only, "Comma-separated criteria to run");
    app.add_flag("--reuse", reuse, "Reuse full-scale artifacts already in --work");
    CLI11_PARSE(app, argc, argv);

    Runner run{fs::path(work), Cli(exe, fs::path(work) / "logs")};
    run.reuse = reuse;
    std::stringstream ss(only);
    for (std::string part; std::getline(ss, part, ',');) run.only.insert(std::stoi(part));

    const auto start = Clock::now();
    run.report(1, "gradient exactness", criterion_gradients);
    run.report(2, "rendering oracle", criterion_rendering);
    run.report(3, "intensity bounds", criterion_intensity);
    run.report(4, "unit features", criterion_unit_norm);
    run.report(5, "scaled training outcome", [&] { return run.training_outcome(); });
    run.report(6, "matching utility", [&] { return run.matching_utility(); });
    run.report(7, "tensor-shape ablation trend", [&] { return run.ablation_trend(); });
    run.report(8, "PCA, quantization, extract", [&] { return run.pca_and_extract(); });
    run.report(9, "determinism", [&] { return run.determinism(); });

    int failed = 0;
    for (const auto &[id, o] : run.results) failed += !o.pass;
    std::cout << fmt("%zu criteria run, %d failed, %.0f s\n", run.results.size(), failed, since(start));
    return failed == 0 ? 0 : 1;
}
