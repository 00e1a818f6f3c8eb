// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/pipeline.hpp"

#include "dift/binary_io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace dift {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json objects_to_json(const std::vector<ObjectSpec> &objects)
{
    json a = json::array();
    for (const auto &o : objects) a.push_back({{"seed", o.seed}, {"family", std::string(family_name(o.family))}});
    return a;
}

std::vector<ObjectSpec> objects_from_json(const json &a)
{
    std::vector<ObjectSpec> out;
    for (const auto &o : a) out.push_back({o.at("seed").get<std::uint64_t>(), parse_family(o.at("family").get<std::string>())});
    return out;
}

template <typename T> void read_opt(const json &j, const char *key, T &value)
{
    if (j.contains(key)) value = j.at(key).get<T>();
}

std::string file_digest(const std::filesystem::path &path)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(read_file(path))));
    return buf;
}

std::string frame_name(int view)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%04d.png", view);
    return buf;
}

Dataset load_indexed(const std::filesystem::path &path)
{
    auto ds = load_dataset(path);
    ds.index_pixels();
    return ds;
}

} // namespace

PipelineConfig PipelineConfig::from_json(const json &j)
{
    PipelineConfig c;
    try {
        if (j.contains("scene")) {
            const auto &s = j.at("scene");
            if (s.contains("train")) c.train_objects = objects_from_json(s.at("train"));
            if (s.contains("heldout")) c.heldout_objects = objects_from_json(s.at("heldout"));
        }
        if (j.contains("capture")) {
            const auto &s = j.at("capture");
            read_opt(s, "width", c.width);
            read_opt(s, "height", c.height);
            read_opt(s, "views", c.views);
            read_opt(s, "interval_deg", c.interval_deg);
            read_opt(s, "camera_distance", c.camera_distance);
            read_opt(s, "elevation_deg", c.elevation_deg);
        }
        if (j.contains("rig")) {
            const auto &s = j.at("rig");
            read_opt(s, "box_size", c.rig.box_size);
            read_opt(s, "leds_per_side", c.rig.leds_per_side);
            read_opt(s, "angular_exponent", c.rig.angular_exponent);
        }
        if (j.contains("tensor")) {
            read_opt(j.at("tensor"), "spatial", c.shape.spatial);
            read_opt(j.at("tensor"), "angular", c.shape.angular);
        }
        if (j.contains("train")) {
            const auto &s = j.at("train");
            read_opt(s, "iterations", c.iterations);
            read_opt(s, "batch", c.batch);
            read_opt(s, "lambda", c.lambda);
            read_opt(s, "learning_rate", c.learning_rate);
            read_opt(s, "lighting_learning_rate", c.lighting_learning_rate);
            read_opt(s, "w_neg", c.w_neg);
            read_opt(s, "noise_sigma", c.noise_sigma);
            read_opt(s, "lighting", c.lighting);
            read_opt(s, "seed", c.seed);
            read_opt(s, "checkpoint_every", c.checkpoint_every);
            read_opt(s, "log_every", c.log_every);
            read_opt(s, "hidden", c.hidden);
        }
        if (j.contains("eval")) {
            const auto &s = j.at("eval");
            read_opt(s, "correspondences", c.correspondences);
            read_opt(s, "seed", c.eval_seed);
            read_opt(s, "gaps", c.gaps);
            read_opt(s, "tolerances", c.tolerances);
            read_opt(s, "query_views", c.query_views);
            read_opt(s, "heldout_batches", c.heldout_batches);
            read_opt(s, "baseline_window", c.baseline_window);
        }
        if (j.contains("ablate")) {
            const auto &s = j.at("ablate");
            read_opt(s, "iterations", c.ablate_iterations);
            read_opt(s, "lambdas", c.ablate_lambdas);
            read_opt(s, "w_negs", c.ablate_w_negs);
            read_opt(s, "intervals_deg", c.ablate_intervals);
            read_opt(s, "lightings", c.ablate_lightings);
            if (s.contains("shapes")) {
                c.ablate_shapes.clear();
                for (const auto &t : s.at("shapes")) c.ablate_shapes.push_back(parse_shape(t.get<std::string>()));
            }
        }
    } catch (const json::exception &e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const InputError &e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

json PipelineConfig::to_json() const
{
    ordered_json j;
    j["scene"]["train"] = objects_to_json(train_objects);
    j["scene"]["heldout"] = objects_to_json(heldout_objects);
    j["capture"] = {{"width", width},
                    {"height", height},
                    {"views", views},
                    {"interval_deg", interval_deg},
                    {"camera_distance", camera_distance},
                    {"elevation_deg", elevation_deg}};
    j["rig"] = {{"box_size", rig.box_size},
                {"leds_per_side", rig.leds_per_side},
                {"angular_exponent", rig.angular_exponent}};
    j["tensor"] = {{"spatial", shape.spatial}, {"angular", shape.angular}};
    ordered_json t;
    t["iterations"] = iterations;
    t["batch"] = batch;
    t["lambda"] = lambda;
    t["learning_rate"] = learning_rate;
    t["lighting_learning_rate"] = lighting_learning_rate;
    t["w_neg"] = w_neg;
    t["noise_sigma"] = noise_sigma;
    t["lighting"] = lighting;
    t["seed"] = seed;
    t["checkpoint_every"] = checkpoint_every;
    t["log_every"] = log_every;
    t["hidden"] = hidden;
    j["train"] = t;
    ordered_json e;
    e["correspondences"] = correspondences;
    e["seed"] = eval_seed;
    e["gaps"] = gaps;
    e["tolerances"] = tolerances;
    e["query_views"] = query_views;
    e["heldout_batches"] = heldout_batches;
    e["baseline_window"] = baseline_window;
    j["eval"] = e;
    ordered_json a;
    a["iterations"] = ablate_iterations;
    a["lambdas"] = ablate_lambdas;
    std::vector<std::string> shapes;
    for (const auto &s : ablate_shapes) shapes.push_back(shape_name(s));
    a["shapes"] = shapes;
    a["w_negs"] = ablate_w_negs;
    a["intervals_deg"] = ablate_intervals;
    a["lightings"] = ablate_lightings;
    j["ablate"] = a;
    return j;
}

void PipelineConfig::validate() const
{
    if (train_objects.empty()) throw ConfigError("config lists no training objects");
    if (width < 8 || height < 8) throw ConfigError("capture resolution must be at least 8x8");
    if (views < 1 || !(interval_deg > 0.0)) throw ConfigError("views and interval must be positive");
    if (std::abs(views * interval_deg - 360.0) > 1e-9)
        throw ConfigError("views x interval_deg must cover exactly 360 degrees");
    for (double i : ablate_intervals)
        if (!(i > 0.0) || std::abs(std::round(360.0 / i) * i - 360.0) > 1e-9)
            throw ConfigError("ablation interval must divide 360 degrees");
    try {
        shape.validate();
        for (const auto &s : ablate_shapes) s.validate();
    } catch (const InputError &e) {
        throw ConfigError(e.what());
    }
    if (shape.angular > views) throw ConfigError("angular tensor width exceeds view count");
    if (correspondences < 1 || query_views < 1 || heldout_batches < 1) throw ConfigError("eval counts must be positive");
    if (baseline_window < 1 || baseline_window % 2 == 0) throw ConfigError("baseline window must be odd");
    if (ablate_iterations < 0) throw ConfigError("ablation iterations must be non-negative");
    for (const auto &l : ablate_lightings) parse_lighting(l);
    parse_lighting(lighting);
    LightRig::box(rig);
    TrainConfig probe;
    probe.iterations = iterations;
    probe.batch = batch;
    probe.lambda = lambda;
    probe.learning_rate = learning_rate;
    probe.lighting_learning_rate = lighting_learning_rate;
    probe.shape = shape;
    probe.hidden = hidden;
    probe.w_neg = w_neg;
    probe.noise_sigma = noise_sigma;
    probe.checkpoint_every = checkpoint_every;
    probe.log_every = log_every;
    probe.validate();
}

CaptureGeometry PipelineConfig::geometry(double interval_override) const
{
    CaptureGeometry g;
    g.camera = Camera::turntable(width, height, camera_distance, elevation_deg);
    g.angular_interval_deg = interval_override > 0.0 ? interval_override : interval_deg;
    g.view_count = static_cast<int>(std::lround(360.0 / g.angular_interval_deg));
    return g;
}

TrainConfig PipelineConfig::train_config(const LightRig &rig_) const
{
    TrainConfig t;
    t.iterations = iterations;
    t.batch = batch;
    t.lambda = lambda;
    t.learning_rate = learning_rate;
    t.lighting_learning_rate = lighting_learning_rate;
    t.shape = shape;
    t.hidden = hidden;
    t.w_neg = w_neg;
    t.noise_sigma = noise_sigma;
    t.seed = seed;
    t.checkpoint_every = checkpoint_every;
    t.log_every = log_every;
    t.lighting = parse_lighting(lighting);
    if (lighting == "fixed4")
        t.fixed_pattern = four_point_pattern(rig_);
    else if (lighting.rfind("fixed:", 0) == 0)
        t.fixed_pattern = load_pattern(lighting.substr(6));
    return t;
}

HeldoutOptions PipelineConfig::heldout_options() const
{
    HeldoutOptions h;
    h.batches = heldout_batches;
    h.batch = batch;
    h.w_neg = w_neg;
    return h;
}

MatchingProtocol PipelineConfig::matching_protocol() const
{
    MatchingProtocol p;
    p.gaps = gaps;
    p.tolerances = tolerances;
    p.baseline_window = baseline_window;
    p.seed = eval_seed;
    const int q = std::min(query_views, views);
    for (int i = 0; i < q; ++i) p.query_views.push_back(static_cast<int>(static_cast<long>(i) * views / q));
    return p;
}

PipelineConfig load_config(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    try {
        return PipelineConfig::from_json(json::parse(in));
    } catch (const json::exception &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void apply_override(json &config, const std::string &assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception &) {
        value = text;
    }
    json *node = &config;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (!node->is_object() && !node->is_null()) throw ConfigError("override key '" + key + "' crosses a value");
        start = dot + 1;
    }
}

TensorShape parse_shape(const std::string &text)
{
    int a = 0, b = 0, c = 0;
    char x1 = 0, x2 = 0;
    std::istringstream ss(text);
    if (!(ss >> a >> x1 >> b >> x2 >> c) || x1 != 'x' || x2 != 'x' || a != b || !ss.eof())
        throw InputError("tensor shape '" + text + "' must look like 5x5x5");
    TensorShape s{a, c};
    s.validate();
    return s;
}

LightingMode parse_lighting(const std::string &text)
{
    if (text == "joint") return LightingMode::Joint;
    if (text == "fixed4" || (text.rfind("fixed:", 0) == 0 && text.size() > 6)) return LightingMode::Fixed;
    throw ConfigError("lighting must be joint, fixed4 or fixed:<pattern file>, got '" + text + "'");
}

Dataset generate_dataset(std::span<const ObjectSpec> objects, const CaptureGeometry &geometry,
                         const RigConfig &rig_config, TensorShape shape)
{
    shape.validate();
    geometry.camera.validate();
    Dataset ds;
    ds.geometry = geometry;
    ds.rig_config = rig_config;
    ds.rig = LightRig::box(rig_config);
    ds.header.shape = shape;
    ds.header.led_count = static_cast<std::uint32_t>(ds.rig.led_count());
    ds.header.view_count = static_cast<std::uint32_t>(geometry.view_count);
    ds.header.angular_interval_deg = geometry.angular_interval_deg;
    for (const auto &o : objects) ds.captures.push_back(capture_object(generate_scene(o.seed, o.family), geometry, ds.rig));
    ds.index_pixels();
    return ds;
}

std::vector<std::string> checkpoint_mismatch(const Checkpoint &ck, const Dataset &ds)
{
    std::vector<std::string> diff;
    auto check = [&](const std::string &name, const auto &a, const auto &b) {
        if (a != b) {
            std::ostringstream os;
            os << name << ": checkpoint=" << a << " dataset=" << b;
            diff.push_back(os.str());
        }
    };
    check("w_s", ck.params.shape.spatial, ds.header.shape.spatial);
    check("w_a", ck.params.shape.angular, ds.header.shape.angular);
    check("led_count", ck.pattern.led_count(), static_cast<std::size_t>(ds.header.led_count));
    check("angular_interval_deg", ck.angular_interval_deg, ds.header.angular_interval_deg);
    return diff;
}

void write_provenance(const std::filesystem::path &dir, const std::string &command, const PipelineConfig &config,
                      const json &inputs)
{
    ordered_json p;
    p["tool"] = "dift";
    p["version"] = kToolVersion;
    p["command"] = command;
    p["config"] = config.to_json();
    p["seeds"] = {{"train", config.seed}, {"eval", config.eval_seed}};
    p["inputs"] = inputs;
    std::filesystem::create_directories(dir);
    write_text_file(dir / "provenance.json", p.dump(2) + "\n");
}

//---------------------------------------------------------------------------

json cmd_gen(const PipelineConfig &config, const std::filesystem::path &out)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out);
    const auto geometry = config.geometry();
    const auto train = generate_dataset(config.train_objects, geometry, config.rig, config.shape);
    save_dataset(out / "train.dift", train);
    json summary = {{"command", "gen"}, {"train", (out / "train.dift").string()}};
    std::size_t valid = 0;
    for (const auto &c : train.valid_pixels)
        for (const auto &v : c) valid += v.size();
    summary["train_valid_pixels"] = valid;
    if (!config.heldout_objects.empty()) {
        const auto heldout = generate_dataset(config.heldout_objects, geometry, config.rig, config.shape);
        save_dataset(out / "heldout.dift", heldout);
        Rng rng(config.eval_seed);
        const auto set = build_correspondences(heldout, 0, config.correspondences, rng);
        save_correspondences(out / "heldout.corr", set);
        summary["heldout"] = (out / "heldout.dift").string();
        summary["correspondences"] = (out / "heldout.corr").string();
    }
    write_provenance(out, "gen", config, json::object());
    summary["w_s"] = config.shape.spatial;
    summary["w_a"] = config.shape.angular;
    summary["led_count"] = train.header.led_count;
    summary["views"] = train.header.view_count;
    summary["seconds"] = seconds_since(start);
    return summary;
}

json cmd_train(const PipelineConfig &config, const std::filesystem::path &dataset_path,
               const std::filesystem::path &out)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto dataset = load_indexed(dataset_path);
    if (!(dataset.header.shape == config.shape))
        throw ConfigError("dataset tensor shape " + shape_name(dataset.header.shape) + " differs from config " +
                          shape_name(config.shape));
    auto tc = config.train_config(dataset.rig);
    std::filesystem::create_directories(out);
    tc.checkpoint_dir = out / "checkpoints";
    std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot write " + (out / "train_log.jsonl").string());
    const auto result = train(dataset, tc, [&](const TrainLogRecord &r) {
        log << r.to_json() << "\n";
        log.flush();
    });
    save_checkpoint(out / "checkpoint.diftnet", result.checkpoint);
    save_pattern(out / "pattern.txt", result.checkpoint.pattern);
    write_provenance(out, "train", config,
                     {{"dataset", dataset_path.string()}, {"dataset_fnv1a64", file_digest(dataset_path)}});
    json summary = {{"command", "train"},
                    {"checkpoint", (out / "checkpoint.diftnet").string()},
                    {"steps", result.checkpoint.step},
                    {"skipped_steps", result.checkpoint.adam.skipped},
                    {"seconds", seconds_since(start)}};
    if (!result.log.empty()) {
        summary["final_L"] = result.log.back().loss;
        summary["final_mean_pos"] = result.log.back().mean_pos;
        summary["final_mean_neg"] = result.log.back().mean_neg;
    }
    return summary;
}

json cmd_extract(const PipelineConfig &config, const std::filesystem::path &checkpoint_path,
                 const std::filesystem::path &capture, const std::filesystem::path &out,
                 const ExtractOptions &options)
{
    const auto start = std::chrono::steady_clock::now();
    const auto ck = load_checkpoint(checkpoint_path);
    const auto dataset = load_indexed(capture);
    if (const auto diff = checkpoint_mismatch(ck, dataset); !diff.empty()) {
        std::string msg = "checkpoint does not match capture:";
        for (const auto &d : diff) msg += "\n  " + d;
        throw ConfigError(msg);
    }
    if (options.object < 0 || options.object >= static_cast<int>(dataset.captures.size()))
        throw InputError("object index out of range");
    std::vector<StyleMode> styles;
    for (const auto &s : options.styles) styles.push_back(parse_style_mode(s));

    const int views = static_cast<int>(dataset.header.view_count);
    std::vector<int> wanted = options.views;
    if (wanted.empty())
        for (int v = 0; v < views; ++v) wanted.push_back(v);
    const auto stack = render_measurements(dataset, options.object, ck.pattern,
                                           views_with_neighbors(wanted, ck.params.shape.angular, views));
    const auto maps = extract_features(stack, ck.params, wanted);
    const auto pca = fit_pca(maps);

    std::filesystem::create_directories(out / "images");
    for (const auto &m : maps) write_png(out / "images" / frame_name(m.view), project_quantize(m, pca));
    for (std::size_t s = 0; s < styles.size(); ++s) {
        const auto dir = out / ("style_" + options.styles[s]);
        std::filesystem::create_directories(dir);
        for (const auto &m : maps) write_png(dir / frame_name(m.view), stylize(m, pca, styles[s]));
    }
    save_pca(out / "pca.json", pca);
    if (options.raw_dump) save_features(out / "features.diftfeat", maps);
    write_provenance(out, "extract", config,
                     {{"checkpoint", checkpoint_path.string()},
                      {"checkpoint_fnv1a64", file_digest(checkpoint_path)},
                      {"capture", capture.string()},
                      {"capture_fnv1a64", file_digest(capture)},
                      {"object", options.object},
                      {"views", wanted}});
    return {{"command", "extract"},
            {"images", maps.size()},
            {"out", out.string()},
            {"pca_eigenvalues",
             std::vector<double>(pca.eigenvalues.data(), pca.eigenvalues.data() + std::min<Eigen::Index>(3, pca.eigenvalues.size()))},
            {"seconds", seconds_since(start)}};
}

json cmd_eval(const PipelineConfig &config, const std::filesystem::path &checkpoint_path,
              const std::filesystem::path &heldout_path, const std::filesystem::path &corr_path,
              const std::filesystem::path &out)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto ck = load_checkpoint(checkpoint_path);
    const auto heldout = load_indexed(heldout_path);
    if (const auto diff = checkpoint_mismatch(ck, heldout); !diff.empty()) {
        std::string msg = "checkpoint does not match held-out data:";
        for (const auto &d : diff) msg += "\n  " + d;
        throw ConfigError(msg);
    }
    const auto set = load_correspondences(corr_path);
    auto hopts = config.heldout_options();
    hopts.w_neg = ck.w_neg;
    const auto metrics = evaluate_heldout(ck.params, ck.pattern, heldout, hopts);
    const auto scores = evaluate_matching(heldout, ck.params, ck.pattern, set, config.matching_protocol());

    std::ostringstream table;
    table << "gap\ttol_px\tdift\tpca_rgb\tbaseline_ssd\tchance\tqueries\n";
    ordered_json rows = json::array();
    char buf[256];
    for (const auto &s : scores) {
        std::snprintf(buf, sizeof buf, "%d\t%g\t%.2f\t%.2f\t%.2f\t%.2f\t%zu\n", s.gap, s.tol, s.dift.percent,
                      s.pca_rgb.percent, s.baseline.percent, s.chance.percent, s.dift.queries);
        table << buf;
        rows.push_back({{"gap", s.gap},
                        {"tol", s.tol},
                        {"dift", s.dift.percent},
                        {"pca_rgb", s.pca_rgb.percent},
                        {"baseline_ssd", s.baseline.percent},
                        {"chance", s.chance.percent},
                        {"queries", s.dift.queries}});
    }
    std::filesystem::create_directories(out);
    write_text_file(out / "matching.tsv", table.str());
    ordered_json report;
    report["mean_pos"] = metrics.mean_positive;
    report["mean_neg"] = metrics.mean_negative;
    report["margin"] = metrics.margin;
    report["matching"] = rows;
    write_text_file(out / "eval.json", report.dump(2) + "\n");
    write_provenance(out, "eval", config,
                     {{"checkpoint", checkpoint_path.string()},
                      {"checkpoint_fnv1a64", file_digest(checkpoint_path)},
                      {"heldout", heldout_path.string()},
                      {"correspondences", corr_path.string()}});
    json summary = {{"command", "eval"},
                    {"mean_pos", metrics.mean_positive},
                    {"mean_neg", metrics.mean_negative},
                    {"margin", metrics.margin},
                    {"seconds", seconds_since(start)}};
    for (const auto &s : scores)
        summary["acc_g" + std::to_string(s.gap) + "_t" + std::to_string(static_cast<int>(s.tol))] = s.dift.percent;
    return summary;
}

json cmd_ablate(const PipelineConfig &config, const std::filesystem::path &out)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out);

    std::map<double, std::pair<std::unique_ptr<Dataset>, std::unique_ptr<Dataset>>> cache;
    const DatasetSource source = [&](double interval) -> DatasetPair {
        auto &slot = cache[interval];
        if (!slot.first) {
            const auto geometry = config.geometry(interval);
            char name[64];
            std::snprintf(name, sizeof name, "data_%gdeg", interval);
            const auto dir = out / name;
            const auto train_path = dir / "train.dift", heldout_path = dir / "heldout.dift";
            if (!std::filesystem::exists(train_path) || !std::filesystem::exists(heldout_path)) {
                std::filesystem::create_directories(dir);
                save_dataset(train_path, generate_dataset(config.train_objects, geometry, config.rig, config.shape));
                save_dataset(heldout_path,
                             generate_dataset(config.heldout_objects, geometry, config.rig, config.shape));
            }
            slot.first = std::make_unique<Dataset>(load_indexed(train_path));
            slot.second = std::make_unique<Dataset>(load_indexed(heldout_path));
        }
        return {slot.first.get(), slot.second.get()};
    };

    AblationSettings settings;
    settings.base = config.train_config(LightRig::box(config.rig));
    settings.base.iterations = config.ablate_iterations;
    settings.base.checkpoint_every = 0;
    settings.base.log_every = 0;
    settings.base_interval_deg = config.interval_deg;
    settings.heldout = config.heldout_options();
    settings.gap = 10;
    settings.correspondence_points = config.correspondences;
    settings.protocol = config.matching_protocol();
    settings.protocol.query_views.clear();

    AblationAxes axes;
    axes.lambdas = config.ablate_lambdas;
    axes.shapes = config.ablate_shapes;
    axes.w_negs = config.ablate_w_negs;
    axes.intervals_deg = config.ablate_intervals;
    for (const auto &l : config.ablate_lightings) axes.lightings.push_back(parse_lighting(l));

    const auto report = run_ablations(settings, axes, source, [](const AblationRow &r) {
        std::fprintf(stderr, "ablation %s %s margin=%.6f acc2=%.2f\n", r.axis.c_str(), shape_name(r.config.shape).c_str(),
                     r.metrics.margin, r.accuracy_2px);
    });
    write_text_file(out / "ablation.tsv", report.table());
    write_text_file(out / "ablation.json", report.to_json() + "\n");
    write_provenance(out, "ablate", config, json::object());
    return {{"command", "ablate"},
            {"rows", report.rows.size()},
            {"table", (out / "ablation.tsv").string()},
            {"seconds", seconds_since(start)}};
}

json cmd_viz(const PipelineConfig &config, const std::filesystem::path &checkpoint_path,
             const std::filesystem::path &out)
{
    const auto ck = load_checkpoint(checkpoint_path);
    const auto written = visualize_filters(ck.params, out / "filters");
    write_provenance(out, "viz", config,
                     {{"checkpoint", checkpoint_path.string()}, {"checkpoint_fnv1a64", file_digest(checkpoint_path)}});
    return {{"command", "viz"}, {"filters", written.size()}, {"out", (out / "filters").string()}};
}

} // namespace dift
