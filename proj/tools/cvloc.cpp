// cvloc: one binary driving the whole pipeline. Stages communicate
// only through files named on the command line; every run writes its
// resolved configuration next to its outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvloc/config.hpp"
#include "cvloc/errors.hpp"
#include "cvloc/geoindex.hpp"
#include "cvloc/gradcheck.hpp"
#include "cvloc/manifest.hpp"
#include "cvloc/models.hpp"
#include "cvloc/synthworld.hpp"
#include "cvloc/threading.hpp"
#include "cvloc/trainer.hpp"
#include "cvloc/viz.hpp"

namespace fs = std::filesystem;
using namespace cvloc;

namespace {

// Options given on the command line override the --config file; the
// merged result is what every handler reads.
struct GlobalArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<int> threads;
    std::string out = ".";
};

RunConfig resolve_config(const GlobalArgs& g, const RunConfig& flag_overrides) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = RunConfig::from_file(g.config_path);
    RunConfig overrides = flag_overrides;
    if (g.seed) overrides.set("seed", std::to_string(*g.seed));
    if (g.threads) overrides.set("threads", std::to_string(*g.threads));
    cfg.merge(overrides);
    if (cfg.has("threads")) set_thread_cap(cfg.get_int("threads", 0));
    return cfg;
}

fs::path prepare_out(const std::string& out, const RunConfig& resolved) {
    fs::path dir(out);
    fs::create_directories(dir);
    resolved.save(dir / "resolved.cfg");
    return dir;
}

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig t;
    t.lr = cfg.get_double("lr", t.lr);
    t.momentum = cfg.get_double("momentum", t.momentum);
    t.batch_size = cfg.get_int("batch_size", t.batch_size);
    t.epochs = cfg.get_int("epochs", t.epochs);
    t.seed = cfg.get_u64("seed", t.seed);
    t.eval_every = cfg.get_int("eval_every", t.eval_every);
    t.target_zoom = cfg.get_int("target_zoom", t.target_zoom);
    return t;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

ArchSpec arch_from(const RunConfig& cfg, const Manifest& manifest, int class_count) {
    ArchSpec a;
    a.input_side = manifest.side();
    if (cfg.has("conv_blocks")) a.conv_blocks = parse_int_list(cfg.get("conv_blocks", ""));
    a.fc_hidden = cfg.get_int("fc_hidden", a.fc_hidden);
    a.feature_dim = cfg.get_int("feature_dim", a.feature_dim);
    a.class_count = class_count;
    return a;
}

int world_class_count(const Manifest& manifest) {
    const fs::path world_path = manifest.dir() / "world.txt";
    if (fs::exists(world_path)) return WorldSpec::load(world_path).class_count;
    int max_class = 0;
    for (const auto& r : manifest.records()) max_class = std::max(max_class, r.scene_class);
    return max_class + 1;
}

// Ground-model query embeddings for a set of manifest rows.
std::vector<std::vector<float>> ground_features(const Checkpoint& ground,
                                                const Manifest& manifest,
                                                const std::vector<size_t>& rows) {
    if (ground.kind != "ground") throw DataError("expected a ground checkpoint for queries");
    Network net = ground.to_network();
    const auto mean = ground.means.at("g");
    const int side = manifest.side();
    const int d = ground.arch.feature_dim;
    std::vector<std::vector<float>> feats(rows.size());
    const size_t B = 64;
    for (size_t at = 0; at < rows.size(); at += B) {
        const size_t hi = std::min(at + B, rows.size());
        std::vector<std::vector<uint8_t>> cache;
        std::vector<size_t> pick;
        for (size_t i = at; i < hi; ++i) {
            Tensor t = manifest.load_ground(rows[i]);
            auto td = t.data();
            std::vector<uint8_t> u8(td.size());
            for (size_t q = 0; q < td.size(); ++q)
                u8[q] = static_cast<uint8_t>(std::lround(std::clamp(td[q], 0.0f, 1.0f) * 255.0f));
            cache.push_back(std::move(u8));
            pick.push_back(cache.size() - 1);
        }
        Tensor x = assemble_batch(cache, pick, side, mean);
        Tensor f = extract_features(net, x);
        auto fd = f.data();
        for (size_t i = at; i < hi; ++i)
            feats[i].assign(fd.begin() + static_cast<int64_t>(i - at) * d,
                            fd.begin() + static_cast<int64_t>(i - at + 1) * d);
    }
    return feats;
}

size_t require_query_row(const Manifest& manifest, uint64_t query_id) {
    const auto row = manifest.index_of_id(query_id);
    if (!row)
        throw DataError("query id " + std::to_string(query_id) + " not found in manifest");
    return *row;
}

GridSpec grid_from(const RunConfig& cfg, const WorldSpec& world) {
    GridSpec grid;
    grid.cell = cfg.get_double("grid_cell", 200.0);
    grid.cols = static_cast<uint32_t>(cfg.get_int("grid_cols", 50));
    grid.rows = static_cast<uint32_t>(cfg.get_int("grid_rows", 50));
    // Default: center the grid in the world.
    grid.x0 = cfg.get_double("grid_x0", (world.extent - grid.cols * grid.cell) / 2.0);
    grid.y0 = cfg.get_double("grid_y0", (world.extent - grid.rows * grid.cell) / 2.0);
    if (grid.cell <= 0 || grid.cols == 0 || grid.rows == 0)
        throw UsageError("grid cell/cols/rows must be positive");
    return grid;
}

int cmd_gen_data(const GlobalArgs& g, const RunConfig& flags) {
    RunConfig cfg = resolve_config(g, flags);
    WorldSpec world;
    world.seed = cfg.get_u64("seed", world.seed);
    world.extent = cfg.get_double("extent", world.extent);
    world.class_count = cfg.get_int("classes", world.class_count);
    world.noise_octaves = cfg.get_int("noise_octaves", world.noise_octaves);
    world.ground_range_min = cfg.get_double("ground_range_min", world.ground_range_min);
    world.ground_range_max = cfg.get_double("ground_range_max", world.ground_range_max);
    world.image_side = cfg.get_int("image_side", world.image_side);
    world.validate();

    const int n = cfg.get_int("n_samples", 1000);
    const int holdout_val = cfg.get_int("holdout_val", std::max(1, n / 10));
    const int holdout_test = cfg.get_int("holdout_test", std::max(1, n / 10));
    std::optional<std::array<double, 4>> region;
    if (cfg.has("region_w") || cfg.has("region_h")) {
        region = {{cfg.get_double("region_x0", 0.0), cfg.get_double("region_y0", 0.0),
                   cfg.get_double("region_w", world.extent), cfg.get_double("region_h", world.extent)}};
    }

    const fs::path dir = prepare_out(g.out, cfg);
    const fs::path manifest = generate_dataset(world, n, holdout_val, holdout_test, dir, region);
    std::cout << "manifest=" << manifest.string() << "\n";
    return 0;
}

int cmd_pretrain(const GlobalArgs& g, const RunConfig& flags, const std::string& manifest_path) {
    RunConfig cfg = resolve_config(g, flags);
    Manifest manifest = Manifest::load(manifest_path);
    ArchSpec arch = arch_from(cfg, manifest, world_class_count(manifest));
    TrainConfig tc = train_config_from(cfg);

    const fs::path dir = prepare_out(g.out, cfg);
    TrainLog log;
    Checkpoint ground = pretrain_ground(manifest, arch, tc, &log);
    ground.save(dir / "ground.cvwt");
    log.save(dir);
    std::cout << "val_error=" << log.best_metric << "\n"
              << "checkpoint=" << (dir / "ground.cvwt").string() << "\n";
    return 0;
}

int cmd_train_cross(const GlobalArgs& g, const RunConfig& flags,
                    const std::string& manifest_path, const std::string& ground_path) {
    RunConfig cfg = resolve_config(g, flags);
    Manifest manifest = Manifest::load(manifest_path);
    Checkpoint ground = Checkpoint::load(ground_path);
    TrainConfig tc = train_config_from(cfg);

    const fs::path dir = prepare_out(g.out, cfg);
    const auto targets = precompute_targets(ground, manifest);
    TrainLog log;
    Checkpoint aerial = train_crossview_single(manifest, targets, ground, tc, &log);
    aerial.save(dir / "aerial.cvwt");
    log.save(dir);
    std::cout << "val_distance=" << log.best_metric << "\n"
              << "checkpoint=" << (dir / "aerial.cvwt").string() << "\n";
    return 0;
}

int cmd_train_multi(const GlobalArgs& g, const RunConfig& flags,
                    const std::string& manifest_path, const std::string& ground_path,
                    const std::string& aerial_path) {
    RunConfig cfg = resolve_config(g, flags);
    Manifest manifest = Manifest::load(manifest_path);
    Checkpoint ground = Checkpoint::load(ground_path);
    Checkpoint aerial = Checkpoint::load(aerial_path);
    TrainConfig tc = train_config_from(cfg);

    const fs::path dir = prepare_out(g.out, cfg);
    const auto targets = precompute_targets(ground, manifest);
    TrainLog log;
    Checkpoint multi = train_crossview_multi(manifest, targets, aerial, tc, &log);
    multi.save(dir / "multi.cvwt");
    log.save(dir);
    std::cout << "val_distance=" << log.best_metric << "\n"
              << "checkpoint=" << (dir / "multi.cvwt").string() << "\n";
    return 0;
}

int cmd_build_index(const GlobalArgs& g, const RunConfig& flags,
                    const std::string& checkpoint_path, const std::string& world_path) {
    RunConfig cfg = resolve_config(g, flags);
    Checkpoint model = Checkpoint::load(checkpoint_path);
    WorldSpec world = WorldSpec::load(world_path);
    GridSpec grid = grid_from(cfg, world);

    const fs::path dir = prepare_out(g.out, cfg);
    ReferenceIndex index = build_index(model, world, grid, checkpoint_path);
    index.save(dir / "index.cvix");
    std::cout << "index=" << (dir / "index.cvix").string() << " cells=" << index.cell_count()
              << "\n";
    return 0;
}

int cmd_localize(const GlobalArgs& g, const RunConfig& flags, const std::string& index_path,
                 const std::string& ground_path, const std::string& manifest_path,
                 uint64_t query_id, int top) {
    RunConfig cfg = resolve_config(g, flags);
    ReferenceIndex index = ReferenceIndex::load(index_path);
    Checkpoint ground = Checkpoint::load(ground_path);
    Manifest manifest = Manifest::load(manifest_path);
    const size_t row = require_query_row(manifest, query_id);
    const auto& rec = manifest.record(row);
    const auto feats = ground_features(ground, manifest, {row});

    const double tol = cfg.get_double("tolerance_radius", 0.0);
    LocalizationResult res =
        localize(index, feats[0], std::array<double, 2>{rec.x, rec.y}, tol, query_id);
    const int shown = std::min<int>(top, static_cast<int>(res.candidates.size()));
    for (int i = 0; i < shown; ++i) {
        const auto [cell, dist] = res.candidates[static_cast<size_t>(i)];
        const auto c = index.grid().center(cell);
        std::printf("%d cell=%u x=%.1f y=%.1f dist=%.6f\n", i + 1, cell, c[0], c[1], dist);
    }
    if (res.truth_cell >= 0)
        std::printf("truth_cell=%d rank=%d rank_percentile=%.6f\n", res.truth_cell, res.rank,
                    res.rank_percentile);
    (void)cfg;
    return 0;
}

int cmd_eval(const GlobalArgs& g, const RunConfig& flags, const std::string& index_path,
             const std::string& ground_path, const std::string& manifest_path,
             const std::string& split) {
    RunConfig cfg = resolve_config(g, flags);
    ReferenceIndex index = ReferenceIndex::load(index_path);
    Checkpoint ground = Checkpoint::load(ground_path);
    Manifest manifest = Manifest::load(manifest_path);
    const auto rows = manifest.split_indices(split);
    if (rows.empty()) throw DataError("eval: split '" + split + "' is empty");
    const auto feats = ground_features(ground, manifest, rows);

    std::vector<EvalQuery> queries(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& rec = manifest.record(rows[i]);
        queries[i] = {rec.id, feats[i], rec.x, rec.y};
    }
    const double tol = cfg.get_double("tolerance_radius", 0.0);
    EvalResult result = evaluate(index, queries, tol);

    const fs::path dir = prepare_out(g.out, cfg);
    save_curve_csv(result.curve, dir / "curve.csv");
    std::ofstream(dir / "summary.json") << result.summary.to_json() << "\n";
    std::printf("top1pct=%.6f\n", result.summary.top1pct);
    std::printf("top5pct=%.6f top10pct=%.6f auc=%.6f median=%.6f\n", result.summary.top5pct,
                result.summary.top10pct, result.summary.auc,
                result.summary.median_rank_percentile);
    return 0;
}

int cmd_heatmap(const GlobalArgs& g, const RunConfig& flags, const std::string& index_path,
                const std::string& ground_path, const std::string& manifest_path,
                uint64_t query_id) {
    RunConfig cfg = resolve_config(g, flags);
    ReferenceIndex index = ReferenceIndex::load(index_path);
    Checkpoint ground = Checkpoint::load(ground_path);
    Manifest manifest = Manifest::load(manifest_path);
    const size_t row = require_query_row(manifest, query_id);
    const auto& rec = manifest.record(row);
    const auto feats = ground_features(ground, manifest, {row});

    const fs::path dir = prepare_out(g.out, cfg);
    Raster heat = distance_heatmap(index, feats[0], std::array<double, 2>{rec.x, rec.y});
    heat.save_ppm(dir / "heatmap.ppm");
    heat.save_georef(dir / "heatmap.georef");
    std::cout << "heatmap=" << (dir / "heatmap.ppm").string() << "\n";
    return 0;
}

int cmd_fine_heatmap(const GlobalArgs& g, const RunConfig& flags,
                     const std::string& checkpoint_path, const std::string& world_path,
                     const std::string& ground_path, const std::string& manifest_path,
                     uint64_t query_id) {
    RunConfig cfg = resolve_config(g, flags);
    Checkpoint model = Checkpoint::load(checkpoint_path);
    WorldSpec world = WorldSpec::load(world_path);
    Checkpoint ground = Checkpoint::load(ground_path);
    Manifest manifest = Manifest::load(manifest_path);
    const size_t row = require_query_row(manifest, query_id);
    const auto& rec = manifest.record(row);
    const auto feats = ground_features(ground, manifest, {row});

    const double window = cfg.get_double("window_m", 200.0);
    const double stride = cfg.get_double("stride_m", 50.0);
    const int half_steps = cfg.get_int("half_steps", 12);
    const double alpha = cfg.get_double("alpha", 0.6);

    const fs::path dir = prepare_out(g.out, cfg);
    Raster heat =
        fine_heatmap(model, world, rec.x, rec.y, window, stride, half_steps, feats[0], alpha);
    heat.save_ppm(dir / "fine_heatmap.ppm");
    heat.save_georef(dir / "fine_heatmap.georef");
    std::cout << "fine_heatmap=" << (dir / "fine_heatmap.ppm").string() << "\n";
    return 0;
}

int cmd_falsecolor(const GlobalArgs& g, const RunConfig& flags, const std::string& index_path,
                   const std::string& red, const std::string& green, const std::string& blue) {
    RunConfig cfg = resolve_config(g, flags);
    ReferenceIndex index = ReferenceIndex::load(index_path);
    CategoryGroups groups = CategoryGroups::default_for_synth();
    if (!red.empty()) groups.red = parse_int_list(red);
    if (!green.empty()) groups.green = parse_int_list(green);
    if (!blue.empty()) groups.blue = parse_int_list(blue);

    const fs::path dir = prepare_out(g.out, cfg);
    Raster map = falsecolor_map(index, groups);
    map.save_ppm(dir / "falsecolor.ppm");
    map.save_georef(dir / "falsecolor.georef");
    std::cout << "falsecolor=" << (dir / "falsecolor.ppm").string() << "\n";
    return 0;
}

int cmd_maxact(const GlobalArgs& g, const RunConfig& flags, const std::string& ground_path,
               const std::string& manifest_path, const std::string& split,
               const std::string& coords) {
    RunConfig cfg = resolve_config(g, flags);
    Checkpoint ground = Checkpoint::load(ground_path);
    Manifest manifest = Manifest::load(manifest_path);
    std::vector<int> coordinates;
    if (!coords.empty()) {
        coordinates = parse_int_list(coords);
    } else {
        for (int c = 0; c < ground.arch.class_count; ++c) coordinates.push_back(c);
    }
    const int k = cfg.get_int("top_k", 5);

    const fs::path dir = prepare_out(g.out, cfg);
    const auto report = max_activation_report(ground, manifest, split, coordinates, k);
    save_max_activation_csv(report, dir / "maxact.csv");
    std::cout << "maxact=" << (dir / "maxact.csv").string() << "\n";
    return 0;
}

int cmd_gradcheck(const GlobalArgs& g, const RunConfig& flags, bool linear) {
    RunConfig cfg = resolve_config(g, flags);
    prepare_out(g.out, cfg);
    ArchSpec arch;
    if (linear) {
        arch.input_side = 8;
        arch.conv_blocks = {};
        arch.fc_hidden = 0;
        arch.feature_dim = 8;
    }
    arch.validate();
    const uint64_t seed = cfg.get_u64("seed", 1);
    const double eps = cfg.get_double("eps", 1e-3);
    const double tol = cfg.get_double("tol", linear ? 1e-6 : 1e-3);
    const int batch = cfg.get_int("batch_size", 2);
    const int coords = cfg.get_int("coords_per_entry", 24);

    Network net(arch, seed);
    std::mt19937_64 rng(seed + 99);
    std::uniform_real_distribution<float> u(0.05f, 0.95f);
    Tensor images({batch, arch.input_channels, arch.input_side, arch.input_side});
    for (auto& v : images.data()) v = u(rng);
    Tensor target({batch, arch.feature_dim});
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (auto& v : target.data()) v = n(rng);
    if (linear) {
        // Dyadic grid keeps the f32 arithmetic of the linear model
        // exact, so the tight tolerance is meaningful.
        quantize_dyadic(images, 6);
        quantize_dyadic(target, 6);
        quantize_dyadic(net.params(), 6);
    }

    GradCheckReport report = gradient_check(net, images, target, eps, tol, coords, seed);
    std::cout << report.summary();
    if (!report.pass) throw NumericError("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-view geolocalization pipeline"};
    app.require_subcommand(1);

    GlobalArgs g;
    RunConfig flags;
    // Helper to route a flag value into the override config post-parse.
    auto bind = [&flags](CLI::App* sub, const std::string& flag, const std::string& key,
                         const std::string& desc) {
        sub->add_option_function<std::string>(
               flag, [&flags, key](const std::string& v) { flags.set(key, v); }, desc)
            ->expected(1);
    };
    auto add_globals = [&](CLI::App* sub) {
        sub->add_option("--config", g.config_path, "key=value config file");
        sub->add_option("--seed", g.seed, "global RNG seed");
        sub->add_option("--threads", g.threads, "worker thread cap");
        sub->add_option("--out", g.out, "output directory");
    };
    auto add_train_flags = [&](CLI::App* sub) {
        bind(sub, "--lr", "lr", "SGD learning rate");
        bind(sub, "--momentum", "momentum", "SGD momentum");
        bind(sub, "--batch", "batch_size", "minibatch size");
        bind(sub, "--epochs", "epochs", "training epochs");
        bind(sub, "--eval-every", "eval_every", "steps between validation evals");
    };

    std::string manifest_path, ground_path, aerial_path, checkpoint_path, world_path, index_path;
    std::string split = "test", coords, red, green, blue;
    uint64_t query_id = 0;
    int top = 5;
    bool linear = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    add_globals(gen);
    bind(gen, "--n", "n_samples", "number of matched pairs");
    bind(gen, "--val", "holdout_val", "validation holdout size");
    bind(gen, "--test", "holdout_test", "test holdout size");
    bind(gen, "--extent", "extent", "world side length, meters");
    bind(gen, "--classes", "classes", "scene class count");
    bind(gen, "--ground-range-min", "ground_range_min", "min ground context radius");
    bind(gen, "--ground-range-max", "ground_range_max", "max ground context radius");
    bind(gen, "--image-side", "image_side", "image side, pixels");
    bind(gen, "--region-x0", "region_x0", "sampling region origin x");
    bind(gen, "--region-y0", "region_y0", "sampling region origin y");
    bind(gen, "--region-w", "region_w", "sampling region width");
    bind(gen, "--region-h", "region_h", "sampling region height");

    auto* pre = app.add_subcommand("pretrain-ground", "scene-classification pretraining");
    add_globals(pre);
    add_train_flags(pre);
    pre->add_option("--manifest", manifest_path, "dataset manifest")->required();
    bind(pre, "--feature-dim", "feature_dim", "embedding width");
    bind(pre, "--fc-hidden", "fc_hidden", "hidden FC width (0 disables)");
    bind(pre, "--conv-blocks", "conv_blocks", "comma-separated conv channel counts");

    auto* cross = app.add_subcommand("train-cross", "single-scale cross-view training");
    add_globals(cross);
    add_train_flags(cross);
    cross->add_option("--manifest", manifest_path, "dataset manifest")->required();
    cross->add_option("--ground-checkpoint", ground_path, "frozen teacher")->required();
    bind(cross, "--target-zoom", "target_zoom", "aerial zoom level");

    auto* multi = app.add_subcommand("train-multi", "multi-scale cross-view training");
    add_globals(multi);
    add_train_flags(multi);
    multi->add_option("--manifest", manifest_path, "dataset manifest")->required();
    multi->add_option("--ground-checkpoint", ground_path, "frozen teacher")->required();
    multi->add_option("--aerial-checkpoint", aerial_path, "single-scale init")->required();

    auto* build = app.add_subcommand("build-index", "build the reference feature grid");
    add_globals(build);
    build->add_option("--checkpoint", checkpoint_path, "aerial/multi/ground model")->required();
    build->add_option("--world", world_path, "world.txt of the dataset")->required();
    bind(build, "--grid-cell", "grid_cell", "cell size, meters");
    bind(build, "--grid-cols", "grid_cols", "grid columns");
    bind(build, "--grid-rows", "grid_rows", "grid rows");
    bind(build, "--grid-x0", "grid_x0", "grid origin x");
    bind(build, "--grid-y0", "grid_y0", "grid origin y");

    auto* loc = app.add_subcommand("localize", "rank reference cells for one query");
    add_globals(loc);
    loc->add_option("--index", index_path, "reference index")->required();
    loc->add_option("--ground-checkpoint", ground_path, "query embedder")->required();
    loc->add_option("--manifest", manifest_path, "dataset manifest")->required();
    loc->add_option("--query-id", query_id, "manifest record id")->required();
    loc->add_option("--top", top, "candidates to print");
    bind(loc, "--tolerance", "tolerance_radius", "truth tolerance radius, meters");

    auto* ev = app.add_subcommand("eval", "accuracy curve over a manifest split");
    add_globals(ev);
    ev->add_option("--index", index_path, "reference index")->required();
    ev->add_option("--ground-checkpoint", ground_path, "query embedder")->required();
    ev->add_option("--manifest", manifest_path, "dataset manifest")->required();
    ev->add_option("--split", split, "manifest split (default test)");
    bind(ev, "--tolerance", "tolerance_radius", "truth tolerance radius, meters");

    auto* heat = app.add_subcommand("heatmap", "grid-wide distance heatmap for one query");
    add_globals(heat);
    heat->add_option("--index", index_path, "reference index")->required();
    heat->add_option("--ground-checkpoint", ground_path, "query embedder")->required();
    heat->add_option("--manifest", manifest_path, "dataset manifest")->required();
    heat->add_option("--query-id", query_id, "manifest record id")->required();

    auto* fine = app.add_subcommand("fine-heatmap", "sliding-window heatmap around the truth");
    add_globals(fine);
    fine->add_option("--checkpoint", checkpoint_path, "aerial/multi model")->required();
    fine->add_option("--world", world_path, "world.txt of the dataset")->required();
    fine->add_option("--ground-checkpoint", ground_path, "query embedder")->required();
    fine->add_option("--manifest", manifest_path, "dataset manifest")->required();
    fine->add_option("--query-id", query_id, "manifest record id")->required();
    bind(fine, "--window", "window_m", "finest window coverage, meters");
    bind(fine, "--stride", "stride_m", "grid spacing, meters");
    bind(fine, "--half-steps", "half_steps", "steps each side of center");
    bind(fine, "--alpha", "alpha", "heat overlay opacity");

    auto* fc = app.add_subcommand("falsecolor", "group-activation false-color map");
    add_globals(fc);
    fc->add_option("--index", index_path, "reference index")->required();
    fc->add_option("--red", red, "red-channel coordinates (comma list)");
    fc->add_option("--green", green, "green-channel coordinates");
    fc->add_option("--blue", blue, "blue-channel coordinates");

    auto* ma = app.add_subcommand("maxact", "top-activating images per embedding coordinate");
    add_globals(ma);
    ma->add_option("--ground-checkpoint", ground_path, "ground model")->required();
    ma->add_option("--manifest", manifest_path, "dataset manifest")->required();
    ma->add_option("--split", split, "manifest split (default test)");
    ma->add_option("--coords", coords, "coordinates (comma list; default class coords)");
    bind(ma, "--k", "top_k", "images per coordinate");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_globals(gc);
    gc->add_flag("--linear", linear, "check the purely linear network at tight tolerance");
    bind(gc, "--eps", "eps", "finite-difference step");
    bind(gc, "--tol", "tol", "max relative error allowed");
    bind(gc, "--batch", "batch_size", "images in the probe batch");
    bind(gc, "--coords-per-entry", "coords_per_entry", "sampled coordinates per parameter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(g, flags);
        if (pre->parsed()) return cmd_pretrain(g, flags, manifest_path);
        if (cross->parsed()) return cmd_train_cross(g, flags, manifest_path, ground_path);
        if (multi->parsed())
            return cmd_train_multi(g, flags, manifest_path, ground_path, aerial_path);
        if (build->parsed()) return cmd_build_index(g, flags, checkpoint_path, world_path);
        if (loc->parsed())
            return cmd_localize(g, flags, index_path, ground_path, manifest_path, query_id, top);
        if (ev->parsed()) return cmd_eval(g, flags, index_path, ground_path, manifest_path, split);
        if (heat->parsed())
            return cmd_heatmap(g, flags, index_path, ground_path, manifest_path, query_id);
        if (fine->parsed())
            return cmd_fine_heatmap(g, flags, checkpoint_path, world_path, ground_path,
                                    manifest_path, query_id);
        if (fc->parsed()) return cmd_falsecolor(g, flags, index_path, red, green, blue);
        if (ma->parsed()) return cmd_maxact(g, flags, ground_path, manifest_path, split, coords);
        if (gc->parsed()) return cmd_gradcheck(g, flags, linear);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
