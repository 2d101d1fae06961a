#include "cvloc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "cvloc/errors.hpp"
#include "cvloc/image.hpp"
#include "cvloc/optim.hpp"
#include "cvloc/ops.hpp"
#include "cvloc/rng.hpp"

namespace cvloc {

void TrainConfig::validate() const {
    if (lr < 0.0) throw UsageError("TrainConfig: lr must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) throw UsageError("TrainConfig: momentum in [0,1)");
    if (batch_size < 1) throw UsageError("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw UsageError("TrainConfig: epochs must be >= 1");
    if (eval_every < 1) throw UsageError("TrainConfig: eval_every must be >= 1");
}

void TrainLog::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "loss.csv");
        os << "step,loss\n";
        for (const auto& [step, v] : loss) os << step << ',' << v << '\n';
    }
    {
        std::ofstream os(dir / "val.csv");
        os << "step,val_distance\n";
        for (const auto& [step, v] : val_metric) os << step << ',' << v << '\n';
    }
}

namespace {

// 8-bit CHW pixel cache; decoding PPMs once up front keeps epochs
// image-IO free without holding floats for every record.
std::vector<uint8_t> load_u8_chw(const Manifest& manifest, size_t idx, int zoom) {
    Tensor t;
    try {
        t = zoom < 0 ? manifest.load_ground(idx) : manifest.load_aerial(idx, zoom);
    } catch (const Error& e) {
        throw DataError("record id " + std::to_string(manifest.record(idx).id) + ": " + e.what());
    }
    auto d = t.data();
    std::vector<uint8_t> out(d.size());
    for (size_t i = 0; i < d.size(); ++i)
        out[i] = static_cast<uint8_t>(std::lround(std::clamp(d[i], 0.0f, 1.0f) * 255.0f));
    return out;
}

std::vector<std::vector<uint8_t>> build_cache(const Manifest& manifest,
                                              const std::vector<size_t>& rows, int zoom) {
    std::vector<std::vector<uint8_t>> cache(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) cache[i] = load_u8_chw(manifest, rows[i], zoom);
    return cache;
}

std::array<float, 3> channel_means(const std::vector<std::vector<uint8_t>>& cache) {
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    int64_t per_channel = 0;
    for (const auto& img : cache) {
        const size_t plane = img.size() / 3;
        for (int c = 0; c < 3; ++c)
            for (size_t p = 0; p < plane; ++p) acc[c] += img[c * plane + p] / 255.0;
        per_channel += static_cast<int64_t>(plane);
    }
    std::array<float, 3> out{0.0f, 0.0f, 0.0f};
    if (per_channel > 0)
        for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(acc[c] / per_channel);
    return out;
}

Tensor rows_tensor(const std::vector<std::vector<float>>& targets,
                   const std::vector<size_t>& manifest_rows, const std::vector<size_t>& pick) {
    const int d = static_cast<int>(targets.at(manifest_rows.at(0)).size());
    Tensor t({static_cast<int>(pick.size()), d});
    auto out = t.data();
    for (size_t i = 0; i < pick.size(); ++i) {
        const auto& row = targets.at(manifest_rows[pick[i]]);
        std::copy(row.begin(), row.end(), out.begin() + static_cast<int64_t>(i) * d);
    }
    return t;
}

std::string meta_for(const Checkpoint& ck) {
    std::ostringstream os;
    os.precision(9);  // enough decimal digits to round-trip f32 exactly
    os << "kind=" << ck.kind << "\n";
    if (!ck.zooms.empty()) {
        os << "zooms=";
        for (size_t i = 0; i < ck.zooms.size(); ++i) os << (i ? "," : "") << ck.zooms[i];
        os << "\n";
    }
    for (const auto& [key, m] : ck.means)
        os << "mean." << key << '=' << m[0] << ',' << m[1] << ',' << m[2] << "\n";
    os << ck.arch.to_text();
    return os.str();
}

void check_finite(double loss_value, int step, double lr) {
    if (!std::isfinite(loss_value))
        throw NumericError("non-finite training loss at step " + std::to_string(step) +
                           " (lr=" + std::to_string(lr) + ")");
}

}  // namespace

Tensor assemble_batch(const std::vector<std::vector<uint8_t>>& cache,
                      const std::vector<size_t>& rows, int side,
                      const std::array<float, 3>& mean) {
    const int64_t plane = static_cast<int64_t>(side) * side;
    Tensor t({static_cast<int>(rows.size()), 3, side, side});
    auto out = t.data();
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& img = cache.at(rows[i]);
        if (static_cast<int64_t>(img.size()) != 3 * plane)
            throw ShapeError("assemble_batch: cached image size mismatch");
        float* dst = out.data() + static_cast<int64_t>(i) * 3 * plane;
        for (int c = 0; c < 3; ++c)
            for (int64_t p = 0; p < plane; ++p)
                dst[c * plane + p] = static_cast<float>(img[c * plane + p]) / 255.0f - mean[c];
    }
    return t;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    ParamStore ps = params;  // shallow copy; only meta differs
    ps.meta = meta_for(*this);
    ps.save(path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    Checkpoint ck;
    ck.params = ParamStore::load(path);
    ck.arch = ArchSpec::from_text(ck.params.meta);
    std::istringstream is(ck.params.meta);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "kind") ck.kind = val;
        else if (key == "zooms") {
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ',')) ck.zooms.push_back(std::stoi(tok));
        } else if (key.rfind("mean.", 0) == 0) {
            std::array<float, 3> m{};
            std::istringstream vs(val);
            std::string tok;
            for (int c = 0; c < 3 && std::getline(vs, tok, ','); ++c) m[c] = std::stof(tok);
            ck.means[key.substr(5)] = m;
        }
    }
    if (ck.kind.empty()) throw ParseError("checkpoint '" + path.string() + "': meta lacks kind");
    return ck;
}

Network Checkpoint::to_network() const {
    if (kind == "multi") throw DataError("checkpoint is multi-scale, not a single Network");
    return Network(arch, params);
}

MultiScaleNet Checkpoint::to_multiscale() const {
    if (kind != "multi") throw DataError("checkpoint '" + kind + "' is not multi-scale");
    return MultiScaleNet(arch, params);
}

Checkpoint pretrain_ground(const Manifest& manifest, const ArchSpec& arch,
                           const TrainConfig& cfg, TrainLog* log) {
    cfg.validate();
    arch.validate();
    if (arch.class_count < 2)
        throw UsageError("pretrain_ground: arch needs a classification head (class_count >= 2)");
    const auto train_rows = manifest.split_indices("train");
    const auto val_rows = manifest.split_indices("val");
    if (train_rows.empty()) throw DataError("pretrain_ground: empty train split");
    for (size_t r : train_rows)
        if (manifest.record(r).scene_class < 0 || manifest.record(r).scene_class >= arch.class_count)
            throw DataError("pretrain_ground: record " + std::to_string(manifest.record(r).id) +
                            " class " + std::to_string(manifest.record(r).scene_class) +
                            " outside [0," + std::to_string(arch.class_count) + ")");

    const int side = manifest.side();
    if (side != arch.input_side)
        throw ShapeError("pretrain_ground: manifest images side " + std::to_string(side) +
                         " != arch input_side " + std::to_string(arch.input_side));

    auto train_cache = build_cache(manifest, train_rows, -1);
    auto val_cache = build_cache(manifest, val_rows, -1);
    const auto mean = channel_means(train_cache);

    std::vector<int> train_labels(train_rows.size()), val_labels(val_rows.size());
    for (size_t i = 0; i < train_rows.size(); ++i)
        train_labels[i] = manifest.record(train_rows[i]).scene_class;
    for (size_t i = 0; i < val_rows.size(); ++i)
        val_labels[i] = manifest.record(val_rows[i]).scene_class;

    Network net(arch, cfg.seed);
    net.params().set_requires_grad(true);
    SgdOptimizer opt(cfg.lr, cfg.momentum);

    auto val_error = [&]() {
        if (val_cache.empty()) return 0.0;
        int correct = 0;
        const size_t B = 64;
        for (size_t at = 0; at < val_cache.size(); at += B) {
            std::vector<size_t> pick;
            for (size_t i = at; i < std::min(at + B, val_cache.size()); ++i) pick.push_back(i);
            Tensor x = assemble_batch(val_cache, pick, side, mean);
            Graph g;
            Tensor f = net.features(g, x);
            auto fd = f.data();
            const int d = f.dim(1);
            for (size_t i = 0; i < pick.size(); ++i) {
                int argmax = 0;
                for (int c = 1; c < arch.class_count; ++c)
                    if (fd[i * d + c] > fd[i * d + argmax]) argmax = c;
                if (argmax == val_labels[pick[i]]) ++correct;
            }
        }
        return 1.0 - static_cast<double>(correct) / static_cast<double>(val_cache.size());
    };

    ParamStore best = net.params().clone();
    double best_metric = std::numeric_limits<double>::infinity();
    int best_step = -1;
    int step = 0;
    auto maybe_eval = [&](int at_step) {
        const double err = val_error();
        if (log) log->val_metric.emplace_back(at_step, err);
        if (err < best_metric) {
            best_metric = err;
            best_step = at_step;
            best = net.params().clone();
        }
    };
    maybe_eval(0);

    std::vector<size_t> order(train_rows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 shuffle_rng(hash_combine(cfg.seed, static_cast<uint64_t>(epoch) + 17));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
            std::vector<size_t> pick(order.begin() + static_cast<int64_t>(at),
                                     order.begin() +
                                         static_cast<int64_t>(std::min(
                                             at + static_cast<size_t>(cfg.batch_size), order.size())));
            Tensor x = assemble_batch(train_cache, pick, side, mean);
            std::vector<int> labels(pick.size());
            for (size_t i = 0; i < pick.size(); ++i) labels[i] = train_labels[pick[i]];

            net.params().zero_grads();
            Graph g;
            Tensor f = net.features(g, x);
            Tensor z = net.logits(g, f);
            Tensor loss = softmax_cross_entropy(g, z, labels);
            check_finite(loss.item(), step, cfg.lr);
            g.backward(loss);
            opt.step(net.params());
            ++step;
            if (log) log->loss.emplace_back(step, loss.item());
            if (step % cfg.eval_every == 0) maybe_eval(step);
        }
        if (log)
            log->epoch_seconds.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    maybe_eval(step);

    if (log) {
        log->best_step = best_step;
        log->best_metric = best_metric;
    }
    Checkpoint ck;
    ck.arch = arch;
    ck.kind = "ground";
    ck.means["g"] = mean;
    ck.params = std::move(best);
    ck.params.rng_seed = cfg.seed;
    return ck;
}

std::vector<std::vector<float>> precompute_targets(const Checkpoint& ground,
                                                   const Manifest& manifest) {
    if (ground.kind != "ground") throw DataError("precompute_targets: checkpoint is not a ground model");
    Network net = ground.to_network();
    net.set_mode(Mode::eval);
    const auto mean = ground.means.at("g");
    const int side = manifest.side();
    const int d = ground.arch.feature_dim;

    std::vector<std::vector<float>> out(manifest.size());
    const size_t B = 64;
    for (size_t at = 0; at < manifest.size(); at += B) {
        const size_t hi = std::min(at + B, manifest.size());
        std::vector<std::vector<uint8_t>> cache;
        std::vector<size_t> pick;
        for (size_t i = at; i < hi; ++i) {
            cache.push_back(load_u8_chw(manifest, i, -1));
            pick.push_back(cache.size() - 1);
        }
        Tensor x = assemble_batch(cache, pick, side, mean);
        Tensor f = extract_features(net, x);
        auto fd = f.data();
        for (size_t i = at; i < hi; ++i) {
            out[i].assign(fd.begin() + static_cast<int64_t>(i - at) * d,
                          fd.begin() + static_cast<int64_t>(i - at + 1) * d);
        }
    }
    return out;
}

namespace {

// Shared SGD loop for both cross-view stages. forward() must produce
// the aerial embedding for a batch of row positions into the split.
template <typename ForwardFn, typename ParamsFn>
Checkpoint crossview_train_loop(const Manifest& manifest,
                                const std::vector<std::vector<float>>& targets,
                                const TrainConfig& cfg, TrainLog* log, ForwardFn&& forward,
                                ParamsFn&& get_params, Checkpoint proto) {
    const auto train_rows = manifest.split_indices("train");
    const auto val_rows = manifest.split_indices("val");
    if (train_rows.empty()) throw DataError("cross-view training: empty train split");
    if (targets.size() != manifest.size())
        throw DataError("cross-view training: targets do not cover the manifest");

    SgdOptimizer opt(cfg.lr, cfg.momentum);
    ParamStore& params = get_params();
    params.set_requires_grad(true);

    auto val_distance = [&]() {
        if (val_rows.empty()) return 0.0;
        double total = 0.0;
        const size_t B = 64;
        for (size_t at = 0; at < val_rows.size(); at += B) {
            std::vector<size_t> pick;
            for (size_t i = at; i < std::min(at + B, val_rows.size()); ++i) pick.push_back(i);
            Graph g;
            Tensor f = forward(g, /*train=*/false, pick);
            Tensor t = rows_tensor(targets, val_rows, pick);
            total += mean_feature_distance(f, t) * static_cast<double>(pick.size());
        }
        return total / static_cast<double>(val_rows.size());
    };

    ParamStore best = params.clone();
    double best_metric = std::numeric_limits<double>::infinity();
    int best_step = -1;
    int step = 0;
    auto maybe_eval = [&](int at_step) {
        const double dist = val_distance();
        if (log) log->val_metric.emplace_back(at_step, dist);
        if (dist < best_metric) {
            best_metric = dist;
            best_step = at_step;
            best = params.clone();
        }
    };
    maybe_eval(0);

    std::vector<size_t> order(train_rows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 shuffle_rng(hash_combine(cfg.seed, static_cast<uint64_t>(epoch) + 31));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
            std::vector<size_t> pick(order.begin() + static_cast<int64_t>(at),
                                     order.begin() +
                                         static_cast<int64_t>(std::min(
                                             at + static_cast<size_t>(cfg.batch_size), order.size())));
            params.zero_grads();
            Graph g;
            Tensor f = forward(g, /*train=*/true, pick);
            Tensor t = rows_tensor(targets, train_rows, pick);
            Tensor loss = euclidean_loss(g, f, t);
            check_finite(loss.item(), step, cfg.lr);
            g.backward(loss);
            opt.step(params);
            ++step;
            if (log) log->loss.emplace_back(step, loss.item());
            if (step % cfg.eval_every == 0) maybe_eval(step);
        }
        if (log)
            log->epoch_seconds.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    maybe_eval(step);

    if (log) {
        log->best_step = best_step;
        log->best_metric = best_metric;
    }
    proto.params = std::move(best);
    proto.params.rng_seed = cfg.seed;
    return proto;
}

}  // namespace

Checkpoint train_crossview_single(const Manifest& manifest,
                                  const std::vector<std::vector<float>>& targets,
                                  const Checkpoint& ground, const TrainConfig& cfg,
                                  TrainLog* log) {
    cfg.validate();
    if (ground.kind != "ground")
        throw DataError("train_crossview_single: teacher checkpoint is not a ground model");
    if (std::find(manifest.zooms().begin(), manifest.zooms().end(), cfg.target_zoom) ==
        manifest.zooms().end())
        throw DataError("train_crossview_single: manifest lacks zoom " +
                        std::to_string(cfg.target_zoom));

    const int side = manifest.side();
    const auto train_rows = manifest.split_indices("train");
    const auto val_rows = manifest.split_indices("val");
    auto train_cache = build_cache(manifest, train_rows, cfg.target_zoom);
    auto val_cache = build_cache(manifest, val_rows, cfg.target_zoom);
    const auto mean = channel_means(train_cache);

    // Theta_a starts as a copy of Theta_g.
    Network net(ground.arch, ground.params.clone());

    Checkpoint proto;
    proto.arch = ground.arch;
    proto.kind = "aerial";
    proto.zooms = {cfg.target_zoom};
    proto.means[std::to_string(cfg.target_zoom)] = mean;

    auto forward = [&](Graph& g, bool train, const std::vector<size_t>& pick) {
        const auto& cache = train ? train_cache : val_cache;
        Tensor x = assemble_batch(cache, pick, side, mean);
        return net.features(g, x);
    };
    return crossview_train_loop(manifest, targets, cfg, log, forward,
                                [&]() -> ParamStore& { return net.params(); }, std::move(proto));
}

Checkpoint train_crossview_multi(const Manifest& manifest,
                                 const std::vector<std::vector<float>>& targets,
                                 const Checkpoint& aerial_best, const TrainConfig& cfg,
                                 TrainLog* log) {
    cfg.validate();
    if (aerial_best.kind != "aerial")
        throw DataError("train_crossview_multi: init checkpoint is not a single-scale aerial model");
    const std::vector<int> zooms = {18, 16, 14};  // fine -> coarse
    for (int z : zooms)
        if (std::find(manifest.zooms().begin(), manifest.zooms().end(), z) ==
            manifest.zooms().end())
            throw DataError("train_crossview_multi: manifest lacks zoom " + std::to_string(z));

    const int side = manifest.side();
    const auto train_rows = manifest.split_indices("train");
    const auto val_rows = manifest.split_indices("val");

    std::vector<std::vector<std::vector<uint8_t>>> train_cache, val_cache;
    Checkpoint proto;
    proto.arch = aerial_best.arch;
    proto.kind = "multi";
    proto.zooms = zooms;
    std::vector<std::array<float, 3>> means;
    for (int z : zooms) {
        train_cache.push_back(build_cache(manifest, train_rows, z));
        val_cache.push_back(build_cache(manifest, val_rows, z));
        means.push_back(channel_means(train_cache.back()));
        proto.means[std::to_string(z)] = means.back();
    }

    MultiScaleNet net(aerial_best.arch, aerial_best.params,
                      hash_combine(cfg.seed, 0x667573696f6eull));

    auto forward = [&](Graph& g, bool train, const std::vector<size_t>& pick) {
        const auto& caches = train ? train_cache : val_cache;
        Tensor fine = assemble_batch(caches[0], pick, side, means[0]);
        Tensor mid = assemble_batch(caches[1], pick, side, means[1]);
        Tensor coarse = assemble_batch(caches[2], pick, side, means[2]);
        return net.features(g, fine, mid, coarse);
    };
    return crossview_train_loop(manifest, targets, cfg, log, forward,
                                [&]() -> ParamStore& { return net.params(); }, std::move(proto));
}

double crossview_val_distance(const Checkpoint& model, const Manifest& manifest,
                              const std::vector<std::vector<float>>& targets,
                              const std::string& split) {
    const auto rows = manifest.split_indices(split);
    if (rows.empty()) return 0.0;
    const int side = manifest.side();
    double total = 0.0;
    const size_t B = 64;

    if (model.kind == "multi") {
        MultiScaleNet net = model.to_multiscale();
        const std::vector<int> zooms = model.zooms;
        for (size_t at = 0; at < rows.size(); at += B) {
            const size_t hi = std::min(at + B, rows.size());
            std::vector<std::vector<std::vector<uint8_t>>> caches(zooms.size());
            std::vector<size_t> pick;
            for (size_t i = at; i < hi; ++i) {
                for (size_t z = 0; z < zooms.size(); ++z)
                    caches[z].push_back(load_u8_chw(manifest, rows[i], zooms[z]));
                pick.push_back(i - at);
            }
            Tensor fine = assemble_batch(caches[0], pick, side, model.means.at(std::to_string(zooms[0])));
            Tensor mid = assemble_batch(caches[1], pick, side, model.means.at(std::to_string(zooms[1])));
            Tensor coarse = assemble_batch(caches[2], pick, side, model.means.at(std::to_string(zooms[2])));
            Tensor f = extract_features(net, fine, mid, coarse);
            std::vector<size_t> mrows(rows.begin() + static_cast<int64_t>(at),
                                      rows.begin() + static_cast<int64_t>(hi));
            std::vector<size_t> all(pick.size());
            for (size_t i = 0; i < all.size(); ++i) all[i] = i;
            Tensor t = rows_tensor(targets, mrows, all);
            total += mean_feature_distance(f, t) * static_cast<double>(pick.size());
        }
    } else {
        Network net = model.to_network();
        const int zoom = model.kind == "aerial" ? model.zooms.at(0) : -1;
        const auto mean = model.kind == "aerial" ? model.means.at(std::to_string(zoom))
                                                 : model.means.at("g");
        for (size_t at = 0; at < rows.size(); at += B) {
            const size_t hi = std::min(at + B, rows.size());
            std::vector<std::vector<uint8_t>> cache;
            std::vector<size_t> pick;
            for (size_t i = at; i < hi; ++i) {
                cache.push_back(load_u8_chw(manifest, rows[i], zoom));
                pick.push_back(cache.size() - 1);
            }
            Tensor x = assemble_batch(cache, pick, side, mean);
            Tensor f = extract_features(net, x);
            std::vector<size_t> mrows(rows.begin() + static_cast<int64_t>(at),
                                      rows.begin() + static_cast<int64_t>(hi));
            std::vector<size_t> all(pick.size());
            for (size_t i = 0; i < all.size(); ++i) all[i] = i;
            Tensor t = rows_tensor(targets, mrows, all);
            total += mean_feature_distance(f, t) * static_cast<double>(pick.size());
        }
    }
    return total / static_cast<double>(rows.size());
}

double classification_accuracy(const Checkpoint& ground, const Manifest& manifest,
                               const std::string& split) {
    if (ground.kind != "ground")
        throw DataError("classification_accuracy: checkpoint is not a ground model");
    const auto rows = manifest.split_indices(split);
    if (rows.empty()) return 0.0;
    Network net = ground.to_network();
    const auto mean = ground.means.at("g");
    const int side = manifest.side();
    const int d = ground.arch.feature_dim;
    int correct = 0;
    const size_t B = 64;
    for (size_t at = 0; at < rows.size(); at += B) {
        const size_t hi = std::min(at + B, rows.size());
        std::vector<std::vector<uint8_t>> cache;
        std::vector<size_t> pick;
        for (size_t i = at; i < hi; ++i) {
            cache.push_back(load_u8_chw(manifest, rows[i], -1));
            pick.push_back(cache.size() - 1);
        }
        Tensor x = assemble_batch(cache, pick, side, mean);
        Tensor f = extract_features(net, x);
        auto fd = f.data();
        for (size_t i = 0; i < pick.size(); ++i) {
            int argmax = 0;
            for (int c = 1; c < ground.arch.class_count; ++c)
                if (fd[i * static_cast<size_t>(d) + static_cast<size_t>(c)] >
                    fd[i * static_cast<size_t>(d) + static_cast<size_t>(argmax)])
                    argmax = c;
            if (argmax == manifest.record(rows[at + i]).scene_class) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace cvloc
