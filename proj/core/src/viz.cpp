#include "cvloc/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "cvloc/errors.hpp"
#include "cvloc/image.hpp"
#include "cvloc/trainer.hpp"

namespace cvloc {

void Raster::save_ppm(const std::filesystem::path& path) const {
    ImageU8 img;
    img.width = width;
    img.height = height;
    img.rgb = rgb;
    write_ppm(path, img);
}

void Raster::save_georef(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os << georef.x0 << "\n" << georef.y0 << "\n" << georef.cell << "\n"
       << georef.cols << "\n" << georef.rows << "\n";
}

std::array<uint8_t, 3> Raster::pixel(int row, int col) const {
    const size_t p = (static_cast<size_t>(row) * width + col) * 3;
    return {rgb[p], rgb[p + 1], rgb[p + 2]};
}

std::array<uint8_t, 3> heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto lerp = [](double a, double b, double s) {
        return static_cast<uint8_t>(std::lround(a + (b - a) * s));
    };
    if (t <= 0.5) {
        const double s = t / 0.5;
        return {lerp(255, 128, s), lerp(0, 128, s), lerp(0, 128, s)};
    }
    const double s = (t - 0.5) / 0.5;
    return {lerp(128, 0, s), lerp(128, 0, s), lerp(128, 255, s)};
}

CategoryGroups CategoryGroups::default_for_synth() {
    CategoryGroups g;
    g.red = {kUrban, kSuburban};
    g.green = {kRural, kForest, kDesert, kMountain};
    g.blue = {kWater, kCoast};
    return g;
}

namespace {

void draw_truth_ring(Raster& raster, const GridSpec& grid, double tx, double ty) {
    const auto cell = grid.cell_of(tx, ty);
    if (!cell) return;
    const int ci = static_cast<int>(*cell / grid.cols);
    const int cj = static_cast<int>(*cell % grid.cols);
    for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
            if (di == 0 && dj == 0) continue;
            const int i = ci + di, j = cj + dj;
            if (i < 0 || j < 0 || i >= raster.height || j >= raster.width) continue;
            const size_t p = (static_cast<size_t>(i) * raster.width + j) * 3;
            raster.rgb[p] = raster.rgb[p + 1] = raster.rgb[p + 2] = 0;
        }
}

Raster heat_raster(const GridSpec& grid, const std::vector<double>& distances) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double d : distances) {
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    Raster r;
    r.width = static_cast<int>(grid.cols);
    r.height = static_cast<int>(grid.rows);
    r.georef = grid;
    r.rgb.resize(distances.size() * 3);
    const bool degenerate = !(hi > lo);
    for (size_t c = 0; c < distances.size(); ++c) {
        const double t = degenerate ? 0.5 : (distances[c] - lo) / (hi - lo);
        const auto col = heat_color(t);
        r.rgb[c * 3] = col[0];
        r.rgb[c * 3 + 1] = col[1];
        r.rgb[c * 3 + 2] = col[2];
    }
    return r;
}

}  // namespace

Raster distance_heatmap(const ReferenceIndex& index, std::span<const float> query_feature,
                        std::optional<std::array<double, 2>> truth_location) {
    const int d = index.feature_dim();
    if (static_cast<int>(query_feature.size()) != d)
        throw ShapeError("distance_heatmap: query dimension mismatch");
    const uint32_t cells = index.cell_count();
    std::vector<double> dist(cells);
    const float* feats = index.features().data();
    for (uint32_t c = 0; c < cells; ++c) {
        double acc = 0.0;
        const float* f = feats + static_cast<size_t>(c) * d;
        for (int i = 0; i < d; ++i) {
            const double diff = static_cast<double>(f[i]) - query_feature[i];
            acc += diff * diff;
        }
        dist[c] = std::sqrt(acc);
    }
    Raster r = heat_raster(index.grid(), dist);
    if (truth_location) draw_truth_ring(r, index.grid(), (*truth_location)[0], (*truth_location)[1]);
    return r;
}

Raster fine_heatmap(const Checkpoint& model, const WorldSpec& world, double center_x,
                    double center_y, double window_m, double stride_m, int half_steps,
                    std::span<const float> query_feature, double alpha) {
    if (window_m <= 0 || stride_m <= 0 || half_steps < 0)
        throw DataError("fine_heatmap: bad window/stride/half_steps");
    if (static_cast<int>(query_feature.size()) != model.arch.feature_dim)
        throw ShapeError("fine_heatmap: query dimension mismatch");

    WorldField field(world);
    const int side = model.arch.input_side;
    const int d = model.arch.feature_dim;
    const int n = 2 * half_steps + 1;

    // Multi-scale windows grow 2x per zoom step below the finest.
    std::vector<double> coverages;
    if (model.kind == "multi") {
        const int z0 = model.zooms.at(0);
        for (int z : model.zooms) coverages.push_back(window_m * std::pow(2.0, z0 - z));
    } else {
        coverages.push_back(window_m);
    }
    double max_cov = *std::max_element(coverages.begin(), coverages.end());
    const double reach = half_steps * stride_m + max_cov / 2;
    if (center_x < reach || center_y < reach || center_x > world.extent - reach ||
        center_y > world.extent - reach)
        throw DataError("fine_heatmap: sampling grid reaches outside the world");

    auto mean_for = [&](size_t scale_idx) -> std::array<float, 3> {
        if (model.kind == "ground") return model.means.at("g");
        return model.means.at(std::to_string(model.zooms.at(scale_idx)));
    };

    std::vector<std::array<double, 2>> points;
    points.reserve(static_cast<size_t>(n) * n);
    GridSpec grid;
    grid.cell = stride_m;
    grid.cols = grid.rows = static_cast<uint32_t>(n);
    grid.x0 = center_x - (half_steps + 0.5) * stride_m;
    grid.y0 = center_y - (half_steps + 0.5) * stride_m;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) points.push_back(grid.center(static_cast<uint32_t>(i * n + j)));

    auto window_batch = [&](size_t lo, size_t hi, size_t scale_idx) {
        Tensor batch({static_cast<int>(hi - lo), 3, side, side});
        auto out = batch.data();
        const auto mean = mean_for(scale_idx);
        const int64_t plane = static_cast<int64_t>(side) * side;
        for (size_t p = lo; p < hi; ++p) {
            Tensor tile =
                render_aerial(field, points[p][0], points[p][1], coverages[scale_idx], side);
            auto td = tile.data();
            float* dst = out.data() + static_cast<int64_t>(p - lo) * 3 * plane;
            for (int ch = 0; ch < 3; ++ch)
                for (int64_t q = 0; q < plane; ++q)
                    dst[ch * plane + q] = td[ch * plane + q] - mean[ch];
        }
        return batch;
    };

    std::vector<double> dist(points.size());
    const size_t B = 64;
    for (size_t lo = 0; lo < points.size(); lo += B) {
        const size_t hi = std::min(lo + B, points.size());
        Tensor f;
        if (model.kind == "multi") {
            MultiScaleNet net = model.to_multiscale();
            f = extract_features(net, window_batch(lo, hi, 0), window_batch(lo, hi, 1),
                                 window_batch(lo, hi, 2));
        } else {
            Network net = model.to_network();
            f = extract_features(net, window_batch(lo, hi, 0));
        }
        auto fd = f.data();
        for (size_t p = lo; p < hi; ++p) {
            double acc = 0.0;
            for (int i = 0; i < d; ++i) {
                const double diff =
                    static_cast<double>(fd[(p - lo) * static_cast<size_t>(d) + i]) -
                    query_feature[i];
                acc += diff * diff;
            }
            dist[p] = std::sqrt(acc);
        }
    }

    Raster heat = heat_raster(grid, dist);
    // Overlay on the aerial rendering of the sampled neighborhood.
    for (size_t p = 0; p < points.size(); ++p) {
        Tensor probe = render_aerial(field, points[p][0], points[p][1], stride_m, 1);
        auto td = probe.data();
        for (int ch = 0; ch < 3; ++ch) {
            const double base = td[ch] * 255.0;
            const double mixed = alpha * heat.rgb[p * 3 + ch] + (1.0 - alpha) * base;
            heat.rgb[p * 3 + ch] = static_cast<uint8_t>(std::lround(std::clamp(mixed, 0.0, 255.0)));
        }
    }
    return heat;
}

Raster falsecolor_map(const ReferenceIndex& index, const CategoryGroups& groups) {
    const int d = index.feature_dim();
    const std::vector<int>* chans[3] = {&groups.red, &groups.green, &groups.blue};
    for (const auto* g : chans) {
        if (g->empty()) throw DataError("falsecolor_map: empty category group");
        for (int i : *g)
            if (i < 0 || i >= d)
                throw DataError("falsecolor_map: coordinate " + std::to_string(i) +
                                " outside [0," + std::to_string(d) + ")");
    }

    const uint32_t cells = index.cell_count();
    std::vector<std::array<double, 3>> mixed(cells);
    const float* feats = index.features().data();
    for (uint32_t c = 0; c < cells; ++c) {
        const float* f = feats + static_cast<size_t>(c) * d;
        for (int ch = 0; ch < 3; ++ch) {
            double acc = 0.0;
            for (int i : *chans[ch]) acc += f[i];
            mixed[c][ch] = acc / static_cast<double>(chans[ch]->size());
        }
    }

    Raster r;
    r.width = static_cast<int>(index.grid().cols);
    r.height = static_cast<int>(index.grid().rows);
    r.georef = index.grid();
    r.rgb.resize(static_cast<size_t>(cells) * 3);
    for (int ch = 0; ch < 3; ++ch) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (uint32_t c = 0; c < cells; ++c) {
            lo = std::min(lo, mixed[c][ch]);
            hi = std::max(hi, mixed[c][ch]);
        }
        const bool degenerate = !(hi > lo);
        for (uint32_t c = 0; c < cells; ++c) {
            const double t = degenerate ? 0.0 : (mixed[c][ch] - lo) / (hi - lo);
            r.rgb[static_cast<size_t>(c) * 3 + ch] =
                static_cast<uint8_t>(std::lround(t * 255.0));
        }
    }
    return r;
}

std::vector<MaxActivation> max_activation_report(const Checkpoint& ground,
                                                 const Manifest& manifest,
                                                 const std::string& split,
                                                 const std::vector<int>& coordinates, int k) {
    if (ground.kind != "ground")
        throw DataError("max_activation_report: checkpoint is not a ground model");
    const int d = ground.arch.feature_dim;
    for (int c : coordinates)
        if (c < 0 || c >= d)
            throw DataError("max_activation_report: coordinate " + std::to_string(c) +
                            " outside [0," + std::to_string(d) + ")");
    const auto rows = manifest.split_indices(split);
    if (rows.empty()) throw DataError("max_activation_report: empty image set");

    Network net = ground.to_network();
    const auto mean = ground.means.at("g");
    const int side = manifest.side();

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

    std::vector<MaxActivation> report;
    for (int coord : coordinates) {
        std::vector<std::pair<double, uint64_t>> scored;  // (-activation, id) for sort
        scored.reserve(rows.size());
        for (size_t i = 0; i < rows.size(); ++i)
            scored.emplace_back(feats[i][static_cast<size_t>(coord)], manifest.record(rows[i]).id);
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const size_t take = std::min<size_t>(static_cast<size_t>(std::max(k, 0)), scored.size());
        for (size_t i = 0; i < take; ++i)
            report.push_back({coord, static_cast<int>(i) + 1, scored[i].second, scored[i].first});
    }
    return report;
}

void save_max_activation_csv(const std::vector<MaxActivation>& report,
                             const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os << "coordinate,rank,image_id,activation\n";
    for (const auto& e : report)
        os << e.coordinate << ',' << e.rank << ',' << e.image_id << ',' << e.activation << '\n';
}

}  // namespace cvloc
