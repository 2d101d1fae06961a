#include "cvloc/geoindex.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cvloc/errors.hpp"

namespace cvloc {

namespace {
constexpr char kMagic[4] = {'C', 'V', 'I', 'X'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ParseError(std::string("CVIX: truncated reading ") + what);
    return v;
}
}  // namespace

std::array<double, 2> GridSpec::center(uint32_t index) const {
    const uint32_t i = index / cols, j = index % cols;
    return {x0 + (j + 0.5) * cell, y0 + (i + 0.5) * cell};
}

std::optional<uint32_t> GridSpec::cell_of(double x, double y) const {
    const double fx = (x - x0) / cell, fy = (y - y0) / cell;
    if (fx < 0 || fy < 0) return std::nullopt;
    const auto j = static_cast<uint32_t>(fx), i = static_cast<uint32_t>(fy);
    if (j >= cols || i >= rows) return std::nullopt;
    return i * cols + j;
}

ReferenceIndex::ReferenceIndex(GridSpec grid, int feature_dim, std::vector<float> features,
                               std::array<uint8_t, 32> model_checksum, std::vector<int> zooms)
    : grid_(grid),
      feature_dim_(feature_dim),
      features_(std::move(features)),
      checksum_(model_checksum),
      zooms_(std::move(zooms)) {
    if (features_.size() != static_cast<size_t>(grid_.cell_count()) * feature_dim_)
        throw ShapeError("ReferenceIndex: feature array size does not match grid");
    for (float v : features_)
        if (!std::isfinite(v)) throw NumericError("ReferenceIndex: non-finite feature");
}

std::span<const float> ReferenceIndex::feature(uint32_t cell) const {
    if (cell >= cell_count()) throw ShapeError("ReferenceIndex: cell index out of range");
    return std::span<const float>(features_).subspan(
        static_cast<size_t>(cell) * feature_dim_, static_cast<size_t>(feature_dim_));
}

void ReferenceIndex::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, grid_.x0);
    write_pod(os, grid_.y0);
    write_pod(os, grid_.cell);
    write_pod(os, 0.0);  // reserved
    write_pod(os, grid_.cols);
    write_pod(os, grid_.rows);
    write_pod(os, static_cast<uint32_t>(feature_dim_));
    os.write(reinterpret_cast<const char*>(checksum_.data()), 32);
    os.write(reinterpret_cast<const char*>(features_.data()),
             static_cast<std::streamsize>(features_.size() * sizeof(float)));
    if (!os) throw DataError("write failed for '" + path.string() + "'");
}

ReferenceIndex ReferenceIndex::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingAssetError("cannot open '" + path.string() + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("'" + path.string() + "' is not a CVIX file");
    if (read_pod<uint16_t>(is, "version") != kVersion)
        throw ParseError("CVIX: unsupported version");
    GridSpec grid;
    grid.x0 = read_pod<double>(is, "x0");
    grid.y0 = read_pod<double>(is, "y0");
    grid.cell = read_pod<double>(is, "cell");
    read_pod<double>(is, "reserved");
    grid.cols = read_pod<uint32_t>(is, "cols");
    grid.rows = read_pod<uint32_t>(is, "rows");
    const uint32_t d = read_pod<uint32_t>(is, "feature dim");
    std::array<uint8_t, 32> checksum{};
    is.read(reinterpret_cast<char*>(checksum.data()), 32);
    if (!is) throw ParseError("CVIX: truncated checksum");
    std::vector<float> features(static_cast<size_t>(grid.cell_count()) * d);
    is.read(reinterpret_cast<char*>(features.data()),
            static_cast<std::streamsize>(features.size() * sizeof(float)));
    if (!is) throw ParseError("CVIX: truncated feature data");
    return ReferenceIndex(grid, static_cast<int>(d), std::move(features), checksum, {});
}

ReferenceIndex build_index(const Checkpoint& model, const WorldSpec& world, const GridSpec& grid,
                           const std::filesystem::path& checkpoint_path) {
    if (grid.cols == 0 || grid.rows == 0 || grid.cell <= 0)
        throw DataError("build_index: bad grid parameters");
    const std::vector<int> zooms = model.kind == "multi" ? model.zooms
                                   : model.kind == "aerial"
                                       ? model.zooms
                                       : std::vector<int>{world.tile_meters.rbegin()->first};
    for (int z : zooms)
        if (!world.tile_meters.count(z))
            throw DataError("build_index: world has no zoom " + std::to_string(z) +
                            " configured for this model");

    // Every cell's largest tile must stay inside the world.
    double max_cov = 0.0;
    for (int z : zooms) max_cov = std::max(max_cov, world.tile_meters.at(z));
    for (uint32_t cell : {0u, grid.cell_count() - 1}) {
        const auto [cx, cy] = grid.center(cell);
        if (cx < max_cov / 2 || cy < max_cov / 2 || cx > world.extent - max_cov / 2 ||
            cy > world.extent - max_cov / 2)
            throw DataError("build_index: grid cell " + std::to_string(cell) +
                            " tile extends outside the world");
    }

    WorldField field(world);
    const int side = model.arch.input_side;
    const int d = model.arch.feature_dim;
    const uint32_t cells = grid.cell_count();
    std::vector<float> features(static_cast<size_t>(cells) * d);

    auto render_batch = [&](uint32_t lo, uint32_t hi, int zoom) {
        Tensor batch({static_cast<int>(hi - lo), 3, side, side});
        auto out = batch.data();
        const auto mean = model.means.at(std::to_string(zoom));
        const double cov = world.tile_meters.at(zoom);
        const int64_t img = 3LL * side * side;
        for (uint32_t c = lo; c < hi; ++c) {
            const auto [cx, cy] = grid.center(c);
            Tensor tile = render_aerial(field, cx, cy, cov, side);
            auto td = tile.data();
            float* dst = out.data() + static_cast<int64_t>(c - lo) * img;
            const int64_t plane = static_cast<int64_t>(side) * side;
            for (int ch = 0; ch < 3; ++ch)
                for (int64_t p = 0; p < plane; ++p)
                    dst[ch * plane + p] = td[ch * plane + p] - mean[ch];
        }
        return batch;
    };

    const uint32_t B = 64;
    if (model.kind == "multi") {
        MultiScaleNet net = model.to_multiscale();
        for (uint32_t lo = 0; lo < cells; lo += B) {
            const uint32_t hi = std::min(lo + B, cells);
            Tensor fine = render_batch(lo, hi, zooms[0]);
            Tensor mid = render_batch(lo, hi, zooms[1]);
            Tensor coarse = render_batch(lo, hi, zooms[2]);
            Tensor f = extract_features(net, fine, mid, coarse);
            std::copy(f.data().begin(), f.data().end(),
                      features.begin() + static_cast<size_t>(lo) * d);
        }
    } else {
        if (zooms.size() != 1)
            throw DataError("build_index: single-scale model must use exactly one zoom");
        Network net = model.to_network();
        // A ground model applied to aerial tiles is the Theta_a = Theta_g
        // baseline; it has no tile means, fall back to its ground means.
        const int zoom = zooms[0];
        Checkpoint patched = model;
        if (!patched.means.count(std::to_string(zoom)))
            patched.means[std::to_string(zoom)] = patched.means.at("g");
        for (uint32_t lo = 0; lo < cells; lo += B) {
            const uint32_t hi = std::min(lo + B, cells);
            const auto mean = patched.means.at(std::to_string(zoom));
            Tensor batch({static_cast<int>(hi - lo), 3, side, side});
            auto out = batch.data();
            const double cov = world.tile_meters.at(zoom);
            const int64_t plane = static_cast<int64_t>(side) * side;
            for (uint32_t c = lo; c < hi; ++c) {
                const auto [cx, cy] = grid.center(c);
                Tensor tile = render_aerial(field, cx, cy, cov, side);
                auto td = tile.data();
                float* dst = out.data() + static_cast<int64_t>(c - lo) * 3 * plane;
                for (int ch = 0; ch < 3; ++ch)
                    for (int64_t p = 0; p < plane; ++p)
                        dst[ch * plane + p] = td[ch * plane + p] - mean[ch];
            }
            Tensor f = extract_features(net, batch);
            std::copy(f.data().begin(), f.data().end(),
                      features.begin() + static_cast<size_t>(lo) * d);
        }
    }

    std::array<uint8_t, 32> checksum{};
    if (!checkpoint_path.empty()) checksum = file_sha256(checkpoint_path);
    return ReferenceIndex(grid, d, std::move(features), checksum, zooms);
}

LocalizationResult localize(const ReferenceIndex& index, std::span<const float> query_feature,
                            std::optional<std::array<double, 2>> truth_location,
                            double tolerance_radius, uint64_t query_id) {
    const int d = index.feature_dim();
    if (static_cast<int>(query_feature.size()) != d)
        throw ShapeError("localize: query dimension " + std::to_string(query_feature.size()) +
                         " != index dimension " + std::to_string(d));

    const uint32_t cells = index.cell_count();
    LocalizationResult res;
    res.query_id = query_id;
    res.candidates.resize(cells);
    const float* feats = index.features().data();
    for (uint32_t c = 0; c < cells; ++c) {
        const float* f = feats + static_cast<size_t>(c) * d;
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
            const double diff = static_cast<double>(f[i]) - static_cast<double>(query_feature[i]);
            acc += diff * diff;
        }
        res.candidates[c] = {c, std::sqrt(acc)};
    }
    std::sort(res.candidates.begin(), res.candidates.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second < b.second;
                  return a.first < b.first;
              });

    if (truth_location) {
        const auto [tx, ty] = *truth_location;
        const auto truth = index.grid().cell_of(tx, ty);
        if (!truth)
            throw DataError("localize: truth location (" + std::to_string(tx) + "," +
                            std::to_string(ty) + ") outside the grid");
        res.truth_cell = static_cast<int>(*truth);
        // Accepted cells: the truth cell, plus any cell whose center is
        // within the tolerance radius of the true location.
        int best_rank = 0;
        for (uint32_t pos = 0; pos < cells; ++pos) {
            const uint32_t c = res.candidates[pos].first;
            bool accepted = c == *truth;
            if (!accepted && tolerance_radius > 0) {
                const auto [cx, cy] = index.grid().center(c);
                const double dx = cx - tx, dy = cy - ty;
                accepted = dx * dx + dy * dy <= tolerance_radius * tolerance_radius;
            }
            if (accepted) {
                best_rank = static_cast<int>(pos) + 1;
                break;
            }
        }
        res.rank = best_rank;
        res.rank_percentile = static_cast<double>(best_rank) / cells;
    }
    return res;
}

double AccuracyCurve::value_at(double threshold) const {
    for (size_t i = 0; i < thresholds.size(); ++i)
        if (std::abs(thresholds[i] - threshold) < 1e-12) return values[i];
    throw Error("AccuracyCurve: threshold not sampled");
}

std::string EvalSummary::to_json() const {
    std::ostringstream os;
    os << "{\"top1pct\":" << top1pct << ",\"top5pct\":" << top5pct
       << ",\"top10pct\":" << top10pct
       << ",\"median_rank_percentile\":" << median_rank_percentile << ",\"auc\":" << auc << "}";
    return os.str();
}

EvalResult evaluate(const ReferenceIndex& index, const std::vector<EvalQuery>& queries,
                    double tolerance_radius) {
    if (queries.empty()) throw DataError("evaluate: empty query set");
    EvalResult result;
    result.rank_percentiles.reserve(queries.size());
    for (const auto& q : queries) {
        try {
            LocalizationResult r =
                localize(index, q.feature, std::array<double, 2>{q.x, q.y}, tolerance_radius, q.id);
            result.rank_percentiles.push_back(r.rank_percentile);
        } catch (const DataError& e) {
            throw DataError("evaluate: query " + std::to_string(q.id) + ": " + e.what());
        }
    }

    result.curve.thresholds = {0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2,
                               0.3,   0.4,   0.5,  0.6,  0.7,  0.8, 0.9, 1.0};
    for (double t : result.curve.thresholds) {
        int hits = 0;
        for (double p : result.rank_percentiles)
            if (p <= t + 1e-12) ++hits;
        result.curve.values.push_back(static_cast<double>(hits) /
                                      static_cast<double>(queries.size()));
    }

    auto& s = result.summary;
    s.top1pct = result.curve.value_at(0.01);
    s.top5pct = result.curve.value_at(0.05);
    s.top10pct = result.curve.value_at(0.10);
    std::vector<double> sorted = result.rank_percentiles;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    s.median_rank_percentile =
        n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    // Trapezoid over the sampled curve, anchored at (0, 0).
    double auc = 0.0, px = 0.0, py = 0.0;
    for (size_t i = 0; i < result.curve.thresholds.size(); ++i) {
        const double x = result.curve.thresholds[i], y = result.curve.values[i];
        auc += (x - px) * (y + py) / 2.0;
        px = x;
        py = y;
    }
    s.auc = auc;
    return result;
}

void save_curve_csv(const AccuracyCurve& curve, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os << "threshold,accuracy\n";
    for (size_t i = 0; i < curve.thresholds.size(); ++i)
        os << curve.thresholds[i] << ',' << curve.values[i] << '\n';
}

}  // namespace cvloc
