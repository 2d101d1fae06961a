#include "cvloc/synthworld.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "cvloc/errors.hpp"
#include "cvloc/image.hpp"
#include "cvloc/rng.hpp"

namespace cvloc {

namespace {

constexpr double kBaseWavelength = 5000.0;  // coarsest class-noise octave
constexpr double kTextureWavelength = 60.0;

// Value noise: hashed lattice values, smoothstep bilinear interpolation.
double value_noise(uint64_t seed, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
    auto lattice = [seed](int64_t gx, int64_t gy) {
        uint64_t h = hash_combine(seed, static_cast<uint64_t>(gx));
        h = hash_combine(h, static_cast<uint64_t>(gy));
        return hash_unit(h);
    };
    double tx = x - fx, ty = y - fy;
    tx = tx * tx * (3.0 - 2.0 * tx);
    ty = ty * ty * (3.0 - 2.0 * ty);
    const double a = lattice(ix, iy), b = lattice(ix + 1, iy);
    const double c = lattice(ix, iy + 1), d = lattice(ix + 1, iy + 1);
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

double fbm(uint64_t seed, double x, double y, int octaves, double wavelength) {
    double amp = 1.0, total = 0.0, norm = 0.0, freq = 1.0 / wavelength;
    for (int o = 0; o < octaves; ++o) {
        total += amp * value_noise(hash_combine(seed, static_cast<uint64_t>(o)), x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    return total / norm;
}

struct Rgb {
    double r, g, b;
};

// Top-down palette, indexed by scene class.
constexpr Rgb kAerialPalette[8] = {
    {30, 70, 160},    // water
    {235, 215, 150},  // coast
    {150, 170, 90},   // rural
    {30, 90, 40},     // forest
    {205, 165, 95},   // desert
    {165, 140, 130},  // suburban
    {110, 110, 118},  // urban
    {95, 85, 75},     // mountain
};

// Eye-level palette; deliberately a different mapping than the aerial
// one so the cross-view relation is not a pixel identity.
constexpr Rgb kGroundPalette[8] = {
    {60, 130, 150},   // water
    {230, 180, 100},  // coast
    {195, 185, 70},   // rural
    {25, 75, 35},     // forest
    {235, 145, 85},   // desert
    {175, 95, 90},    // suburban
    {95, 95, 105},    // urban
    {125, 100, 145},  // mountain
};

constexpr const char* kClassNames[8] = {"water",  "coast",    "rural", "forest",
                                        "desert", "suburban", "urban", "mountain"};

Rgb palette_color(const Rgb* palette, int cls) { return palette[cls % 8]; }

uint64_t location_hash(const WorldSpec& spec, double x, double y) {
    uint64_t h = hash_combine(spec.seed, 0x6c6f636174696f6eull);
    h = hash_combine(h, std::bit_cast<uint64_t>(x));
    return hash_combine(h, std::bit_cast<uint64_t>(y));
}

}  // namespace

const char* scene_class_name(int c) {
    if (c < 0) throw Error("scene class out of range");
    return kClassNames[c % 8];
}

void WorldSpec::validate() const {
    if (class_count < 2) throw DataError("WorldSpec: class_count must be >= 2");
    if (noise_octaves < 1) throw DataError("WorldSpec: noise_octaves must be >= 1");
    if (tile_meters.empty()) throw DataError("WorldSpec: no tile zoom levels configured");
    if (image_side < 8) throw DataError("WorldSpec: image_side too small");
    if (ground_range_min <= 0 || ground_range_max < ground_range_min)
        throw DataError("WorldSpec: bad ground range");
    // Fixed 4x linear coverage per 2 zoom levels, largest zoom finest.
    for (auto it = tile_meters.begin(); it != tile_meters.end(); ++it) {
        auto next = std::next(it);
        if (next == tile_meters.end()) break;
        const int dz = next->first - it->first;
        const double ratio = it->second / next->second;
        const double expect = std::pow(2.0, dz);
        if (std::abs(ratio - expect) > 1e-9 * expect)
            throw DataError("WorldSpec: tile coverage must scale 2x per zoom step (zoom " +
                            std::to_string(it->first) + " vs " + std::to_string(next->first) + ")");
    }
    if (extent < 10.0 * max_tile_meters())
        throw DataError("WorldSpec: extent must be >= 10x largest tile coverage");
}

double WorldSpec::max_tile_meters() const {
    double m = 0.0;
    for (const auto& [zoom, cov] : tile_meters) m = std::max(m, cov);
    return m;
}

std::string WorldSpec::to_text() const {
    std::ostringstream os;
    os << "seed=" << seed << "\n";
    os << "extent=" << extent << "\n";
    os << "class_count=" << class_count << "\n";
    os << "noise_octaves=" << noise_octaves << "\n";
    for (const auto& [zoom, cov] : tile_meters) os << "tile_m_" << zoom << "=" << cov << "\n";
    os << "ground_range_min=" << ground_range_min << "\n";
    os << "ground_range_max=" << ground_range_max << "\n";
    os << "image_side=" << image_side << "\n";
    return os.str();
}

WorldSpec WorldSpec::from_text(const std::string& text) {
    WorldSpec spec;
    spec.tile_meters.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos || line.empty() || line[0] == '#') continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "seed") spec.seed = std::stoull(val);
        else if (key == "extent") spec.extent = std::stod(val);
        else if (key == "class_count") spec.class_count = std::stoi(val);
        else if (key == "noise_octaves") spec.noise_octaves = std::stoi(val);
        else if (key == "ground_range_min") spec.ground_range_min = std::stod(val);
        else if (key == "ground_range_max") spec.ground_range_max = std::stod(val);
        else if (key == "image_side") spec.image_side = std::stoi(val);
        else if (key.rfind("tile_m_", 0) == 0)
            spec.tile_meters[std::stoi(key.substr(7))] = std::stod(val);
        else
            throw ParseError("WorldSpec: unknown key '" + key + "'");
    }
    if (spec.tile_meters.empty()) spec.tile_meters = {{18, 200.0}, {16, 800.0}, {14, 3200.0}};
    spec.validate();
    return spec;
}

void WorldSpec::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os << to_text();
}

WorldSpec WorldSpec::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw MissingAssetError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
}

WorldField::WorldField(const WorldSpec& spec) : spec_(spec) {
    spec_.validate();
    // Quantile thresholds over a seeded sample grid, so every class
    // band covers a comparable share of the world.
    const int kSamples = 32768;
    std::vector<double> values;
    values.reserve(kSamples);
    std::mt19937_64 rng(hash_combine(spec_.seed, 0x7468726573686f6cull));
    std::uniform_real_distribution<double> u(0.0, spec_.extent);
    for (int i = 0; i < kSamples; ++i) {
        const double x = u(rng), y = u(rng);
        values.push_back(value_at(x, y));
    }
    std::sort(values.begin(), values.end());
    thresholds_.resize(static_cast<size_t>(spec_.class_count) - 1);
    for (int c = 1; c < spec_.class_count; ++c) {
        const size_t idx = static_cast<size_t>(
            static_cast<double>(c) / spec_.class_count * (kSamples - 1));
        thresholds_[static_cast<size_t>(c) - 1] = values[idx];
    }
}

double WorldField::value_at(double x, double y) const {
    return fbm(hash_combine(spec_.seed, 0x636c617373ull), x, y, spec_.noise_octaves,
               kBaseWavelength);
}

double WorldField::texture_at(double x, double y) const {
    return fbm(hash_combine(spec_.seed, 0x74657874ull), x, y, 3, kTextureWavelength);
}

int WorldField::class_at(double x, double y) const {
    const double v = value_at(x, y);
    int c = 0;
    while (c < spec_.class_count - 1 && v >= thresholds_[static_cast<size_t>(c)]) ++c;
    return c;
}

Tensor render_aerial(const WorldField& field, double x, double y, double coverage_m, int side) {
    Tensor img({3, side, side});
    auto d = img.data();
    const int64_t plane = static_cast<int64_t>(side) * side;
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const double wx = x + ((c + 0.5) / side - 0.5) * coverage_m;
            const double wy = y + ((r + 0.5) / side - 0.5) * coverage_m;
            const int cls = field.class_at(wx, wy);
            const Rgb base = palette_color(kAerialPalette, cls);
            const double t = 0.75 + 0.5 * field.texture_at(wx, wy);
            const int64_t p = static_cast<int64_t>(r) * side + c;
            d[0 * plane + p] = static_cast<float>(std::clamp(base.r * t / 255.0, 0.0, 1.0));
            d[1 * plane + p] = static_cast<float>(std::clamp(base.g * t / 255.0, 0.0, 1.0));
            d[2 * plane + p] = static_cast<float>(std::clamp(base.b * t / 255.0, 0.0, 1.0));
        }
    }
    return img;
}

Tensor render_ground(const WorldField& field, double x, double y, int side) {
    const WorldSpec& spec = field.spec();
    const uint64_t h = location_hash(spec, x, y);
    const double heading = 2.0 * M_PI * hash_unit(hash_combine(h, 1));
    const double far = spec.ground_range_min +
                       (spec.ground_range_max - spec.ground_range_min) *
                           hash_unit(hash_combine(h, 2));
    const double near = 3.0;
    const double ch = std::cos(heading), sh = std::sin(heading);

    Tensor img({3, side, side});
    auto d = img.data();
    const int64_t plane = static_cast<int64_t>(side) * side;
    const int horizon = static_cast<int>(side * 0.4);

    const Rgb sky_top{140, 180, 230}, sky_horizon{225, 235, 245};
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            Rgb px;
            if (r < horizon) {
                const double t = horizon > 1 ? static_cast<double>(r) / (horizon - 1) : 1.0;
                px.r = sky_top.r * (1 - t) + sky_horizon.r * t;
                px.g = sky_top.g * (1 - t) + sky_horizon.g * t;
                px.b = sky_top.b * (1 - t) + sky_horizon.b * t;
            } else {
                const double t =
                    side - 1 > horizon
                        ? static_cast<double>(r - horizon) / (side - 1 - horizon)
                        : 1.0;
                const double depth = near + (far - near) * (1.0 - t) * (1.0 - t);
                const double lateral = ((c + 0.5) / side - 0.5) * depth * 1.2;
                const double wx = x + ch * depth - sh * lateral;
                const double wy = y + sh * depth + ch * lateral;
                const int cls = field.class_at(wx, wy);
                const Rgb base = palette_color(kGroundPalette, cls);
                const double tex = 0.7 + 0.6 * field.texture_at(wx, wy);
                // haze toward the horizon
                const double haze = (1.0 - t) * 0.35;
                px.r = std::clamp(base.r * tex, 0.0, 255.0) * (1 - haze) + sky_horizon.r * haze;
                px.g = std::clamp(base.g * tex, 0.0, 255.0) * (1 - haze) + sky_horizon.g * haze;
                px.b = std::clamp(base.b * tex, 0.0, 255.0) * (1 - haze) + sky_horizon.b * haze;
            }
            const int64_t p = static_cast<int64_t>(r) * side + c;
            d[0 * plane + p] = static_cast<float>(std::clamp(px.r / 255.0, 0.0, 1.0));
            d[1 * plane + p] = static_cast<float>(std::clamp(px.g / 255.0, 0.0, 1.0));
            d[2 * plane + p] = static_cast<float>(std::clamp(px.b / 255.0, 0.0, 1.0));
        }
    }
    return img;
}

Sample render_pair(const WorldField& field, double x, double y, int side, uint64_t id) {
    const WorldSpec& spec = field.spec();
    const double m = spec.margin();
    if (x < m || y < m || x > spec.extent - m || y > spec.extent - m)
        throw DataError("render_pair: location (" + std::to_string(x) + "," + std::to_string(y) +
                        ") is within " + std::to_string(m) + " m of the world boundary");
    Sample s;
    s.id = id;
    s.x = x;
    s.y = y;
    s.scene_class = field.class_at(x, y);
    s.ground = render_ground(field, x, y, side);
    for (const auto& [zoom, cov] : spec.tile_meters)
        s.aerial[zoom] = render_aerial(field, x, y, cov, side);
    return s;
}

std::filesystem::path generate_dataset(const WorldSpec& spec, int n, int holdout_val,
                                       int holdout_test, const std::filesystem::path& out_dir,
                                       const std::optional<std::array<double, 4>>& region) {
    spec.validate();
    if (n <= holdout_val + holdout_test)
        throw UsageError("generate_dataset: n must exceed holdout_val + holdout_test");
    if (spec.tile_meters.count(18) + spec.tile_meters.count(16) + spec.tile_meters.count(14) != 3)
        throw DataError("generate_dataset: manifest format needs zooms 18, 16 and 14");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw DataError("cannot create output directory '" + out_dir.string() + "'");

    WorldField field(spec);
    const double m = spec.margin();
    double lo_x = m, hi_x = spec.extent - m, lo_y = m, hi_y = spec.extent - m;
    if (region) {
        lo_x = std::max(lo_x, (*region)[0]);
        lo_y = std::max(lo_y, (*region)[1]);
        hi_x = std::min(hi_x, (*region)[0] + (*region)[2]);
        hi_y = std::min(hi_y, (*region)[1] + (*region)[3]);
        if (!(lo_x < hi_x) || !(lo_y < hi_y))
            throw UsageError("generate_dataset: sampling region is empty after the margin clip");
    }
    std::mt19937_64 rng(hash_combine(spec.seed, 0x646174617365744eull));
    std::uniform_real_distribution<double> ux(lo_x, hi_x), uy(lo_y, hi_y);

    std::vector<std::pair<double, double>> locations(static_cast<size_t>(n));
    for (auto& [x, y] : locations) {
        x = ux(rng);
        y = uy(rng);
    }
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::mt19937_64 split_rng(hash_combine(spec.seed, 0x73706c6974ull));
    std::shuffle(order.begin(), order.end(), split_rng);
    std::vector<std::string> split(static_cast<size_t>(n), "train");
    for (int i = 0; i < holdout_val; ++i) split[static_cast<size_t>(order[i])] = "val";
    for (int i = holdout_val; i < holdout_val + holdout_test; ++i)
        split[static_cast<size_t>(order[i])] = "test";

    const std::filesystem::path manifest_path = out_dir / "manifest.csv";
    std::ofstream mf(manifest_path);
    if (!mf) throw DataError("cannot open '" + manifest_path.string() + "' for writing");
    mf << "id,x,y,class,split,ground,aerial_z18,aerial_z16,aerial_z14\n";

    char buf[64];
    for (int i = 0; i < n; ++i) {
        const auto [x, y] = locations[static_cast<size_t>(i)];
        Sample s = render_pair(field, x, y, spec.image_side, static_cast<uint64_t>(i));
        std::snprintf(buf, sizeof(buf), "ground_%05d.ppm", i);
        const std::string ground_name = buf;
        write_ppm(out_dir / ground_name, from_chw(s.ground));
        std::string tile_names[3];
        const int zooms[3] = {18, 16, 14};
        for (int z = 0; z < 3; ++z) {
            std::snprintf(buf, sizeof(buf), "aerial_z%d_%05d.ppm", zooms[z], i);
            tile_names[z] = buf;
            write_ppm(out_dir / tile_names[z], from_chw(s.aerial.at(zooms[z])));
        }
        std::snprintf(buf, sizeof(buf), "%.3f", x);
        const std::string xs = buf;
        std::snprintf(buf, sizeof(buf), "%.3f", y);
        const std::string ys = buf;
        mf << i << ',' << xs << ',' << ys << ',' << s.scene_class << ','
           << split[static_cast<size_t>(i)] << ',' << ground_name << ',' << tile_names[0] << ','
           << tile_names[1] << ',' << tile_names[2] << "\n";
    }
    mf.close();
    spec.save(out_dir / "world.txt");
    return manifest_path;
}

}  // namespace cvloc
