#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "cvloc/errors.hpp"
#include "cvloc/manifest.hpp"
#include "cvloc/param_store.hpp"
#include "cvloc/synthworld.hpp"

using namespace cvloc;
namespace fs = std::filesystem;

namespace {

WorldSpec small_world(uint64_t seed = 1) {
    WorldSpec w;
    w.seed = seed;
    w.extent = 40000.0;
    w.image_side = 32;
    return w;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cvloc_sw_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

double pearson(std::span<const float> a, std::span<const float> b) {
    REQUIRE(a.size() == b.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(a.size());
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0 || vb == 0) return 0.0;
    return cov / std::sqrt(va * vb);
}

// 64 -> 16 box downscale of a [3,S,S] tensor channel plane
std::vector<float> box_down(const Tensor& t, int factor) {
    const int S = t.dim(1);
    const int O = S / factor;
    std::vector<float> out(static_cast<size_t>(3) * O * O, 0.0f);
    auto d = t.data();
    for (int c = 0; c < 3; ++c)
        for (int oy = 0; oy < O; ++oy)
            for (int ox = 0; ox < O; ++ox) {
                double acc = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += d[(static_cast<size_t>(c) * S + oy * factor + dy) * S + ox * factor +
                                 dx];
                out[(static_cast<size_t>(c) * O + oy) * O + ox] =
                    static_cast<float>(acc / (factor * factor));
            }
    return out;
}

// center crop of the [3,S,S] tensor, fraction 1/frac per side
std::vector<float> center_crop(const Tensor& t, int frac) {
    const int S = t.dim(1);
    const int O = S / frac;
    const int off = (S - O) / 2;
    std::vector<float> out(static_cast<size_t>(3) * O * O);
    auto d = t.data();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < O; ++y)
            for (int x = 0; x < O; ++x)
                out[(static_cast<size_t>(c) * O + y) * O + x] =
                    d[(static_cast<size_t>(c) * S + off + y) * S + off + x];
    return out;
}

}  // namespace

TEST_CASE("WorldSpec validation and text round-trip") {
    WorldSpec w = small_world();
    w.validate();
    WorldSpec back = WorldSpec::from_text(w.to_text());
    CHECK(back.seed == w.seed);
    CHECK(back.extent == w.extent);
    CHECK(back.tile_meters == w.tile_meters);
    CHECK(back.ground_range_max == w.ground_range_max);

    WorldSpec bad = w;
    bad.extent = 10000.0;  // < 10x the 3200 m tile
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = w;
    bad.tile_meters = {{18, 200.0}, {16, 900.0}};  // breaks the fixed 4x ratio
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("field labels are deterministic across instances") {
    WorldSpec w = small_world(77);
    WorldField f1(w), f2(w);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, w.extent);
    for (int i = 0; i < 500; ++i) {
        const double x = u(rng), y = u(rng);
        CHECK(f1.class_at(x, y) == f2.class_at(x, y));
        CHECK(f1.value_at(x, y) == f2.value_at(x, y));
    }
    WorldField f3(small_world(78));
    int diff = 0;
    for (int i = 0; i < 500; ++i) {
        const double x = u(rng), y = u(rng);
        if (f1.class_at(x, y) != f3.class_at(x, y)) ++diff;
    }
    CHECK(diff > 0);  // a different seed is a different world
}

TEST_CASE("class histogram: every class covers at least 2% of the world") {
    WorldSpec w = small_world();
    WorldField field(w);
    std::vector<int> counts(static_cast<size_t>(w.class_count), 0);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, w.extent);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const int c = field.class_at(u(rng), u(rng));
        REQUIRE(c >= 0);
        REQUIRE(c < w.class_count);
        ++counts[static_cast<size_t>(c)];
    }
    for (int c = 0; c < w.class_count; ++c) {
        INFO("class ", scene_class_name(c), " frequency ",
             counts[static_cast<size_t>(c)] / static_cast<double>(n));
        CHECK(counts[static_cast<size_t>(c)] >= n / 50);
    }
}

TEST_CASE("points one meter apart nearly always share a label") {
    WorldSpec w = small_world();
    WorldField field(w);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(1.0, w.extent - 1.0);
    std::uniform_real_distribution<double> ang(0.0, 2 * 3.14159265358979);
    const int n = 20000;
    int same = 0;
    for (int i = 0; i < n; ++i) {
        const double x = u(rng), y = u(rng), a = ang(rng);
        if (field.class_at(x, y) == field.class_at(x + std::cos(a), y + std::sin(a))) ++same;
    }
    CHECK(same >= n * 99 / 100);
}

TEST_CASE("render_pair is bitwise deterministic and centered") {
    WorldSpec w = small_world(4);
    WorldField field(w);
    Sample a = render_pair(field, 20000.0, 21000.0, w.image_side, 5);
    Sample b = render_pair(field, 20000.0, 21000.0, w.image_side, 5);
    CHECK(a.scene_class == field.class_at(20000.0, 21000.0));
    auto eq = [](const Tensor& p, const Tensor& q) {
        auto pd = p.data(), qd = q.data();
        return std::equal(pd.begin(), pd.end(), qd.begin());
    };
    CHECK(eq(a.ground, b.ground));
    for (int z : {18, 16, 14}) CHECK(eq(a.aerial.at(z), b.aerial.at(z)));

    // the aerial tile is centered: its middle pixel is the class color region
    // of the location itself, so rendering at a shifted center must differ
    Sample c = render_pair(field, 23000.0, 21000.0, w.image_side, 6);
    CHECK_FALSE(eq(a.aerial.at(18), c.aerial.at(18)));

    // boundary guard
    CHECK_THROWS_AS(render_pair(field, 100.0, 21000.0, w.image_side, 7), DataError);
}

TEST_CASE("different-class regions get different aerial dominant colors") {
    WorldSpec w = small_world(1);
    WorldField field(w);
    // find one location per class, far from the boundary
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(w.margin(), w.extent - w.margin());
    std::vector<std::array<double, 2>> where(static_cast<size_t>(w.class_count),
                                             {{-1.0, -1.0}});
    int found = 0;
    while (found < w.class_count) {
        const double x = u(rng), y = u(rng);
        auto& slot = where[static_cast<size_t>(field.class_at(x, y))];
        if (slot[0] < 0) {
            slot = {{x, y}};
            ++found;
        }
    }
    std::vector<std::array<double, 3>> mean_color;
    for (int c = 0; c < w.class_count; ++c) {
        Tensor t = render_aerial(field, where[static_cast<size_t>(c)][0],
                                 where[static_cast<size_t>(c)][1], 200.0, w.image_side);
        auto d = t.data();
        const size_t plane = d.size() / 3;
        std::array<double, 3> m{};
        for (int ch = 0; ch < 3; ++ch)
            for (size_t i = 0; i < plane; ++i) m[static_cast<size_t>(ch)] += d[ch * plane + i];
        for (auto& v : m) v /= static_cast<double>(plane);
        mean_color.push_back(m);
    }
    for (int a = 0; a < w.class_count; ++a)
        for (int b = a + 1; b < w.class_count; ++b) {
            double dist = 0;
            for (int ch = 0; ch < 3; ++ch)
                dist += std::abs(mean_color[static_cast<size_t>(a)][static_cast<size_t>(ch)] -
                                 mean_color[static_cast<size_t>(b)][static_cast<size_t>(ch)]);
            INFO("classes ", scene_class_name(a), " vs ", scene_class_name(b));
            CHECK(dist > 0.05);
        }
}

TEST_CASE("zoom pyramid is consistent: finer tile correlates with the coarser center") {
    WorldSpec w = small_world(6);
    w.image_side = 64;
    WorldField field(w);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(w.margin(), w.extent - w.margin());
    double corr_sum_18_16 = 0, corr_sum_16_14 = 0;
    const int trials = 10;
    for (int i = 0; i < trials; ++i) {
        const double x = u(rng), y = u(rng);
        Tensor z18 = render_aerial(field, x, y, 200.0, 64);
        Tensor z16 = render_aerial(field, x, y, 800.0, 64);
        Tensor z14 = render_aerial(field, x, y, 3200.0, 64);
        auto down18 = box_down(z18, 4);          // 16x16 summary of the 200 m view
        auto crop16 = center_crop(z16, 4);       // central 200 m of the 800 m view
        corr_sum_18_16 += pearson(down18, crop16);
        auto down16 = box_down(z16, 4);
        auto crop14 = center_crop(z14, 4);
        corr_sum_16_14 += pearson(down16, crop14);
    }
    CHECK(corr_sum_18_16 / trials > 0.5);
    CHECK(corr_sum_16_14 / trials > 0.5);
}

TEST_CASE("a linear probe on raw ground pixels recovers the scene class") {
    WorldSpec w = small_world(3);
    w.image_side = 32;
    WorldField field(w);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(w.margin(), w.extent - w.margin());

    const int n_train = 2000, n_test = 2000;
    const size_t dim = static_cast<size_t>(3) * 32 * 32;
    std::vector<std::vector<float>> centroid(static_cast<size_t>(w.class_count),
                                             std::vector<float>(dim, 0.0f));
    std::vector<int> counts(static_cast<size_t>(w.class_count), 0);
    for (int i = 0; i < n_train; ++i) {
        const double x = u(rng), y = u(rng);
        const int c = field.class_at(x, y);
        Tensor img = render_ground(field, x, y, 32);
        auto d = img.data();
        auto& ctr = centroid[static_cast<size_t>(c)];
        for (size_t j = 0; j < dim; ++j) ctr[j] += d[j];
        ++counts[static_cast<size_t>(c)];
    }
    for (int c = 0; c < w.class_count; ++c) {
        REQUIRE(counts[static_cast<size_t>(c)] > 0);
        for (auto& v : centroid[static_cast<size_t>(c)])
            v /= static_cast<float>(counts[static_cast<size_t>(c)]);
    }

    int correct = 0;
    for (int i = 0; i < n_test; ++i) {
        const double x = u(rng), y = u(rng);
        const int truth = field.class_at(x, y);
        Tensor img = render_ground(field, x, y, 32);
        auto d = img.data();
        int best = -1;
        double best_dist = 1e300;
        for (int c = 0; c < w.class_count; ++c) {
            double acc = 0;
            const auto& ctr = centroid[static_cast<size_t>(c)];
            for (size_t j = 0; j < dim; ++j) {
                const double diff = d[j] - ctr[j];
                acc += diff * diff;
            }
            if (acc < best_dist) {
                best_dist = acc;
                best = c;
            }
        }
        if (best == truth) ++correct;
    }
    INFO("probe accuracy ", correct / static_cast<double>(n_test));
    CHECK(correct >= n_test * 70 / 100);
}

TEST_CASE("scale-ambiguity variant draws varying context radii but stays deterministic") {
    WorldSpec w = small_world(12);
    w.ground_range_min = 100.0;
    w.ground_range_max = 400.0;
    w.validate();
    WorldField field(w);
    Tensor a = render_ground(field, 20000.0, 20000.0, 32);
    Tensor b = render_ground(field, 20000.0, 20000.0, 32);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("generate_dataset writes the declared files, splits and identical rerun bytes") {
    WorldSpec w = small_world(14);
    TempDir d1("gen1"), d2("gen2");
    const fs::path m1 = generate_dataset(w, 10, 2, 2, d1.path);
    const fs::path m2 = generate_dataset(w, 10, 2, 2, d2.path);
    CHECK(file_sha256(m1) == file_sha256(m2));
    CHECK(file_sha256(d1.path / "ground_00003.ppm") == file_sha256(d2.path / "ground_00003.ppm"));

    Manifest man = Manifest::load(m1);
    CHECK(man.size() == 10);
    CHECK(man.split_indices("train").size() == 6);
    CHECK(man.split_indices("val").size() == 2);
    CHECK(man.split_indices("test").size() == 2);
    int ground_files = 0, aerial_files = 0;
    for (const auto& e : fs::directory_iterator(d1.path)) {
        const auto name = e.path().filename().string();
        if (name.rfind("ground_", 0) == 0) ++ground_files;
        if (name.rfind("aerial_", 0) == 0) ++aerial_files;
    }
    CHECK(ground_files == 10);
    CHECK(aerial_files == 30);

    // ids round-trip and classes match the field
    WorldField field(w);
    for (size_t i = 0; i < man.size(); ++i) {
        const auto& r = man.record(i);
        CHECK(r.scene_class == field.class_at(r.x, r.y));
        CHECK(man.index_of_id(r.id) == i);
    }

    // region restriction confines the samples
    TempDir d3("gen3");
    const fs::path m3 =
        generate_dataset(w, 10, 2, 2, d3.path, std::array<double, 4>{18000, 19000, 2000, 1500});
    Manifest man3 = Manifest::load(m3);
    for (const auto& r : man3.records()) {
        CHECK(r.x >= 18000.0);
        CHECK(r.x <= 20000.0);
        CHECK(r.y >= 19000.0);
        CHECK(r.y <= 20500.0);
    }

    CHECK_THROWS_AS(generate_dataset(w, 4, 2, 2, d1.path), UsageError);
}

TEST_CASE("manifest ingestion errors are specific") {
    WorldSpec w = small_world(15);
    TempDir d("man");
    const fs::path mpath = generate_dataset(w, 6, 1, 1, d.path);

    SUBCASE("missing asset names the path") {
        fs::remove(d.path / "ground_00002.ppm");
        try {
            Manifest::load(mpath);
            FAIL("expected MissingAssetError");
        } catch (const MissingAssetError& e) {
            CHECK(std::string(e.what()).find("ground_00002.ppm") != std::string::npos);
        }
    }

    SUBCASE("malformed row is a parse error") {
        std::ofstream(mpath, std::ios::app) << "not,a,valid,row\n";
        CHECK_THROWS_AS(Manifest::load(mpath), ParseError);
    }

    SUBCASE("class blocklist filters records") {
        Manifest all = Manifest::load(mpath);
        std::set<int> block = {all.record(0).scene_class};
        Manifest filtered = Manifest::load(mpath, &block);
        CHECK(filtered.size() < all.size());
        for (const auto& r : filtered.records()) CHECK(block.count(r.scene_class) == 0);
    }
}
