#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cvloc/errors.hpp"
#include "cvloc/image.hpp"
#include "cvloc/manifest.hpp"
#include "cvloc/rng.hpp"
#include "cvloc/trainer.hpp"
#include "cvloc/viz.hpp"

using namespace cvloc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cvloc_viz_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ReferenceIndex make_index(GridSpec grid, std::vector<float> feats, int d) {
    return ReferenceIndex(grid, d, std::move(feats), {}, {18});
}

// Ground fixture with optional duplicated images (for activation ties).
fs::path write_ground_fixture(const fs::path& dir, int n, int side, int duplicate_of = -1) {
    std::ofstream mf(dir / "manifest.csv");
    mf << "id,x,y,class,split,ground,aerial_z18,aerial_z16,aerial_z14\n";
    for (int i = 0; i < n; ++i) {
        char gname[32];
        std::snprintf(gname, sizeof(gname), "g_%03d.ppm", i);
        ImageU8 img;
        img.width = img.height = side;
        img.rgb.resize(static_cast<size_t>(side) * side * 3);
        uint64_t h = hash_combine(777, static_cast<uint64_t>(
                                           duplicate_of >= 0 && i == n - 1 ? duplicate_of : i));
        for (auto& v : img.rgb) {
            h = splitmix64(h);
            v = static_cast<uint8_t>(h % 256);
        }
        write_ppm(dir / gname, img);
        mf << i << ",100.0,100.0," << (i % 4) << ",train," << gname << "," << gname << ","
           << gname << "," << gname << "\n";
    }
    mf.close();
    return dir / "manifest.csv";
}

Checkpoint ground_checkpoint(int side, int feature_dim, uint64_t seed) {
    ArchSpec a;
    a.input_side = side;
    a.conv_blocks = {4};
    a.fc_hidden = 8;
    a.feature_dim = feature_dim;
    Checkpoint ck;
    ck.arch = a;
    ck.kind = "ground";
    ck.means["g"] = {0.5f, 0.5f, 0.5f};
    ck.params = Network(a, seed).params().clone();
    return ck;
}

}  // namespace

TEST_CASE("heat_color endpoints and midpoint") {
    CHECK(heat_color(0.0) == std::array<uint8_t, 3>{255, 0, 0});
    CHECK(heat_color(0.5) == std::array<uint8_t, 3>{128, 128, 128});
    CHECK(heat_color(1.0) == std::array<uint8_t, 3>{0, 0, 255});
    CHECK(heat_color(-3.0) == heat_color(0.0));
    CHECK(heat_color(9.0) == heat_color(1.0));
    // red decreases and blue increases along the ramp
    CHECK(heat_color(0.25)[0] > heat_color(0.75)[0]);
    CHECK(heat_color(0.25)[2] < heat_color(0.75)[2]);
}

TEST_CASE("distance heatmap paints the nearest cell red and the farthest blue") {
    GridSpec grid{0.0, 0.0, 100.0, 3, 2};
    // D=1 features 0..5 in cell order; query 0 -> cell 0 nearest, cell 5 farthest
    std::vector<float> feats = {0, 1, 2, 3, 4, 5};
    ReferenceIndex index = make_index(grid, feats, 1);
    std::vector<float> q = {0.0f};
    Raster r = distance_heatmap(index, q);
    CHECK(r.width == 3);
    CHECK(r.height == 2);
    CHECK(r.pixel(0, 0) == std::array<uint8_t, 3>{255, 0, 0});
    CHECK(r.pixel(1, 2) == std::array<uint8_t, 3>{0, 0, 255});
    // intermediate cells sit strictly between the endpoints in blue
    CHECK(r.pixel(0, 1)[2] > 0);
    CHECK(r.pixel(0, 1)[2] < 255);
}

TEST_CASE("constant distance field maps every cell to the midpoint color") {
    GridSpec grid{0.0, 0.0, 50.0, 4, 4};
    std::vector<float> feats(16, 2.5f);
    ReferenceIndex index = make_index(grid, feats, 1);
    std::vector<float> q = {1.0f};
    Raster r = distance_heatmap(index, q);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(r.pixel(i, j) == std::array<uint8_t, 3>{128, 128, 128});
}

TEST_CASE("truth location draws a black 8-neighbor ring, not on the cell itself") {
    GridSpec grid{0.0, 0.0, 10.0, 5, 5};
    std::vector<float> feats(25);
    for (int i = 0; i < 25; ++i) feats[static_cast<size_t>(i)] = static_cast<float>(i);
    ReferenceIndex index = make_index(grid, feats, 1);
    std::vector<float> q = {0.0f};
    auto center = grid.center(12);  // row 2, col 2
    Raster r = distance_heatmap(index, q, std::array<double, 2>{center[0], center[1]});
    for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
            auto px = r.pixel(2 + di, 2 + dj);
            if (di == 0 && dj == 0) {
                CHECK(px != std::array<uint8_t, 3>{0, 0, 0});
            } else {
                CHECK(px == std::array<uint8_t, 3>{0, 0, 0});
            }
        }
    // corner truth clips the ring without crashing
    auto c0 = grid.center(0);
    Raster r2 = distance_heatmap(index, q, std::array<double, 2>{c0[0], c0[1]});
    CHECK(r2.pixel(0, 1) == std::array<uint8_t, 3>{0, 0, 0});
    CHECK(r2.pixel(1, 1) == std::array<uint8_t, 3>{0, 0, 0});
}

TEST_CASE("query dimension mismatch is a shape error") {
    ReferenceIndex index = make_index({0.0, 0.0, 10.0, 2, 2}, std::vector<float>(8, 0.0f), 2);
    std::vector<float> q = {1.0f, 2.0f, 3.0f};
    CHECK_THROWS_AS(distance_heatmap(index, q), ShapeError);
}

TEST_CASE("raster files: P6 payload and the 5-line georef sidecar") {
    TempDir d("raster");
    GridSpec grid{12.5, -7.0, 30.0, 3, 2};
    Raster r;
    r.width = 3;
    r.height = 2;
    r.georef = grid;
    r.rgb = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150, 160, 170, 180};
    r.save_ppm(d.path / "map.ppm");
    r.save_georef(d.path / "map.georef");

    std::ifstream is(d.path / "map.ppm", std::ios::binary);
    std::string magic, wh1, wh2, maxv;
    is >> magic >> wh1 >> wh2 >> maxv;
    CHECK(magic == "P6");
    CHECK(wh1 == "3");
    CHECK(wh2 == "2");
    CHECK(maxv == "255");
    is.get();  // single whitespace after the header
    std::vector<uint8_t> payload(18);
    is.read(reinterpret_cast<char*>(payload.data()), 18);
    CHECK(is.gcount() == 18);
    CHECK(payload == r.rgb);

    std::ifstream gs(d.path / "map.georef");
    std::vector<std::string> lines;
    for (std::string line; std::getline(gs, line);) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(std::stod(lines[0]) == doctest::Approx(12.5));
    CHECK(std::stod(lines[1]) == doctest::Approx(-7.0));
    CHECK(std::stod(lines[2]) == doctest::Approx(30.0));
    CHECK(lines[3] == "3");
    CHECK(lines[4] == "2");
}

TEST_CASE("false-color map rescales each channel independently") {
    GridSpec grid{0.0, 0.0, 10.0, 4, 1};
    // D=4: coord 0 drives red with means 0..3, coord 1&2 average to a
    // green ramp 10..40 step 10, coord 3 constant (blue degenerate).
    std::vector<float> feats = {
        0.0f, 8.0f, 12.0f, 7.0f,  //
        1.0f, 18.0f, 22.0f, 7.0f,  //
        2.0f, 28.0f, 32.0f, 7.0f,  //
        3.0f, 38.0f, 42.0f, 7.0f,  //
    };
    ReferenceIndex index = make_index(grid, feats, 4);
    CategoryGroups g;
    g.red = {0};
    g.green = {1, 2};
    g.blue = {3};
    Raster r = falsecolor_map(index, g);
    CHECK(r.pixel(0, 0)[0] == 0);
    CHECK(r.pixel(0, 1)[0] == 85);
    CHECK(r.pixel(0, 2)[0] == 170);
    CHECK(r.pixel(0, 3)[0] == 255);
    CHECK(r.pixel(0, 0)[1] == 0);
    CHECK(r.pixel(0, 3)[1] == 255);
    for (int j = 0; j < 4; ++j) CHECK(r.pixel(0, j)[2] == 0);  // constant channel
}

TEST_CASE("false-color map rejects empty groups and bad coordinates") {
    ReferenceIndex index = make_index({0.0, 0.0, 10.0, 2, 2}, std::vector<float>(16, 1.0f), 4);
    CategoryGroups empty_green;
    empty_green.red = {0};
    empty_green.blue = {1};
    CHECK_THROWS_AS(falsecolor_map(index, empty_green), DataError);

    CategoryGroups out_of_range;
    out_of_range.red = {0};
    out_of_range.green = {1};
    out_of_range.blue = {4};
    CHECK_THROWS_AS(falsecolor_map(index, out_of_range), DataError);
}

TEST_CASE("default synth groups cover the 8 classes without overlap") {
    auto g = CategoryGroups::default_for_synth();
    std::vector<int> all;
    for (const auto* v : {&g.red, &g.green, &g.blue}) all.insert(all.end(), v->begin(), v->end());
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("max-activation report matches an independent per-image ranking") {
    TempDir d("maxact");
    Manifest m = Manifest::load(write_ground_fixture(d.path, 9, 16));
    Checkpoint ck = ground_checkpoint(16, 6, 33);

    auto report = max_activation_report(ck, m, "train", {1, 4}, 3);
    REQUIRE(report.size() == 6);

    // independent path: one image at a time, own sort
    Network net = ck.to_network();
    const auto mean = ck.means.at("g");
    std::vector<std::vector<double>> acts(9);
    for (size_t i = 0; i < 9; ++i) {
        Tensor t = m.load_ground(i);
        Tensor x({1, 3, 16, 16});
        auto td = t.data();
        auto xd = x.data();
        // channel-major layout: plane index gives the channel directly
        for (size_t q = 0; q < td.size(); ++q) xd[q] = td[q] - mean[q / (16 * 16)];
        Tensor f = extract_features(net, x);
        auto fd = f.data();
        acts[i].assign(fd.begin(), fd.end());
    }
    size_t at = 0;
    for (int coord : {1, 4}) {
        std::vector<std::pair<double, uint64_t>> order;
        for (size_t i = 0; i < 9; ++i)
            order.emplace_back(acts[i][static_cast<size_t>(coord)], m.record(i).id);
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int r = 0; r < 3; ++r, ++at) {
            CHECK(report[at].coordinate == coord);
            CHECK(report[at].rank == r + 1);
            CHECK(report[at].image_id == order[static_cast<size_t>(r)].second);
            CHECK(report[at].activation ==
                  doctest::Approx(order[static_cast<size_t>(r)].first).epsilon(1e-5));
        }
    }
}

TEST_CASE("max-activation ties resolve by ascending image id") {
    TempDir d("maxtie");
    // last image duplicates image 2's pixels -> identical activations
    Manifest m = Manifest::load(write_ground_fixture(d.path, 6, 16, 2));
    Checkpoint ck = ground_checkpoint(16, 4, 17);
    auto report = max_activation_report(ck, m, "train", {0}, 6);
    REQUIRE(report.size() == 6);
    size_t pos2 = 0, pos5 = 0;
    for (size_t i = 0; i < report.size(); ++i) {
        if (report[i].image_id == 2) pos2 = i;
        if (report[i].image_id == 5) pos5 = i;
    }
    CHECK(report[pos2].activation == report[pos5].activation);
    CHECK(pos2 + 1 == pos5);  // equal scores, lower id first
}

TEST_CASE("max-activation input validation") {
    TempDir d("maxval");
    Manifest m = Manifest::load(write_ground_fixture(d.path, 4, 16));
    Checkpoint ck = ground_checkpoint(16, 4, 3);
    CHECK_THROWS_AS(max_activation_report(ck, m, "train", {7}, 2), DataError);
    CHECK_THROWS_AS(max_activation_report(ck, m, "val", {0}, 2), DataError);
    Checkpoint aerial = ck;
    aerial.kind = "aerial";
    aerial.zooms = {18};
    aerial.means["18"] = aerial.means["g"];
    CHECK_THROWS_AS(max_activation_report(aerial, m, "train", {0}, 2), DataError);
}

TEST_CASE("max-activation CSV format") {
    TempDir d("maxcsv");
    std::vector<MaxActivation> rep = {{2, 1, 40, 1.5}, {2, 2, 12, 0.25}};
    save_max_activation_csv(rep, d.path / "maxact.csv");
    std::ifstream is(d.path / "maxact.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "coordinate,rank,image_id,activation");
    std::getline(is, line);
    CHECK(line.rfind("2,1,40,", 0) == 0);
    std::getline(is, line);
    CHECK(line.rfind("2,2,12,", 0) == 0);
}

TEST_CASE("fine heatmap: shape, georef, determinism, and bounds") {
    WorldSpec w;
    w.seed = 5;
    w.image_side = 16;
    Checkpoint ck = ground_checkpoint(16, 6, 21);
    ck.kind = "aerial";
    ck.zooms = {18};
    ck.means["18"] = {0.4f, 0.4f, 0.4f};

    std::vector<float> q(6, 0.1f);
    Raster r = fine_heatmap(ck, w, 20000.0, 20000.0, 200.0, 50.0, 2, q);
    CHECK(r.width == 5);
    CHECK(r.height == 5);
    CHECK(r.georef.cell == doctest::Approx(50.0));
    CHECK(r.georef.cols == 5);
    // grid is centered on the requested point
    CHECK(r.georef.x0 + 2.5 * 50.0 == doctest::Approx(20000.0));
    CHECK(r.georef.y0 + 2.5 * 50.0 == doctest::Approx(20000.0));

    Raster r2 = fine_heatmap(ck, w, 20000.0, 20000.0, 200.0, 50.0, 2, q);
    CHECK(r.rgb == r2.rgb);

    // a different query recolors the neighborhood
    std::vector<float> q2(6, -3.0f);
    Raster r3 = fine_heatmap(ck, w, 20000.0, 20000.0, 200.0, 50.0, 2, q2);
    CHECK(r.rgb != r3.rgb);

    CHECK_THROWS_AS(fine_heatmap(ck, w, 50.0, 50.0, 200.0, 50.0, 2, q), DataError);
    CHECK_THROWS_AS(fine_heatmap(ck, w, 20000.0, 20000.0, -1.0, 50.0, 2, q), DataError);
    std::vector<float> bad(5, 0.0f);
    CHECK_THROWS_AS(fine_heatmap(ck, w, 20000.0, 20000.0, 200.0, 50.0, 2, bad), ShapeError);
}
