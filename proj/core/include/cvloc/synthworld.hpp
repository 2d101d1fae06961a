#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvloc/tensor.hpp"

namespace cvloc {

/// Procedural paired-imagery world. Coordinates are planar meters in
/// [0, extent]^2. Everything downstream is a pure function of the
/// spec, so identical specs reproduce identical bytes.
struct WorldSpec {
    uint64_t seed = 1;
    double extent = 40000.0;
    int class_count = 8;
    int noise_octaves = 4;
    /// zoom level -> linear ground coverage of one tile, meters.
    /// Adjacent configured levels (2 zoom steps) keep a fixed 4x ratio.
    std::map<int, double> tile_meters = {{18, 200.0}, {16, 800.0}, {14, 3200.0}};
    /// Ground-view context radius range, meters. Equal min/max gives a
    /// fixed radius; a spread gives the scale-ambiguity variant.
    double ground_range_min = 100.0;
    double ground_range_max = 100.0;
    int image_side = 64;

    void validate() const;
    double max_tile_meters() const;
    /// Minimum distance from the world edge for a renderable location.
    double margin() const { return max_tile_meters() / 2.0; }

    std::string to_text() const;
    static WorldSpec from_text(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static WorldSpec load(const std::filesystem::path& path);
};

/// Scene class indices used when class_count == 8.
enum SceneClass : int {
    kWater = 0,
    kCoast = 1,
    kRural = 2,
    kForest = 3,
    kDesert = 4,
    kSuburban = 5,
    kUrban = 6,
    kMountain = 7,
};

const char* scene_class_name(int c);

/// Deterministic scalar field over the world: multi-octave value
/// noise thresholded into class bands at quantile thresholds (water
/// is the lowest band, coast the one adjacent to it).
class WorldField {
  public:
    explicit WorldField(const WorldSpec& spec);

    int class_at(double x, double y) const;
    double value_at(double x, double y) const;   // smooth field in ~[0,1]
    double texture_at(double x, double y) const; // fine texture in ~[0,1]

    const WorldSpec& spec() const { return spec_; }

  private:
    WorldSpec spec_;
    std::vector<double> thresholds_;  // class_count - 1 ascending values
};

/// One matched ground/aerial record.
struct Sample {
    uint64_t id = 0;
    double x = 0.0, y = 0.0;
    int scene_class = 0;
    Tensor ground;                 // [3,S,S] in [0,1]
    std::map<int, Tensor> aerial;  // zoom -> [3,S,S]
};

/// Renders one aerial tile of the given coverage centered at (x, y).
Tensor render_aerial(const WorldField& field, double x, double y, double coverage_m, int side);

/// Renders the ground-level view at (x, y). The context radius is
/// drawn deterministically from the spec's ground range.
Tensor render_ground(const WorldField& field, double x, double y, int side);

/// Ground image plus aerial tiles at every configured zoom.
Sample render_pair(const WorldField& field, double x, double y, int side, uint64_t id = 0);

struct ManifestRecord;

/// Samples n seeded uniform locations, renders and writes all images
/// plus manifest.csv and world.txt under out_dir. Splits are assigned
/// by seeded shuffle: holdout_val to "val", holdout_test to "test",
/// the rest to "train". Returns the manifest path. `region`
/// ({x0, y0, width, height}) restricts sampling to a sub-area, e.g.
/// the footprint of the reference grid the dataset will be evaluated
/// against; the world-boundary margin still applies.
std::filesystem::path generate_dataset(const WorldSpec& spec, int n, int holdout_val,
                                       int holdout_test, const std::filesystem::path& out_dir,
                                       const std::optional<std::array<double, 4>>& region = {});

}  // namespace cvloc
