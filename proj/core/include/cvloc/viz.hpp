#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvloc/geoindex.hpp"
#include "cvloc/manifest.hpp"

namespace cvloc {

/// Georeferenced RGB raster, one pixel per grid cell.
struct Raster {
    int width = 0, height = 0;
    std::vector<uint8_t> rgb;  // interleaved
    GridSpec georef;

    void save_ppm(const std::filesystem::path& path) const;
    /// 5-line sidecar: x0, y0, cell, cols, rows.
    void save_georef(const std::filesystem::path& path) const;
    std::array<uint8_t, 3> pixel(int row, int col) const;
};

/// Linear red -> gray -> blue colormap; t in [0,1], red end at 0.
std::array<uint8_t, 3> heat_color(double t);

/// Embedding-coordinate groups driving the false-color channels.
struct CategoryGroups {
    std::vector<int> red;    // urban-like coordinates
    std::vector<int> green;  // rural-like
    std::vector<int> blue;   // water-related
    /// urban+suburban / rural+forest+desert+mountain / water+coast for
    /// the 8-class synthetic world.
    static CategoryGroups default_for_synth();
};

/// Per-cell distance to the query, affinely mapped so the minimum is
/// the red end and the maximum the blue end; a constant field maps to
/// the midpoint color. The optional truth location gets a black ring.
Raster distance_heatmap(const ReferenceIndex& index, std::span<const float> query_feature,
                        std::optional<std::array<double, 2>> truth_location = std::nullopt);

/// Sliding-window distance map around a center: samples a grid of
/// nearby locations, extracts the feature of the window at each, and
/// overlays the distance heat (alpha) on the aerial rendering.
/// Grid: (2*half_steps+1)^2 offsets spaced stride_m apart.
Raster fine_heatmap(const Checkpoint& model, const WorldSpec& world, double center_x,
                    double center_y, double window_m, double stride_m, int half_steps,
                    std::span<const float> query_feature, double alpha = 0.6);

/// Channel value = mean activation over the group's coordinates, then
/// each channel affinely rescaled over the raster to [0,1] and
/// quantized (a constant channel maps to 0).
Raster falsecolor_map(const ReferenceIndex& index, const CategoryGroups& groups);

struct MaxActivation {
    int coordinate = 0;
    int rank = 0;  // 1-based within the coordinate's list
    uint64_t image_id = 0;
    double activation = 0.0;
};

/// For each requested embedding coordinate, the k highest-activation
/// ground images of the split (descending, ties by ascending id).
std::vector<MaxActivation> max_activation_report(const Checkpoint& ground,
                                                 const Manifest& manifest,
                                                 const std::string& split,
                                                 const std::vector<int>& coordinates, int k);

void save_max_activation_csv(const std::vector<MaxActivation>& report,
                             const std::filesystem::path& path);

}  // namespace cvloc
