#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvloc/synthworld.hpp"
#include "cvloc/trainer.hpp"

namespace cvloc {

/// Regular grid of reference cells. Cell (row i, col j) has center
/// (x0 + (j+0.5)*cell, y0 + (i+0.5)*cell).
struct GridSpec {
    double x0 = 0.0, y0 = 0.0;
    double cell = 0.0;  // meters
    uint32_t cols = 0, rows = 0;

    uint32_t cell_count() const { return cols * rows; }
    std::array<double, 2> center(uint32_t index) const;
    /// Cell containing (x, y), or nullopt if outside the grid.
    std::optional<uint32_t> cell_of(double x, double y) const;
};

/// Dense aerial feature database over a grid: one feature per cell,
/// immutable after build.
class ReferenceIndex {
  public:
    ReferenceIndex() = default;
    ReferenceIndex(GridSpec grid, int feature_dim, std::vector<float> features,
                   std::array<uint8_t, 32> model_checksum, std::vector<int> zooms);

    const GridSpec& grid() const { return grid_; }
    int feature_dim() const { return feature_dim_; }
    uint32_t cell_count() const { return grid_.cell_count(); }
    std::span<const float> feature(uint32_t cell) const;
    std::span<const float> features() const { return features_; }
    const std::array<uint8_t, 32>& model_checksum() const { return checksum_; }
    const std::vector<int>& zooms() const { return zooms_; }

    // File format "CVIX": magic, u16 version, x0/y0/cell/reserved as
    // f64, cols/rows u32, D u32, 32-byte model checksum, then
    // row-major little-endian f32 features.
    void save(const std::filesystem::path& path) const;
    static ReferenceIndex load(const std::filesystem::path& path);

  private:
    GridSpec grid_;
    int feature_dim_ = 0;
    std::vector<float> features_;  // [rows*cols, D] row-major
    std::array<uint8_t, 32> checksum_{};
    std::vector<int> zooms_;  // not persisted; informational
};

/// Renders every cell's tiles from the world and extracts features
/// with the checkpoint's model (eval mode, deterministic).
/// `checkpoint_path` is hashed into the index's model checksum when
/// given.
ReferenceIndex build_index(const Checkpoint& model, const WorldSpec& world, const GridSpec& grid,
                           const std::filesystem::path& checkpoint_path = {});

struct LocalizationResult {
    uint64_t query_id = 0;
    /// (cell index, distance), ascending by (distance, cell index).
    std::vector<std::pair<uint32_t, double>> candidates;
    int truth_cell = -1;         // -1 when no truth given
    int rank = 0;                // 1-based; 0 when no truth
    double rank_percentile = 0;  // rank / cell count
};

/// Exact nearest-neighbor scan over all cells. When a truth location
/// is given, rank is the 1-based position of the truth cell under the
/// (distance, cell index) total order; with tolerance_radius > 0 every
/// cell whose center lies within the radius of the truth location
/// counts, and the best such rank is reported.
LocalizationResult localize(const ReferenceIndex& index, std::span<const float> query_feature,
                            std::optional<std::array<double, 2>> truth_location = std::nullopt,
                            double tolerance_radius = 0.0, uint64_t query_id = 0);

struct EvalQuery {
    uint64_t id = 0;
    std::vector<float> feature;
    double x = 0.0, y = 0.0;  // true location
};

struct AccuracyCurve {
    std::vector<double> thresholds;  // fractions of candidates searched
    std::vector<double> values;      // fraction of queries at rank pct <= t
    double value_at(double threshold) const;
};

struct EvalSummary {
    double top1pct = 0.0;
    double top5pct = 0.0;
    double top10pct = 0.0;
    double median_rank_percentile = 0.0;
    double auc = 0.0;  // trapezoid over the sampled curve, from (0,0)
    std::string to_json() const;
};

struct EvalResult {
    AccuracyCurve curve;
    EvalSummary summary;
    std::vector<double> rank_percentiles;  // per query, in input order
};

/// Runs localize for every query and aggregates the cumulative
/// accuracy curve. Queries with a truth location outside
/// the grid are rejected with an error naming the query.
EvalResult evaluate(const ReferenceIndex& index, const std::vector<EvalQuery>& queries,
                    double tolerance_radius = 0.0);

/// Writes threshold,accuracy rows.
void save_curve_csv(const AccuracyCurve& curve, const std::filesystem::path& path);

}  // namespace cvloc
