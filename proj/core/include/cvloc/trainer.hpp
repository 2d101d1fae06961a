#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cvloc/manifest.hpp"
#include "cvloc/models.hpp"

namespace cvloc {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs = 30;
    uint64_t seed = 1;
    int eval_every = 100;  // steps between validation evals
    int target_zoom = 18;  // single-scale aerial zoom

    void validate() const;
};

struct TrainLog {
    std::vector<std::pair<int, double>> loss;        // (step, training loss)
    std::vector<std::pair<int, double>> val_metric;  // (step, validation metric)
    std::vector<double> epoch_seconds;
    int best_step = -1;
    double best_metric = 0.0;

    /// Writes loss.csv (step,loss) and val.csv (step,val_distance).
    void save(const std::filesystem::path& dir) const;
};

/// Self-describing weights file: CVWT parameters plus arch text,
/// model kind, zoom set and input channel means in the meta block.
struct Checkpoint {
    ArchSpec arch;
    std::string kind;         // "ground" | "aerial" | "multi"
    std::vector<int> zooms;   // aerial zooms consumed (empty for ground)
    /// channel means keyed "g" for ground input, zoom number for tiles
    std::map<std::string, std::array<float, 3>> means;
    ParamStore params;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    Network to_network() const;
    MultiScaleNet to_multiscale() const;
};

/// Applies [0,1] scaling and per-channel mean subtraction while
/// assembling a batch from cached 8-bit CHW images.
Tensor assemble_batch(const std::vector<std::vector<uint8_t>>& cache,
                      const std::vector<size_t>& rows, int side,
                      const std::array<float, 3>& mean);

/// Stage 1: scene-classification pretraining of the ground extractor.
Checkpoint pretrain_ground(const Manifest& manifest, const ArchSpec& arch,
                           const TrainConfig& cfg, TrainLog* log = nullptr);

/// Frozen-teacher feature table: one embedding per manifest record,
/// indexed by record position.
std::vector<std::vector<float>> precompute_targets(const Checkpoint& ground,
                                                   const Manifest& manifest);

/// Stage 2a: single-scale cross-view training of the aerial extractor,
/// initialized from the ground extractor's parameters.
Checkpoint train_crossview_single(const Manifest& manifest,
                                  const std::vector<std::vector<float>>& targets,
                                  const Checkpoint& ground, const TrainConfig& cfg,
                                  TrainLog* log = nullptr);

/// Stage 2b: multi-scale model, subnets initialized from the best
/// single-scale aerial extractor, fusion layer seeded-random, trained
/// end to end against the same targets.
Checkpoint train_crossview_multi(const Manifest& manifest,
                                 const std::vector<std::vector<float>>& targets,
                                 const Checkpoint& aerial_best, const TrainConfig& cfg,
                                 TrainLog* log = nullptr);

/// Mean unsquared feature distance of a checkpoint's aerial features
/// to the cached targets over one manifest split.
double crossview_val_distance(const Checkpoint& model, const Manifest& manifest,
                              const std::vector<std::vector<float>>& targets,
                              const std::string& split);

/// Classification accuracy of a ground checkpoint on one split.
double classification_accuracy(const Checkpoint& ground, const Manifest& manifest,
                               const std::string& split);

}  // namespace cvloc
