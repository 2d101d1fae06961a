#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cvloc/tensor.hpp"

namespace cvloc {

struct ManifestRecord {
    uint64_t id = 0;
    double x = 0.0, y = 0.0;
    int scene_class = 0;
    std::string split;  // train | val | test
    std::string ground_path;
    std::map<int, std::string> aerial_paths;  // zoom -> relative path
};

/// CSV manifest of matched pairs. Paths are relative to the manifest's
/// directory; asset existence is validated on open, decoding is lazy.
class Manifest {
  public:
    /// `class_blocklist`, when given, drops records of those classes
    /// (the stand-in for the indoor-image filter).
    static Manifest load(const std::filesystem::path& csv_path,
                         const std::set<int>* class_blocklist = nullptr);

    const std::vector<ManifestRecord>& records() const { return records_; }
    const ManifestRecord& record(size_t i) const { return records_.at(i); }
    size_t size() const { return records_.size(); }
    std::filesystem::path dir() const { return dir_; }

    std::vector<size_t> split_indices(const std::string& split) const;
    std::optional<size_t> index_of_id(uint64_t id) const;

    /// Decoded [3,S,S] tensors; S is validated against the first image.
    Tensor load_ground(size_t i) const;
    Tensor load_aerial(size_t i, int zoom) const;

    /// Image side, decoded on demand from the first record.
    int side() const;

    /// Zoom levels present in the header.
    const std::vector<int>& zooms() const { return zooms_; }

  private:
    std::filesystem::path dir_;
    std::vector<ManifestRecord> records_;
    std::vector<int> zooms_;
    mutable int side_ = 0;

    Tensor decode(const std::string& rel_path) const;
};

}  // namespace cvloc
