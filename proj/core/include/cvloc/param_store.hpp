#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "cvloc/tensor.hpp"

namespace cvloc {

/// Named collection of trainable tensors. Iteration order is the
/// lexicographic name order of std::map, which every consumer relies
/// on for determinism.
class ParamStore {
  public:
    void insert(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    size_t size() const { return entries_.size(); }

    std::map<std::string, Tensor>& entries() { return entries_; }
    const std::map<std::string, Tensor>& entries() const { return entries_; }

    void zero_grads();
    void set_requires_grad(bool v);

    /// Deep copy of every tensor (no shared storage, no grads).
    ParamStore clone() const;

    /// Bytewise equality of all data arrays (names and shapes too).
    bool data_equal(const ParamStore& other) const;

    uint64_t rng_seed = 0;
    /// Free-form UTF-8 header text (arch description, channel means).
    std::string meta;

    // File format "CVWT": magic, u16 version, u64 rng seed,
    // u32 meta length + meta bytes, u32 entry count; per entry
    // u16 name length + name, u8 rank, u32 dims, little-endian f32 data.
    void save(const std::filesystem::path& path) const;
    static ParamStore load(const std::filesystem::path& path);

  private:
    std::map<std::string, Tensor> entries_;
};

/// SHA-256 of a file's bytes; used to stamp indexes with the identity
/// of the checkpoint that produced them.
std::array<uint8_t, 32> file_sha256(const std::filesystem::path& path);

}  // namespace cvloc
