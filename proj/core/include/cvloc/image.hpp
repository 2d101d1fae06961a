#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cvloc/tensor.hpp"

namespace cvloc {

/// Interleaved 8-bit RGB image.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_ppm(const std::filesystem::path& path);

/// [3,H,W] float in [0,1] <-> interleaved bytes.
Tensor to_chw(const ImageU8& img);
ImageU8 from_chw(const Tensor& t);

}  // namespace cvloc
