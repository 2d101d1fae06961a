#include "cvloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "cvloc/errors.hpp"

namespace cvloc {

void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
    if (static_cast<size_t>(img.width) * img.height * 3 != img.rgb.size())
        throw ShapeError("write_ppm: pixel buffer does not match dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.rgb.data()),
             static_cast<std::streamsize>(img.rgb.size()));
    if (!os) throw DataError("write failed for '" + path.string() + "'");
}

ImageU8 read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingAssetError("cannot open '" + path.string() + "'");
    std::string magic;
    is >> magic;
    if (magic != "P6") throw ParseError("'" + path.string() + "' is not a P6 PPM");
    int w, h, maxval;
    is >> w >> h >> maxval;
    if (!is || w <= 0 || h <= 0 || maxval != 255)
        throw ParseError("'" + path.string() + "': bad PPM header");
    is.get();  // single whitespace after maxval
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.rgb.resize(static_cast<size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
    if (!is) throw ParseError("'" + path.string() + "': truncated pixel data");
    return img;
}

Tensor to_chw(const ImageU8& img) {
    Tensor t({3, img.height, img.width});
    auto d = t.data();
    const int64_t plane = static_cast<int64_t>(img.height) * img.width;
    for (int64_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c)
            d[c * plane + p] = static_cast<float>(img.rgb[p * 3 + c]) / 255.0f;
    return t;
}

ImageU8 from_chw(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw ShapeError("from_chw: expected [3,H,W], got " + t.shape_str());
    ImageU8 img;
    img.height = t.dim(1);
    img.width = t.dim(2);
    img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    auto d = t.data();
    const int64_t plane = static_cast<int64_t>(img.height) * img.width;
    for (int64_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) {
            const float v = std::clamp(d[c * plane + p], 0.0f, 1.0f);
            img.rgb[p * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
        }
    return img;
}

}  // namespace cvloc
