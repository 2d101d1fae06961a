#include "cvloc/manifest.hpp"

#include <fstream>
#include <sstream>

#include "cvloc/errors.hpp"
#include "cvloc/image.hpp"

namespace cvloc {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    return out;
}

}  // namespace

Manifest Manifest::load(const std::filesystem::path& csv_path,
                        const std::set<int>* class_blocklist) {
    std::ifstream is(csv_path);
    if (!is) throw MissingAssetError("cannot open manifest '" + csv_path.string() + "'");

    Manifest m;
    m.dir_ = csv_path.parent_path();

    std::string line;
    if (!std::getline(is, line)) throw ParseError("manifest '" + csv_path.string() + "' is empty");
    const auto header = split_csv_line(line);
    if (header.size() < 6 || header[0] != "id" || header[1] != "x" || header[2] != "y" ||
        header[3] != "class" || header[4] != "split" || header[5] != "ground")
        throw ParseError("manifest '" + csv_path.string() + "': unexpected header");
    for (size_t i = 6; i < header.size(); ++i) {
        const std::string& h = header[i];
        if (h.rfind("aerial_z", 0) != 0)
            throw ParseError("manifest: unexpected column '" + h + "'");
        m.zooms_.push_back(std::stoi(h.substr(8)));
    }

    std::set<uint64_t> seen_ids;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError("manifest line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        ManifestRecord rec;
        try {
            rec.id = std::stoull(fields[0]);
            rec.x = std::stod(fields[1]);
            rec.y = std::stod(fields[2]);
            rec.scene_class = std::stoi(fields[3]);
        } catch (const std::exception&) {
            throw ParseError("manifest line " + std::to_string(line_no) + ": malformed numeric field");
        }
        rec.split = fields[4];
        if (rec.split != "train" && rec.split != "val" && rec.split != "test")
            throw ParseError("manifest line " + std::to_string(line_no) + ": unknown split '" +
                             rec.split + "'");
        rec.ground_path = fields[5];
        for (size_t z = 0; z < m.zooms_.size(); ++z)
            rec.aerial_paths[m.zooms_[z]] = fields[6 + z];

        if (!seen_ids.insert(rec.id).second)
            throw ParseError("manifest: duplicate id " + std::to_string(rec.id));

        if (class_blocklist && class_blocklist->count(rec.scene_class)) continue;

        // Existence check up front; decode stays lazy.
        auto check = [&](const std::string& rel) {
            const auto p = m.dir_ / rel;
            if (!std::filesystem::exists(p))
                throw MissingAssetError("manifest: missing asset '" + p.string() + "' (record " +
                                        std::to_string(rec.id) + ")");
        };
        check(rec.ground_path);
        for (const auto& [zoom, rel] : rec.aerial_paths) check(rel);
        m.records_.push_back(std::move(rec));
    }
    return m;
}

std::vector<size_t> Manifest::split_indices(const std::string& split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records_.size(); ++i)
        if (records_[i].split == split) out.push_back(i);
    return out;
}

std::optional<size_t> Manifest::index_of_id(uint64_t id) const {
    for (size_t i = 0; i < records_.size(); ++i)
        if (records_[i].id == id) return i;
    return std::nullopt;
}

Tensor Manifest::decode(const std::string& rel_path) const {
    const auto p = dir_ / rel_path;
    ImageU8 img = read_ppm(p);
    if (img.width != img.height)
        throw DataError("manifest asset '" + p.string() + "' is not square");
    if (side_ == 0) side_ = img.width;
    if (img.width != side_)
        throw DataError("manifest asset '" + p.string() + "': side " +
                        std::to_string(img.width) + " != expected " + std::to_string(side_));
    return to_chw(img);
}

Tensor Manifest::load_ground(size_t i) const { return decode(record(i).ground_path); }

Tensor Manifest::load_aerial(size_t i, int zoom) const {
    const auto& rec = record(i);
    auto it = rec.aerial_paths.find(zoom);
    if (it == rec.aerial_paths.end())
        throw DataError("manifest record " + std::to_string(rec.id) + " has no zoom " +
                        std::to_string(zoom) + " tile");
    return decode(it->second);
}

int Manifest::side() const {
    if (side_ == 0 && !records_.empty()) decode(records_[0].ground_path);
    return side_;
}

}  // namespace cvloc
