#include "cvloc/config.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "cvloc/errors.hpp"

namespace cvloc {

namespace {

constexpr std::array kKnownKeys = {
    // shared
    "seed", "threads",
    // training
    "lr", "momentum", "batch_size", "epochs", "eval_every", "target_zoom",
    // architecture
    "input_side", "conv_blocks", "fc_hidden", "feature_dim",
    // world / dataset generation
    "extent", "classes", "noise_octaves", "ground_range_min", "ground_range_max",
    "image_side", "n_samples", "holdout_val", "holdout_test",
    "region_x0", "region_y0", "region_w", "region_h",
    // index grid
    "grid_x0", "grid_y0", "grid_cell", "grid_cols", "grid_rows",
    // evaluation / viz
    "tolerance_radius", "window_m", "stride_m", "half_steps", "alpha", "top_k",
    // gradient checking
    "eps", "tol", "coords_per_entry",
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

bool RunConfig::known_key(const std::string& key) {
    for (const char* k : kKnownKeys)
        if (key == k) return true;
    return false;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    try {
        return from_text(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!known_key(key)) throw ParseError("unknown config key '" + key + "'");
    entries_[key] = value;
}

void RunConfig::merge(const RunConfig& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw ParseError("");
        return v;
    } catch (...) {
        throw ParseError("config key '" + key + "': '" + it->second + "' is not a number");
    }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t pos = 0;
        const int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw ParseError("");
        return v;
    } catch (...) {
        throw ParseError("config key '" + key + "': '" + it->second + "' is not an integer");
    }
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t pos = 0;
        const uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw ParseError("");
        return v;
    } catch (...) {
        throw ParseError("config key '" + key + "': '" + it->second + "' is not an integer");
    }
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    for (const auto& [k, v] : entries_) os << k << '=' << v << '\n';
}

}  // namespace cvloc
