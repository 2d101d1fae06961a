#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace cvloc {

/// Flat key=value run configuration. Values from a config file are
/// merged with command-line overrides; the command line wins. Keys are
/// validated against a fixed schema so typos fail loudly.
class RunConfig {
  public:
    /// Parses a key=value file ('#' comments, blank lines ignored).
    /// Unknown keys raise ParseError.
    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_text(const std::string& text);

    /// Sets one key, validating it against the schema.
    void set(const std::string& key, const std::string& value);
    /// Overlays `other` on top of this config (other wins).
    void merge(const RunConfig& other);

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

    /// Writes the resolved key=value lines, sorted by key.
    void save(const std::filesystem::path& path) const;

    static bool known_key(const std::string& key);

  private:
    std::map<std::string, std::string> entries_;
};

}  // namespace cvloc
