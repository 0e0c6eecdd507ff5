#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rtb::io {

// Flat key-value run manifest with [section] headers. Keys are addressed as
// "section.key"; top-level keys carry no dot. Chosen over a structured
// format for diff-friendliness and zero-dependency parsing.
class Manifest {
public:
    static Manifest load(const std::string& path);
    static Manifest from_string(const std::string& text);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_size_list(const std::string& key,
                                           const std::vector<std::size_t>& fallback) const;

    // Count of consecutive sections "prefix.0", "prefix.1", ...
    std::size_t indexed_sections(const std::string& prefix) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }
    void save(const std::string& path) const;

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace rtb::io
