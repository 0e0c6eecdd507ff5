#include "rtb/manifest.hpp"

#include <fstream>
#include <sstream>

#include "rtb/errors.hpp"

namespace rtb::io {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Manifest Manifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

Manifest Manifest::from_string(const std::string& text) {
    Manifest m;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw InputError("manifest line " + std::to_string(lineno) + ": unclosed section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("manifest line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw InputError("manifest line " + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        m.entries_[key] = value;
    }
    return m;
}

std::string Manifest::get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::string Manifest::require_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("manifest: missing required key '" + key + "'");
    return it->second;
}

std::int64_t Manifest::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ConfigError("manifest: key '" + key + "' is not an integer: " + it->second);
    }
}

double Manifest::get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("manifest: key '" + key + "' is not a number: " + it->second);
    }
}

bool Manifest::get_bool(const std::string& key, bool fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("manifest: key '" + key + "' is not a boolean: " + v);
}

std::vector<std::size_t> Manifest::get_size_list(const std::string& key,
                                                 const std::vector<std::size_t>& fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<std::size_t> out;
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(tok)));
        } catch (const std::exception&) {
            throw ConfigError("manifest: key '" + key + "' is not a size list: " + it->second);
        }
    }
    if (out.empty()) throw ConfigError("manifest: key '" + key + "' is empty");
    return out;
}

std::size_t Manifest::indexed_sections(const std::string& prefix) const {
    std::size_t count = 0;
    while (true) {
        const std::string probe = prefix + "." + std::to_string(count) + ".";
        auto it = entries_.lower_bound(probe);
        if (it == entries_.end() || it->first.rfind(probe, 0) != 0) break;
        ++count;
    }
    return count;
}

void Manifest::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open manifest for writing: " + path);
    // flattened form: stable, diffable, reload-compatible
    for (const auto& [key, value] : entries_) out << key << " = " << value << "\n";
}

}  // namespace rtb::io
