#pragma once

// Plain-text `key = value` files with optional `[section]` headers. Used for
// constants manifests, run summaries and experiment specs.

#include "mbpetc/core.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mbpetc {

struct ParseError : InputError {
    ParseError(const std::string& source, std::size_t line, const std::string& msg)
        : InputError(source + ":" + std::to_string(line) + ": " + msg), line(line) {}
    std::size_t line;
};

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Shortest text that round-trips: 17 significant digits.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct KeyValueSection {
    std::string name;  // empty for the leading unnamed section
    std::size_t line = 0;
    std::vector<std::pair<std::string, std::string>> entries;
    std::map<std::string, std::size_t> entry_lines;

    bool has(const std::string& key) const { return entry_lines.count(key) > 0; }

    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : entries) {
            if (k == key) return &v;
        }
        return nullptr;
    }

    std::string get(const std::string& key) const {
        if (const auto* v = find(key)) return *v;
        throw InputError("missing key '" + key + "'" + (name.empty() ? "" : " in [" + name + "]"));
    }

    std::string get_or(const std::string& key, std::string fallback) const {
        if (const auto* v = find(key)) return *v;
        return fallback;
    }

    double get_double(const std::string& key) const { return parse_double(key, get(key)); }

    double get_double_or(const std::string& key, double fallback) const {
        if (const auto* v = find(key)) return parse_double(key, *v);
        return fallback;
    }

    long long get_int_or(const std::string& key, long long fallback) const {
        const auto* v = find(key);
        if (!v) return fallback;
        long long out = 0;
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size()) fail(key, "expected an integer, got '" + *v + "'");
        return out;
    }

    bool get_bool_or(const std::string& key, bool fallback) const {
        const auto* v = find(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        fail(key, "expected a boolean, got '" + *v + "'");
        return fallback;
    }

    Vector get_vector(const std::string& key) const {
        std::vector<double> values;
        std::stringstream ss(get(key));
        std::string item;
        while (std::getline(ss, item, ',')) values.push_back(parse_double(key, trim(item)));
        return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    }

    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        std::stringstream ss(get_or(key, ""));
        std::string item;
        while (std::getline(ss, item, ',')) {
            auto t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    void set(const std::string& key, std::string value) {
        for (auto& [k, v] : entries) {
            if (k == key) {
                v = std::move(value);
                return;
            }
        }
        entries.emplace_back(key, std::move(value));
        entry_lines[key] = 0;
    }

    void set(const std::string& key, double value) { set(key, format_double(value)); }

private:
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        auto it = entry_lines.find(key);
        const std::size_t line = it == entry_lines.end() ? 0 : it->second;
        throw ParseError(name.empty() ? "<manifest>" : "[" + name + "]", line, key + ": " + msg);
    }

    double parse_double(const std::string& key, const std::string& text) const {
        const char* begin = text.c_str();
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (text.empty() || end != begin + text.size()) fail(key, "expected a number, got '" + text + "'");
        return v;
    }
};

struct KeyValueFile {
    std::vector<KeyValueSection> sections{KeyValueSection{}};

    KeyValueSection& root() { return sections.front(); }
    const KeyValueSection& root() const { return sections.front(); }

    const KeyValueSection* section(const std::string& name) const {
        for (const auto& s : sections) {
            if (s.name == name) return &s;
        }
        return nullptr;
    }

    KeyValueSection& add_section(std::string name) {
        sections.push_back(KeyValueSection{std::move(name), 0, {}, {}});
        return sections.back();
    }
};

inline KeyValueFile parse_key_value(std::istream& in, const std::string& source = "<input>") {
    KeyValueFile file;
    std::set<std::string> seen_sections;
    std::string raw;
    std::size_t line_no = 0;
    KeyValueSection* current = &file.root();
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(source, line_no, "unterminated section header");
            std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
            if (name.empty()) throw ParseError(source, line_no, "empty section name");
            if (!seen_sections.insert(name).second) {
                throw ParseError(source, line_no, "duplicate section [" + name + "]");
            }
            current = &file.add_section(name);
            current->line = line_no;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value'");
        std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) throw ParseError(source, line_no, "empty key");
        if (current->has(key)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
        current->entries.emplace_back(key, value);
        current->entry_lines[key] = line_no;
    }
    return file;
}

inline KeyValueFile read_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return parse_key_value(in, path);
}

inline void write_key_value(std::ostream& out, const KeyValueFile& file) {
    bool first = true;
    for (const auto& section : file.sections) {
        if (section.name.empty() && section.entries.empty()) continue;
        if (!section.name.empty()) {
            if (!first) out << '\n';
            out << '[' << section.name << "]\n";
        }
        for (const auto& [k, v] : section.entries) out << k << " = " << v << '\n';
        first = false;
    }
}

}  // namespace mbpetc
