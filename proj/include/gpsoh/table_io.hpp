#pragma once

// Self-describing delimited tables: a '#'-prefixed metadata block followed by a
// CSV header row and data rows.
//
//   # gpsoh-<kind> v1
//   # key: value
//   col_a,col_b
//   1.0,2.0

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace gpsoh {

inline constexpr const char* kToolVersion = "0.3.0";

struct Table {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> meta;  // insertion order is preserved
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void set(const std::string& key, const std::string& value) {
        for (auto& [k, v] : meta)
            if (k == key) {
                v = value;
                return;
            }
        meta.emplace_back(key, value);
    }

    std::string get(const std::string& key, const std::string& fallback = "") const {
        for (const auto& [k, v] : meta)
            if (k == key) return v;
        return fallback;
    }

    std::size_t column(const std::string& name) const {
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (columns[c] == name) return c;
        throw DataError("table " + kind + ": missing column '" + name + "'");
    }

    double number(std::size_t row, std::size_t col) const;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, out);
    return r.ec == std::errc() && r.ptr == end;
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

}  // namespace detail

inline double Table::number(std::size_t row, std::size_t col) const {
    double v = 0.0;
    if (!detail::parse_double(rows.at(row).at(col), v))
        throw DataError("table " + kind + ": non-numeric cell '" + rows[row][col] + "'");
    return v;
}

inline void write_table(std::ostream& out, const Table& t) {
    out << "# gpsoh-" << t.kind << " v1\n";
    for (const auto& [k, v] : t.meta) out << "# " << k << ": " << v << '\n';
    for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << '\n';
    }
}

inline void write_table(const std::string& path, const Table& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    write_table(out, t);
}

inline Table read_table(std::istream& in, const std::string& name = "<stream>") {
    Table t;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string body = detail::trim(std::string_view(line).substr(1));
            if (t.kind.empty() && body.rfind("gpsoh-", 0) == 0) {
                t.kind = body.substr(6, body.find(' ') - 6);
                continue;
            }
            const auto colon = body.find(':');
            if (colon != std::string::npos) t.meta.emplace_back(detail::trim(body.substr(0, colon)), detail::trim(body.substr(colon + 1)));
            continue;
        }
        if (!header) {
            t.columns = detail::split(line, ',');
            header = true;
            continue;
        }
        auto fields = detail::split(line, ',');
        if (fields.size() != t.columns.size()) throw DataError(name + ": row has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(t.columns.size()));
        t.rows.push_back(std::move(fields));
    }
    if (!header) throw DataError(name + ": missing header row");
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return read_table(in, path);
}

/// 64-bit FNV-1a, used for config provenance hashes.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex;
    ss.width(16);
    ss.fill('0');
    ss << v;
    return ss.str();
}

}  // namespace gpsoh
