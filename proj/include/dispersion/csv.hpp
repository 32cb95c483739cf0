#pragma once

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "dispersion/error.hpp"

namespace dispersion {

/// Numeric table with a mandatory header row: comma-separated, '.' decimal.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw domain_error("csv: no column named '" + name + "'");
    }
    const std::vector<double>& column(const std::string& name) const { return columns[index_of(name)]; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(trim(cell));
    return out;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& col) {
    const char* begin = s.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (s.empty() || end != begin + s.size() || errno == ERANGE) {
        throw domain_error("csv line " + std::to_string(line) + ", column '" + col + "': not a number: '" + s + "'");
    }
    return v;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_commas(line);
        if (t.header.empty()) {
            for (const auto& c : cells) {
                if (c.empty()) throw domain_error("csv: empty column name in header");
            }
            t.header = cells;
            t.columns.resize(cells.size());
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw domain_error("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                               " fields, got " + std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < cells.size(); ++j) {
            t.columns[j].push_back(detail::parse_number(cells[j], lineno, t.header[j]));
        }
    }
    if (t.header.empty()) throw domain_error("csv: missing header row");
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw domain_error("cannot open '" + path + "'");
    return read_csv(in);
}

}  // namespace dispersion
