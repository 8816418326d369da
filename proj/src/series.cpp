#include "battsynth/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace battsynth::data {

std::size_t SeriesTable::length() const {
    if (columns.empty()) return 0;
    return columns.begin()->second.size();
}

const std::vector<double>& SeriesTable::column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) {
        throw std::invalid_argument("SeriesTable: no column named \"" + name + "\"");
    }
    return it->second;
}

std::vector<std::pair<std::size_t, std::size_t>> SeriesTable::cycle_ranges() const {
    const std::size_t n = length();
    if (!cycle_id) return {{0, n}};
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i == n || (*cycle_id)[i] != (*cycle_id)[start]) {
            ranges.emplace_back(start, i);
            start = i;
        }
    }
    return ranges;
}

void SeriesTable::validate() const {
    if (columns.empty()) throw std::invalid_argument("SeriesTable: no columns");
    const std::size_t n = length();
    if (n < 2) {
        throw std::invalid_argument("SeriesTable: need at least 2 rows, have " +
                                    std::to_string(n));
    }
    for (const auto& [name, values] : columns) {
        if (values.size() != n) {
            throw std::invalid_argument("SeriesTable: column \"" + name + "\" has " +
                                        std::to_string(values.size()) + " rows, expected " +
                                        std::to_string(n));
        }
    }
    if (cycle_id && cycle_id->size() != n) {
        throw std::invalid_argument("SeriesTable: cycle column length mismatch");
    }
    if (has_column("time_s")) {
        const auto& t = column("time_s");
        for (const auto& [lo, hi] : cycle_ranges()) {
            for (std::size_t i = lo + 1; i < hi; ++i) {
                if (!(t[i] > t[i - 1])) {
                    throw std::invalid_argument(
                        "SeriesTable: time_s not strictly increasing at row " +
                        std::to_string(i + 1) + " (" + std::to_string(t[i - 1]) + " -> " +
                        std::to_string(t[i]) + ")");
                }
            }
        }
    }
}

SchemaMap default_schema() {
    SchemaMap m;
    for (const auto& c : canonical_columns()) m[c] = c;
    m["cycle"] = "cycle";
    return m;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) cells.push_back(cell);
    if (!line.empty() && line.back() == delim) cells.push_back("");
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

SeriesTable load_csv(const std::string& path, const SchemaMap& schema, char delimiter) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open \"" + path + "\"");

    std::string line;
    std::size_t line_no = 0;

    // header (first non-comment line)
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        for (auto& h : split_line(line, delimiter)) header.push_back(trim(h));
        break;
    }
    if (header.empty()) throw std::runtime_error("load_csv: \"" + path + "\" has no header row");

    // resolve schema: canonical name -> column position
    std::map<std::string, std::size_t> positions;
    std::optional<std::size_t> cycle_pos;
    for (const auto& [canonical, file_name] : schema) {
        auto it = std::find(header.begin(), header.end(), file_name);
        if (it == header.end()) {
            if (canonical == "cycle") continue;  // cycle column is optional
            throw std::runtime_error("load_csv: \"" + path + "\" is missing mapped column \"" +
                                     file_name + "\" (for " + canonical + ")");
        }
        const std::size_t pos = static_cast<std::size_t>(it - header.begin());
        if (canonical == "cycle") {
            cycle_pos = pos;
        } else {
            positions[canonical] = pos;
        }
    }
    if (positions.find("time_s") == positions.end()) {
        throw std::runtime_error("load_csv: \"" + path + "\" schema does not map time_s");
    }

    SeriesTable table;
    table.source = path;
    for (const auto& [name, pos] : positions) table.columns[name] = {};
    std::vector<int> cycles;

    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto cells = split_line(line, delimiter);
        if (cells.size() != header.size()) {
            throw std::runtime_error("load_csv: row at line " + std::to_string(line_no) +
                                     " has " + std::to_string(cells.size()) +
                                     " cells, header has " + std::to_string(header.size()));
        }
        for (auto& [name, pos] : positions) {
            const std::string cell = trim(cells[pos]);
            double value = 0.0;
            try {
                std::size_t used = 0;
                value = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("load_csv: unparseable numeric \"" + cell +
                                         "\" in column \"" + name + "\" at row " +
                                         std::to_string(line_no));
            }
            if (!std::isfinite(value)) {
                throw std::runtime_error("load_csv: non-finite value in column \"" + name +
                                         "\" at row " + std::to_string(line_no));
            }
            table.columns[name].push_back(value);
        }
        if (cycle_pos) {
            const std::string cell = trim(cells[*cycle_pos]);
            try {
                cycles.push_back(std::stoi(cell));
            } catch (const std::exception&) {
                throw std::runtime_error("load_csv: unparseable cycle id \"" + cell +
                                         "\" at row " + std::to_string(line_no));
            }
        }
    }
    if (cycle_pos) table.cycle_id = std::move(cycles);
    table.validate();
    return table;
}

void save_csv(const SeriesTable& table, const std::string& path, const std::string& generator,
              std::uint64_t seed, char delimiter) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot write \"" + path + "\"");

    if (table.synthetic) {
        out << "# synthetic,generator=" << (generator.empty() ? "unknown" : generator)
            << ",seed=" << seed << "\n";
    }

    std::vector<std::string> names;
    for (const auto& c : canonical_columns())
        if (table.has_column(c)) names.push_back(c);

    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out << delimiter;
        out << names[i];
    }
    if (table.cycle_id) out << delimiter << "cycle";
    out << "\n";

    char buf[40];
    const std::size_t n = table.length();
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) out << delimiter;
            std::snprintf(buf, sizeof buf, "%.17g", table.column(names[i])[row]);
            out << buf;
        }
        if (table.cycle_id) out << delimiter << (*table.cycle_id)[row];
        out << "\n";
    }
}

void quantize_column(SeriesTable& table, const std::string& name, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("quantize_column: step must be positive");
    auto it = table.columns.find(name);
    if (it == table.columns.end()) {
        throw std::invalid_argument("quantize_column: no column named \"" + name + "\"");
    }
    for (double& v : it->second) v = std::round(v / step) * step;
}

}  // namespace battsynth::data
