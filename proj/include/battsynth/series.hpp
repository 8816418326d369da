#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace battsynth::data {

/// Canonical column names a battery measurement table may carry.
/// time_s is mandatory; the rest are optional per schema map.
inline const std::vector<std::string>& canonical_columns() {
    static const std::vector<std::string> cols = {"time_s", "voltage_V", "current_A",
                                                  "temperature_C", "capacity_Ah"};
    return cols;
}

/// One loaded battery measurement table. Columns all share one length >= 2
/// and time_s increases strictly within each cycle. Immutable by convention
/// after construction/validation; freely shareable across threads.
struct SeriesTable {
    std::map<std::string, std::vector<double>> columns;
    std::optional<std::vector<int>> cycle_id;
    std::string source;
    bool synthetic = false;

    std::size_t length() const;
    bool has_column(const std::string& name) const { return columns.count(name) != 0; }
    const std::vector<double>& column(const std::string& name) const;

    /// Half-open row ranges of the cycles, in order; one range covering
    /// everything when no cycle column is present.
    std::vector<std::pair<std::size_t, std::size_t>> cycle_ranges() const;

    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;
};

/// Maps canonical column names to the header names used in a CSV file.
/// Only mapped columns are ingested. "cycle" maps the optional cycle
/// column.
using SchemaMap = std::map<std::string, std::string>;

/// Identity schema over the canonical column names plus "cycle".
SchemaMap default_schema();

/// Parse a battery cycle CSV. Requirements: UTF-8, one header row,
/// configurable single-character delimiter. Lines starting with '#'
/// (provenance comments on synthetic files) are skipped. Every mapped
/// column must exist in the header and every cell under it must parse to a
/// finite number; violations raise std::runtime_error citing the 1-based
/// physical line number.
SeriesTable load_csv(const std::string& path, const SchemaMap& schema, char delimiter = ',');

/// Write a table using the same schema load_csv ingests (round-trip safe:
/// values serialize with 17 significant digits, so reloading reproduces
/// them bit-exactly). Synthetic tables get a leading provenance comment
/// `# synthetic,generator=<name>,seed=<seed>`.
void save_csv(const SeriesTable& table, const std::string& path,
              const std::string& generator = "", std::uint64_t seed = 0,
              char delimiter = ',');

/// Snap one column to a fixed grid (e.g. 0.1 V voltage resolution).
void quantize_column(SeriesTable& table, const std::string& name, double step);

}  // namespace battsynth::data
