#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "battsynth/series.hpp"

namespace battsynth::data {

enum class NormalizationKind { minmax, zscore };

NormalizationKind normalization_kind_from_string(const std::string& s);
std::string to_string(NormalizationKind kind);

/// Per-column affine map v -> (v - lo) / span. For minmax lo/span are
/// min and max-min of the fitted rows; for zscore they are mean and
/// (population) std. A constant column under minmax normalizes to 0 and
/// denormalizes back to the constant; under zscore it is an error.
struct ColumnStats {
    NormalizationKind kind = NormalizationKind::minmax;
    double lo = 0.0;    // min or mean
    double span = 1.0;  // max-min or std; 0 marks a constant minmax column
};

struct NormalizationSpec {
    std::map<std::string, ColumnStats> columns;

    bool has(const std::string& column) const { return columns.count(column) != 0; }
    double normalize(const std::string& column, double v) const;
    double denormalize(const std::string& column, double v) const;
};

/// Fit per-column statistics on rows [0, fit_rows) of every column except
/// time_s. fit_rows == 0 means the whole table. Later rows never influence
/// the spec, which is how train-only statistics are enforced.
NormalizationSpec fit_normalization(const SeriesTable& table, NormalizationKind kind,
                                    std::size_t fit_rows = 0);

/// Apply a fitted spec to every covered column; other columns copy through.
SeriesTable apply_normalization(const SeriesTable& table, const NormalizationSpec& spec);

/// Invert apply_normalization.
SeriesTable denormalize_table(const SeriesTable& table, const NormalizationSpec& spec);

/// fit + apply in one step.
std::pair<SeriesTable, NormalizationSpec> normalize(const SeriesTable& table,
                                                    NormalizationKind kind,
                                                    std::size_t fit_rows = 0);

/// Per-step covariates over a whole table, row-major [length x dim]:
/// normalized step index in [0,1], normalized cycle index (only when the
/// table has cycles), then current_A and temperature_C when present.
struct CovariateMatrix {
    std::vector<double> values;  // row-major
    std::size_t dim = 0;
    std::vector<std::string> names;

    double at(std::size_t row, std::size_t j) const { return values[row * dim + j]; }
};

CovariateMatrix time_covariates(const SeriesTable& table);

/// One training/evaluation instance: conditioning-range targets, the full
/// [conditioning + horizon] covariate block, prediction-range targets.
struct WindowSample {
    std::vector<double> z_conditioning;
    std::vector<double> z_prediction;
    std::vector<double> x_covariates;  // row-major [total_len() x cov_dim]
    std::size_t cov_dim = 0;
    std::size_t series_index = 0;  // i
    std::size_t start_row = 0;     // absolute table row of the first conditioning step

    std::size_t conditioning_len() const { return z_conditioning.size(); }
    std::size_t horizon() const { return z_prediction.size(); }
    std::size_t total_len() const { return z_conditioning.size() + z_prediction.size(); }
    double covariate(std::size_t step, std::size_t j) const {
        return x_covariates[step * cov_dim + j];
    }
};

/// Slide a window of conditioning_len + horizon over the target column with
/// the given stride. Windows never span cycle boundaries: each cycle
/// segment of length L contributes floor((L - conditioning_len - horizon)/stride) + 1
/// windows when it is long enough, else none.
std::vector<WindowSample> make_windows(const SeriesTable& table, const std::string& target_column,
                                       std::size_t conditioning_len, std::size_t horizon,
                                       std::size_t stride);

struct SplitWindows {
    std::vector<WindowSample> train;
    std::vector<WindowSample> validation;
    std::vector<WindowSample> test;
};

/// Chronological split: the first floor(n * train_frac) windows train, the
/// earlier half of the remainder (rounded up) validates, the rest tests.
/// The seed only shuffles the train split internally; validation/test stay
/// in time order. Throws when any split would be empty.
SplitWindows split(std::vector<WindowSample> windows, double train_frac, std::uint64_t seed);

}  // namespace battsynth::data
