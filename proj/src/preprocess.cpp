#include "battsynth/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "battsynth/rng.hpp"

namespace battsynth::data {

NormalizationKind normalization_kind_from_string(const std::string& s) {
    if (s == "minmax") return NormalizationKind::minmax;
    if (s == "zscore") return NormalizationKind::zscore;
    throw std::invalid_argument("unknown normalization kind \"" + s +
                                "\" (expected minmax or zscore)");
}

std::string to_string(NormalizationKind kind) {
    return kind == NormalizationKind::minmax ? "minmax" : "zscore";
}

double NormalizationSpec::normalize(const std::string& column, double v) const {
    auto it = columns.find(column);
    if (it == columns.end())
        throw std::invalid_argument("normalization spec has no column \"" + column + "\"");
    const ColumnStats& st = it->second;
    if (st.span == 0.0) return 0.0;  // constant minmax column
    return (v - st.lo) / st.span;
}

double NormalizationSpec::denormalize(const std::string& column, double v) const {
    auto it = columns.find(column);
    if (it == columns.end())
        throw std::invalid_argument("normalization spec has no column \"" + column + "\"");
    const ColumnStats& st = it->second;
    return st.lo + v * st.span;
}

NormalizationSpec fit_normalization(const SeriesTable& table, NormalizationKind kind,
                                    std::size_t fit_rows) {
    const std::size_t n = fit_rows == 0 ? table.length() : std::min(fit_rows, table.length());
    if (n < 2) throw std::invalid_argument("fit_normalization: need at least 2 rows to fit");

    NormalizationSpec spec;
    for (const auto& [name, values] : table.columns) {
        if (name == "time_s") continue;
        ColumnStats st;
        st.kind = kind;
        if (kind == NormalizationKind::minmax) {
            auto [mn, mx] = std::minmax_element(values.begin(), values.begin() + n);
            st.lo = *mn;
            st.span = *mx - *mn;
        } else {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += values[i];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = values[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            if (var == 0.0)
                throw std::invalid_argument("fit_normalization: column \"" + name +
                                            "\" is constant over the fit rows; zscore is "
                                            "undefined (std=0), use minmax instead");
            st.lo = mean;
            st.span = std::sqrt(var);
        }
        spec.columns[name] = st;
    }
    return spec;
}

SeriesTable apply_normalization(const SeriesTable& table, const NormalizationSpec& spec) {
    SeriesTable out = table;
    for (auto& [name, values] : out.columns) {
        if (!spec.has(name)) continue;
        for (double& v : values) v = spec.normalize(name, v);
    }
    return out;
}

SeriesTable denormalize_table(const SeriesTable& table, const NormalizationSpec& spec) {
    SeriesTable out = table;
    for (auto& [name, values] : out.columns) {
        if (!spec.has(name)) continue;
        for (double& v : values) v = spec.denormalize(name, v);
    }
    return out;
}

std::pair<SeriesTable, NormalizationSpec> normalize(const SeriesTable& table,
                                                    NormalizationKind kind,
                                                    std::size_t fit_rows) {
    NormalizationSpec spec = fit_normalization(table, kind, fit_rows);
    return {apply_normalization(table, spec), spec};
}

CovariateMatrix time_covariates(const SeriesTable& table) {
    const std::size_t n = table.length();
    CovariateMatrix m;
    m.names.push_back("step_index");
    const bool has_cycles = table.cycle_id.has_value();
    if (has_cycles) m.names.push_back("cycle_index");
    for (const char* aux : {"current_A", "temperature_C"})
        if (table.has_column(aux)) m.names.push_back(aux);
    m.dim = m.names.size();
    m.values.resize(n * m.dim);

    int cyc_lo = 0, cyc_hi = 0;
    if (has_cycles) {
        const auto& c = *table.cycle_id;
        auto [mn, mx] = std::minmax_element(c.begin(), c.end());
        cyc_lo = *mn;
        cyc_hi = *mx;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = 0;
        m.values[i * m.dim + j++] =
            n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
        if (has_cycles) {
            const int c = (*table.cycle_id)[i];
            m.values[i * m.dim + j++] =
                cyc_hi > cyc_lo ? static_cast<double>(c - cyc_lo) / (cyc_hi - cyc_lo) : 0.0;
        }
        for (const char* aux : {"current_A", "temperature_C"})
            if (table.has_column(aux)) m.values[i * m.dim + j++] = table.column(aux)[i];
    }
    return m;
}

std::vector<WindowSample> make_windows(const SeriesTable& table, const std::string& target_column,
                                       std::size_t conditioning_len, std::size_t horizon,
                                       std::size_t stride) {
    if (conditioning_len < 1 || horizon < 1 || stride < 1)
        throw std::invalid_argument("make_windows: conditioning_len, horizon and stride must be >= 1");
    const auto& target = table.column(target_column);
    const CovariateMatrix cov = time_covariates(table);
    const std::size_t total = conditioning_len + horizon;

    std::vector<WindowSample> windows;
    for (const auto& [begin, end] : table.cycle_ranges()) {
        const std::size_t seg_len = end - begin;
        if (seg_len < total) continue;
        const std::size_t count = (seg_len - total) / stride + 1;
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t start = begin + k * stride;
            WindowSample w;
            w.start_row = start;
            w.series_index = windows.size();
            w.z_conditioning.assign(target.begin() + start,
                                    target.begin() + start + conditioning_len);
            w.z_prediction.assign(target.begin() + start + conditioning_len,
                                  target.begin() + start + total);
            w.cov_dim = cov.dim;
            w.x_covariates.assign(cov.values.begin() + start * cov.dim,
                                  cov.values.begin() + (start + total) * cov.dim);
            windows.push_back(std::move(w));
        }
    }
    return windows;
}

SplitWindows split(std::vector<WindowSample> windows, double train_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("split: train_frac must lie in (0, 1)");
    const std::size_t n = windows.size();
    const std::size_t n_train =
        static_cast<std::size_t>(static_cast<double>(n) * train_frac);
    const std::size_t rest = n - n_train;
    const std::size_t n_val = (rest + 1) / 2;
    const std::size_t n_test = rest - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw std::invalid_argument("split: too few windows (" + std::to_string(n) +
                                    ") to populate train/validation/test");

    std::stable_sort(windows.begin(), windows.end(),
                     [](const WindowSample& a, const WindowSample& b) {
                         return a.start_row < b.start_row;
                     });
    SplitWindows out;
    out.train.assign(windows.begin(), windows.begin() + n_train);
    out.validation.assign(windows.begin() + n_train, windows.begin() + n_train + n_val);
    out.test.assign(windows.begin() + n_train + n_val, windows.end());

    num::Rng rng(num::derive_seed(seed, 0x5b1f));
    rng.shuffle(out.train);
    return out;
}

}  // namespace battsynth::data
