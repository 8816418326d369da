#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "battsynth/forecaster.hpp"
#include "battsynth/preprocess.hpp"
#include "battsynth/series.hpp"

namespace battsynth::synth {

struct SynthesisOptions {
    std::size_t n_variants = 1;
    std::uint64_t noise_seed = 1;
    /// Residual pool for deterministic models: each generated step adds one
    /// resampled residual (bootstrap). Empty disables the perturbation, which
    /// is right for models whose trajectories already carry sampling noise.
    std::vector<double> residual_pool;
};

/// Pooled point-forecast residuals (truth minus point, normalized units)
/// over a window set — the bootstrap pool for deterministic models.
std::vector<double> training_residuals(model::Forecaster& model,
                                       const std::vector<data::WindowSample>& windows,
                                       std::size_t n_samples, std::uint64_t seed);

/// Roll a trained model over seed_table to emit n_variants synthetic tables.
/// Each variant keeps the raw conditioning prefix (first conditioning_len
/// rows) bit-identical, then repeatedly forecasts horizon-sized blocks,
/// feeding each sampled block back as conditioning for the next, and
/// denormalizes the generated values into the target column. All other
/// columns copy through unchanged; covariates past the table end repeat the
/// final row. Variant v draws from the independent stream
/// derive_seed(noise_seed, v). Output tables are tagged synthetic=true.
std::vector<data::SeriesTable> generate_synthetic_dataset(
    model::Forecaster& model, const data::SeriesTable& seed_table,
    const data::NormalizationSpec& spec, const std::string& variable,
    const SynthesisOptions& options);

struct VariableFidelity {
    double mae = 0.0;
    double mean_delta = 0.0;  // synthetic stat minus holdout stat
    double std_delta = 0.0;
    double min_delta = 0.0;
    double max_delta = 0.0;
};

/// Row-aligned comparison over every shared column except time_s.
struct FidelityReport {
    std::vector<std::pair<std::string, VariableFidelity>> variables;  // name-sorted
    std::size_t rows = 0;

    const VariableFidelity& at(const std::string& name) const;
};

/// Per-variable MAE plus mean/std/min/max deltas between a synthetic table
/// and an aligned holdout span. Throws on length mismatch or when the
/// tables share no comparable column.
FidelityReport fidelity_report(const data::SeriesTable& synthetic,
                               const data::SeriesTable& holdout);

/// Header: variable,mae,mean_delta,std_delta,min_delta,max_delta.
void save_fidelity_csv(const FidelityReport& report, const std::string& path);

}  // namespace battsynth::synth
