#include "battsynth/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "battsynth/rng.hpp"

namespace battsynth::synth {

std::vector<double> training_residuals(model::Forecaster& model,
                                       const std::vector<data::WindowSample>& windows,
                                       std::size_t n_samples, std::uint64_t seed) {
    std::vector<double> pool;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto fc = model.forecast(windows[i], n_samples, num::derive_seed(seed, i));
        for (std::size_t s = 0; s < fc.point.size(); ++s)
            pool.push_back(windows[i].z_prediction[s] - fc.point[s]);
    }
    return pool;
}

std::vector<data::SeriesTable> generate_synthetic_dataset(
    model::Forecaster& model, const data::SeriesTable& seed_table,
    const data::NormalizationSpec& spec, const std::string& variable,
    const SynthesisOptions& options) {
    if (options.n_variants < 1)
        throw std::invalid_argument("generate_synthetic_dataset: n_variants must be >= 1");
    if (!seed_table.has_column(variable))
        throw std::invalid_argument("generate_synthetic_dataset: seed table has no column \"" +
                                    variable + "\"");
    const std::size_t C = model.conditioning_len();
    const std::size_t H = model.horizon();
    const std::size_t n = seed_table.length();
    if (n <= C)
        throw std::invalid_argument(
            "generate_synthetic_dataset: seed table must extend past the conditioning span (" +
            std::to_string(n) + " rows <= " + std::to_string(C) + ")");

    const auto normalized = data::apply_normalization(seed_table, spec);
    const auto cov = data::time_covariates(normalized);
    const auto& z_norm = normalized.column(variable);
    const auto& raw = seed_table.column(variable);

    std::vector<data::SeriesTable> variants;
    variants.reserve(options.n_variants);
    for (std::size_t v = 0; v < options.n_variants; ++v) {
        const std::uint64_t stream = num::derive_seed(options.noise_seed, v);
        num::Rng boot(num::derive_seed(stream, 0xb007));

        std::vector<double> z(z_norm.begin(),
                              z_norm.begin() + static_cast<std::ptrdiff_t>(C));
        std::size_t block = 0;
        while (z.size() < n) {
            const std::size_t t = z.size();
            data::WindowSample w;
            w.z_conditioning.assign(z.end() - static_cast<std::ptrdiff_t>(C), z.end());
            w.z_prediction.assign(H, 0.0);  // placeholder; forecast never reads it
            w.cov_dim = cov.dim;
            w.start_row = t - C;
            w.x_covariates.resize((C + H) * cov.dim);
            for (std::size_t step = 0; step < C + H; ++step) {
                const std::size_t row = std::min(t - C + step, n - 1);
                for (std::size_t j = 0; j < cov.dim; ++j)
                    w.x_covariates[step * cov.dim + j] = cov.at(row, j);
            }

            const auto fc = model.forecast(w, 1, num::derive_seed(stream, block));
            const auto& traj = fc.trajectories.front();
            const std::size_t take = std::min(H, n - t);
            for (std::size_t s = 0; s < take; ++s) {
                double value = traj[fc.t0 + s];
                if (!options.residual_pool.empty())
                    value += options.residual_pool[boot.index(options.residual_pool.size())];
                z.push_back(value);
            }
            ++block;
        }

        data::SeriesTable out = seed_table;
        auto& col = out.columns[variable];
        for (std::size_t r = C; r < n; ++r) col[r] = spec.denormalize(variable, z[r]);
        // the conditioning prefix stays the raw seed values, untouched by the
        // normalize/denormalize round trip
        std::copy(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(C), col.begin());
        out.synthetic = true;
        variants.push_back(std::move(out));
    }
    return variants;
}

namespace {

struct ColumnSummary {
    double mean = 0.0, stdev = 0.0, min = 0.0, max = 0.0;
};

ColumnSummary summarize(const std::vector<double>& v) {
    ColumnSummary s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(acc / static_cast<double>(v.size()));
    return s;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

const VariableFidelity& FidelityReport::at(const std::string& name) const {
    for (const auto& [col, fid] : variables)
        if (col == name) return fid;
    throw std::out_of_range("fidelity report has no variable \"" + name + "\"");
}

FidelityReport fidelity_report(const data::SeriesTable& synthetic,
                               const data::SeriesTable& holdout) {
    if (synthetic.length() != holdout.length())
        throw std::invalid_argument("fidelity_report: spans misaligned (" +
                                    std::to_string(synthetic.length()) + " vs " +
                                    std::to_string(holdout.length()) + " rows)");
    FidelityReport report;
    report.rows = synthetic.length();
    for (const auto& [name, synth_col] : synthetic.columns) {
        if (name == "time_s" || !holdout.has_column(name)) continue;
        const auto& hold_col = holdout.column(name);
        VariableFidelity fid;
        double acc = 0.0;
        for (std::size_t r = 0; r < synth_col.size(); ++r)
            acc += std::abs(synth_col[r] - hold_col[r]);
        fid.mae = acc / static_cast<double>(synth_col.size());
        const auto s = summarize(synth_col);
        const auto h = summarize(hold_col);
        fid.mean_delta = s.mean - h.mean;
        fid.std_delta = s.stdev - h.stdev;
        fid.min_delta = s.min - h.min;
        fid.max_delta = s.max - h.max;
        report.variables.emplace_back(name, fid);
    }
    if (report.variables.empty())
        throw std::invalid_argument("fidelity_report: tables share no comparable column");
    return report;
}

void save_fidelity_csv(const FidelityReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_fidelity_csv: cannot write \"" + path + "\"");
    out << "variable,mae,mean_delta,std_delta,min_delta,max_delta\n";
    for (const auto& [name, fid] : report.variables)
        out << name << "," << format_double(fid.mae) << "," << format_double(fid.mean_delta)
            << "," << format_double(fid.std_delta) << "," << format_double(fid.min_delta)
            << "," << format_double(fid.max_delta) << "\n";
}

}  // namespace battsynth::synth
