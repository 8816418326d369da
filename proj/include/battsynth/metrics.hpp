#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "battsynth/forecaster.hpp"
#include "battsynth/preprocess.hpp"
#include "battsynth/training.hpp"

namespace battsynth::eval {

/// (1/n) * sum |y - y_hat|. Throws on empty or mismatched inputs.
double mae(const std::vector<double>& y, const std::vector<double>& y_hat);

/// Repeat the last conditioning value across the horizon.
std::vector<double> baseline_persistence(const data::WindowSample& sample);

struct SweepRow {
    std::string model;
    std::string variable;
    std::size_t horizon = 0;
    double mae = 0.0;
    double runtime_s = 0.0;
    bool skipped = false;
    std::string reason;
};

struct HorizonSweepReport {
    std::vector<SweepRow> rows;
};

/// Everything one sweep cell needs: normalized splits for training plus
/// the aligned raw (physical-unit) test windows for scoring.
struct SweepCell {
    data::SplitWindows windows;
    std::vector<data::WindowSample> raw_test;
};

using CellBuilder = std::function<SweepCell(std::size_t horizon)>;
using ModelFactory =
    std::function<std::unique_ptr<model::Forecaster>(std::size_t horizon, std::uint64_t seed)>;

/// Pooled test MAE of denormalized point forecasts against raw targets.
double evaluate_test_mae(model::Forecaster& model,
                         const std::vector<data::WindowSample>& test_windows,
                         const std::vector<data::WindowSample>& raw_test,
                         const data::NormalizationSpec& spec, const std::string& variable,
                         std::size_t n_samples, std::uint64_t seed);

/// Same pooled scoring for the persistence baseline (raw windows only).
double persistence_test_mae(const std::vector<data::WindowSample>& raw_test);

/// Train a fresh model per horizon and score it on the test split. Cells
/// that cannot be built (horizon too long for the series, too few windows)
/// come back as skipped rows carrying the reason. Deterministic for a
/// fixed seed: cell c trains with stream derive_seed(opt.seed, horizon).
HorizonSweepReport horizon_sweep(const std::string& model_name, const ModelFactory& factory,
                                 const CellBuilder& cells,
                                 const std::vector<std::size_t>& horizons,
                                 const std::string& variable,
                                 const data::NormalizationSpec& spec,
                                 const train::OptimizerConfig& opt, std::size_t n_samples);

struct RankingCell {
    std::string variable;
    std::size_t horizon = 0;
    std::string winner;
    bool tie = false;
};

struct RankingTable {
    std::vector<RankingCell> cells;
    std::vector<std::pair<std::string, double>> mean_ranks;  // sorted best first
    bool any_tie = false;

    const std::string& best_model() const { return mean_ranks.front().first; }
};

/// Per-(variable, horizon) winners and mean ranks across models. All
/// reports must cover the identical grid; ties take the lexicographically
/// first name and are flagged. Tied MAEs share the better rank.
RankingTable compare_models(const std::vector<HorizonSweepReport>& reports);

/// Header: model,variable,horizon,mae,runtime_s. Values print with 17
/// significant digits; runtime stays empty unless write_runtime (wall
/// time is the one nondeterministic column, and reruns must be
/// byte-identical). Skipped cells keep mae/runtime empty and record the
/// reason on a preceding comment line.
void save_sweep_csv(const HorizonSweepReport& report, const std::string& path,
                    bool write_runtime = false);
HorizonSweepReport load_sweep_csv(const std::string& path);

void save_ranking_csv(const RankingTable& table, const std::string& path);
void save_mean_ranks_csv(const RankingTable& table, const std::string& path);

}  // namespace battsynth::eval
