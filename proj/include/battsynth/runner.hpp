#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "battsynth/config.hpp"
#include "battsynth/metrics.hpp"
#include "battsynth/synthesis.hpp"

namespace battsynth::run {

/// A required on-disk artifact (checkpoint) is absent or unusable.
class MissingArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// load_csv + optional voltage quantization per the dataset section. Any
/// ingestion failure surfaces as a ConfigError on dataset.path.
data::SeriesTable load_dataset(const config::DatasetConfig& ds);

struct PreparedWindows {
    data::SplitWindows windows;                  // normalized splits
    std::vector<data::WindowSample> raw_test;    // physical-unit twins of windows.test
    data::NormalizationSpec spec;
};

/// Window + split + normalize pipeline. Statistics are fit on the rows
/// strictly before the first validation window, so validation/test values
/// can never leak into the spec; the same split seed is applied to the raw
/// and normalized window lists, keeping raw_test row-aligned with
/// windows.test.
PreparedWindows prepare_windows(const data::SeriesTable& raw, const std::string& variable,
                                const config::WindowConfig& wc, data::NormalizationKind kind,
                                std::uint64_t seed);

/// Same pipeline under an already-fitted spec (evaluate/synthesize must
/// rebuild windows in the checkpoint's training normalization space).
PreparedWindows prepare_windows(const data::SeriesTable& raw, const std::string& variable,
                                const config::WindowConfig& wc,
                                const data::NormalizationSpec& spec, std::uint64_t seed);

/// Construct the configured model for the window geometry. Constructor
/// complaints (bad depth, lookback exceeding the conditioning range, ...)
/// are rethrown as ConfigError under `field` so the CLI exits 2 with a
/// field-named message. The final overload overrides the init seed (sweep
/// cells reseed per horizon).
std::unique_ptr<model::Forecaster> build_model(const config::ModelConfig& mc,
                                               const config::WindowConfig& wc,
                                               std::size_t cov_dim,
                                               const std::string& field = "model");
std::unique_ptr<model::Forecaster> build_model(const config::ModelConfig& mc,
                                               const config::WindowConfig& wc,
                                               std::size_t cov_dim, std::uint64_t init_seed,
                                               const std::string& field);

/// Rebuild a model from a saved checkpoint, dispatching on its kind tag.
std::unique_ptr<model::Forecaster> model_from_checkpoint(const io::Checkpoint& ckpt);

/// Normalization statistics round-trip through checkpoint metadata, so a
/// checkpoint is self-contained for evaluation and synthesis.
nlohmann::json normalization_to_json(const data::NormalizationSpec& spec);
data::NormalizationSpec normalization_from_json(const nlohmann::json& j);

struct IngestOutputs {
    std::string snapshot_path;
    std::size_t rows = 0;
    std::size_t cycles = 0;
    std::vector<std::string> columns;
};

struct TrainOutputs {
    std::string checkpoint_path;
    std::string report_path;
    std::string snapshot_path;
    train::TrainReport report;
};

struct EvaluateOutputs {
    std::string csv_path;
    std::string snapshot_path;
    std::string model_name;
    double model_mae = 0.0;
    double persistence_mae = 0.0;
};

struct CompareOutputs {
    std::string sweep_path;
    std::string ranking_path;
    std::string mean_ranks_path;
    std::string snapshot_path;
    std::vector<eval::HorizonSweepReport> reports;  // one per model, rows sorted
    eval::RankingTable ranking;
};

struct SynthesizeOutputs {
    std::vector<std::string> variant_paths;
    std::string fidelity_path;
    std::string snapshot_path;
    synth::FidelityReport fidelity;  // generated span of variant 0 vs the seed table
    double fidelity_mae = 0.0;       // target-variable MAE from that report
    double persistence_mae = 0.0;    // repeat-last-value floor over the same span
};

/// The five CLI commands. Each creates out_dir, writes the resolved-config
/// snapshot, then runs its stage of the pipeline. Errors: ConfigError for
/// invalid/missing configuration or unusable datasets, MissingArtifact for
/// absent checkpoints, train::TrainingError for diverged training.
IngestOutputs run_ingest(const config::RunConfig& cfg);
TrainOutputs run_train(const config::RunConfig& cfg);
EvaluateOutputs run_evaluate(const config::RunConfig& cfg);
CompareOutputs run_compare(const config::RunConfig& cfg);
SynthesizeOutputs run_synthesize(const config::RunConfig& cfg);

}  // namespace battsynth::run
