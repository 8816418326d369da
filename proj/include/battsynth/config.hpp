#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "battsynth/deepar.hpp"
#include "battsynth/deeptcn.hpp"
#include "battsynth/preprocess.hpp"
#include "battsynth/series.hpp"
#include "battsynth/training.hpp"
#include "json.hpp"

namespace battsynth::config {

/// Invalid or missing configuration. `field` is the JSON path of the
/// offending entry (e.g. "model.kind"); what() always embeds it.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field_path, const std::string& message);
    std::string field;
};

struct DatasetConfig {
    std::string path;
    std::string target = "voltage_V";
    data::SchemaMap schema = data::default_schema();
    char delimiter = ',';
    data::NormalizationKind normalization = data::NormalizationKind::minmax;
    double quantize_voltage = 0.0;  // grid step; 0 disables
};

struct WindowConfig {
    std::size_t conditioning = 64;
    std::size_t horizon = 10;
    std::size_t stride = 1;
    double train_frac = 0.7;
};

/// One model to build. Only the knobs matching `kind` are consulted; the
/// rest keep their defaults and ride along in snapshots untouched.
struct ModelConfig {
    std::string kind;  // deepar | nbeats | deeptcn
    std::string name;  // row label in reports; defaults to kind
    std::uint64_t init_seed = 1;

    // deepar
    std::size_t hidden = 32;
    model::Likelihood likelihood = model::Likelihood::Gaussian;

    // nbeats
    std::size_t stacks = 3;
    std::size_t blocks_per_stack = 3;
    std::size_t width = 64;
    std::size_t lookback_multiple = 2;

    // deeptcn
    std::size_t channels = 32;
    std::size_t kernel = 2;
    std::size_t decoder_hidden = 32;
    std::size_t depth = 0;  // 0 derives from the conditioning length
    model::TcnHead head = model::TcnHead::Parametric;
    std::vector<double> quantiles = {0.1, 0.5, 0.9};
};

struct EvaluationConfig {
    std::vector<std::size_t> horizons = {1, 5, 10, 15, 20, 25, 30};
    std::vector<std::string> variables = {"voltage_V", "capacity_Ah"};
    std::size_t n_samples = 100;    // forecast draws per window
    std::string checkpoint;         // empty -> <out_dir>/<model.name>.ckpt
};

struct SynthesisConfig {
    std::string checkpoint;  // empty -> <out_dir>/<model.name>.ckpt
    std::size_t n_variants = 1;
    std::uint64_t noise_seed = 1;
    std::size_t residual_samples = 1;  // draws per window for the bootstrap pool
};

/// Everything one run needs, with every default resolved. A RunConfig
/// serializes to the snapshot JSON the commands write next to their
/// artifacts; reparsing a snapshot yields an equivalent RunConfig.
struct RunConfig {
    DatasetConfig dataset;
    WindowConfig windows;
    ModelConfig model;                       // train / evaluate / synthesize
    std::vector<ModelConfig> compare_models; // compare (>= 2 entries)
    train::OptimizerConfig training;
    EvaluationConfig evaluation;
    SynthesisConfig synthesis;
    std::string out_dir = "out";

    nlohmann::json to_json() const;
};

/// Parse + validate. Unknown keys, wrong types, out-of-range values and
/// bad enum strings all raise ConfigError naming the JSON path. `model.kind`
/// is required whenever a "model" section is present; commands that need a
/// model re-check it so a config without one still fails field-named.
RunConfig config_from_json(const nlohmann::json& j);

/// Read + parse a config file. Missing/unreadable file or invalid JSON is
/// a ConfigError on the pseudo-field "config".
RunConfig load_config(const std::string& path);

/// Write the fully-resolved snapshot (sorted keys, 2-space indent), the
/// reproducibility anchor every command drops into its output directory.
void save_config_snapshot(const RunConfig& cfg, const std::string& path);

}  // namespace battsynth::config
