#include "battsynth/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <tuple>

#include "battsynth/nbeats.hpp"
#include "battsynth/rng.hpp"

namespace battsynth::run {

namespace fs = std::filesystem;
using config::ConfigError;

data::SeriesTable load_dataset(const config::DatasetConfig& ds) {
    if (ds.path.empty()) throw ConfigError("dataset.path", "required");
    try {
        auto table = data::load_csv(ds.path, ds.schema, ds.delimiter);
        if (ds.quantize_voltage > 0.0 && table.has_column("voltage_V"))
            data::quantize_column(table, "voltage_V", ds.quantize_voltage);
        return table;
    } catch (const std::exception& e) {
        throw ConfigError("dataset.path", e.what());
    }
}

PreparedWindows prepare_windows(const data::SeriesTable& raw, const std::string& variable,
                                const config::WindowConfig& wc,
                                const data::NormalizationSpec& spec, std::uint64_t seed) {
    auto raw_splits = data::split(
        data::make_windows(raw, variable, wc.conditioning, wc.horizon, wc.stride),
        wc.train_frac, seed);
    const auto normalized = data::apply_normalization(raw, spec);
    PreparedWindows out;
    out.windows = data::split(
        data::make_windows(normalized, variable, wc.conditioning, wc.horizon, wc.stride),
        wc.train_frac, seed);
    out.raw_test = std::move(raw_splits.test);
    out.spec = spec;
    return out;
}

PreparedWindows prepare_windows(const data::SeriesTable& raw, const std::string& variable,
                                const config::WindowConfig& wc, data::NormalizationKind kind,
                                std::uint64_t seed) {
    auto raw_splits = data::split(
        data::make_windows(raw, variable, wc.conditioning, wc.horizon, wc.stride),
        wc.train_frac, seed);
    const std::size_t fit_rows = raw_splits.validation.front().start_row;
    return prepare_windows(raw, variable, wc, data::fit_normalization(raw, kind, fit_rows),
                           seed);
}

std::unique_ptr<model::Forecaster> build_model(const config::ModelConfig& mc,
                                               const config::WindowConfig& wc,
                                               std::size_t cov_dim, std::uint64_t init_seed,
                                               const std::string& field) {
    if (mc.kind.empty()) throw ConfigError(field + ".kind", "required");
    try {
        if (mc.kind == "deepar") {
            model::DeepArConfig c;
            c.hidden = mc.hidden;
            c.cov_dim = cov_dim;
            c.conditioning = wc.conditioning;
            c.horizon = wc.horizon;
            c.likelihood = mc.likelihood;
            c.init_seed = init_seed;
            return std::make_unique<model::DeepArModel>(c);
        }
        if (mc.kind == "nbeats") {
            model::NBeatsConfig c;
            c.horizon = wc.horizon;
            c.lookback_multiple = mc.lookback_multiple;
            c.stacks = mc.stacks;
            c.blocks_per_stack = mc.blocks_per_stack;
            c.width = mc.width;
            c.init_seed = init_seed;
            if (c.lookback() > wc.conditioning)
                throw std::invalid_argument(
                    "nbeats lookback " + std::to_string(c.lookback()) +
                    " (lookback_multiple * horizon) exceeds windows.conditioning " +
                    std::to_string(wc.conditioning));
            return std::make_unique<model::NBeatsModel>(c);
        }
        if (mc.kind == "deeptcn") {
            model::DeepTcnConfig c;
            c.channels = mc.channels;
            c.kernel = mc.kernel;
            c.conditioning = wc.conditioning;
            c.horizon = wc.horizon;
            c.cov_dim = cov_dim;
            c.decoder_hidden = mc.decoder_hidden;
            c.head = mc.head;
            c.quantiles = mc.quantiles;
            c.depth = mc.depth;
            c.init_seed = init_seed;
            return std::make_unique<model::DeepTcnModel>(c);
        }
        throw std::invalid_argument("unknown model kind \"" + mc.kind + "\"");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(field, e.what());
    }
}

std::unique_ptr<model::Forecaster> build_model(const config::ModelConfig& mc,
                                               const config::WindowConfig& wc,
                                               std::size_t cov_dim, const std::string& field) {
    return build_model(mc, wc, cov_dim, mc.init_seed, field);
}

std::unique_ptr<model::Forecaster> model_from_checkpoint(const io::Checkpoint& ckpt) {
    if (ckpt.kind == "deepar")
        return std::make_unique<model::DeepArModel>(model::DeepArModel::from_checkpoint(ckpt));
    if (ckpt.kind == "nbeats")
        return std::make_unique<model::NBeatsModel>(model::NBeatsModel::from_checkpoint(ckpt));
    if (ckpt.kind == "deeptcn")
        return std::make_unique<model::DeepTcnModel>(
            model::DeepTcnModel::from_checkpoint(ckpt));
    throw std::runtime_error("checkpoint kind \"" + ckpt.kind + "\" is not a known model");
}

nlohmann::json normalization_to_json(const data::NormalizationSpec& spec) {
    nlohmann::json cols = nlohmann::json::object();
    for (const auto& [name, st] : spec.columns) {
        cols[name] = {{"kind", data::to_string(st.kind)}, {"lo", st.lo}, {"span", st.span}};
    }
    return {{"columns", cols}};
}

data::NormalizationSpec normalization_from_json(const nlohmann::json& j) {
    data::NormalizationSpec spec;
    for (auto it = j.at("columns").begin(); it != j.at("columns").end(); ++it) {
        data::ColumnStats st;
        st.kind = data::normalization_kind_from_string(it.value().at("kind").get<std::string>());
        st.lo = it.value().at("lo").get<double>();
        st.span = it.value().at("span").get<double>();
        spec.columns[it.key()] = st;
    }
    return spec;
}

namespace {

std::string write_snapshot(const config::RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const std::string path = (fs::path(cfg.out_dir) / "resolved_config.json").string();
    config::save_config_snapshot(cfg, path);
    return path;
}

std::string default_checkpoint_path(const config::RunConfig& cfg, const std::string& field) {
    if (cfg.model.name.empty())
        throw ConfigError(field, "required (no model section to derive a default path from)");
    return (fs::path(cfg.out_dir) / (cfg.model.name + ".ckpt")).string();
}

/// Windows must match the geometry the checkpointed model was trained for;
/// a silent mismatch would condition or score the model on the wrong spans.
void check_geometry(const model::Forecaster& m, const config::WindowConfig& wc) {
    if (wc.horizon != m.horizon())
        throw ConfigError("windows.horizon", "checkpoint was trained with horizon " +
                                                 std::to_string(m.horizon()));
    if (wc.conditioning < m.conditioning_len())
        throw ConfigError("windows.conditioning",
                          "checkpoint needs at least " + std::to_string(m.conditioning_len()) +
                              " conditioning steps");
}

struct LoadedCheckpoint {
    io::Checkpoint ckpt;
    std::unique_ptr<model::Forecaster> model;
    data::NormalizationSpec spec;
    std::string target;
    std::string name;
};

LoadedCheckpoint open_checkpoint(const config::RunConfig& cfg, const std::string& configured,
                                 const std::string& field) {
    LoadedCheckpoint lc;
    const std::string path =
        configured.empty() ? default_checkpoint_path(cfg, field) : configured;
    if (!fs::exists(path))
        throw MissingArtifact("checkpoint \"" + path + "\" not found; run train first");
    lc.ckpt = io::load_checkpoint(path);
    lc.model = model_from_checkpoint(lc.ckpt);
    if (!lc.ckpt.meta.contains("normalization"))
        throw MissingArtifact("checkpoint \"" + path + "\" lacks normalization metadata");
    lc.spec = normalization_from_json(lc.ckpt.meta.at("normalization"));
    lc.target = lc.ckpt.meta.value("target", cfg.dataset.target);
    lc.name = lc.ckpt.meta.value("model_name", lc.ckpt.kind);
    return lc;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Rows [begin, end) of every column, cycle ids included.
data::SeriesTable slice_rows(const data::SeriesTable& t, std::size_t begin, std::size_t end) {
    data::SeriesTable out;
    out.source = t.source;
    out.synthetic = t.synthetic;
    for (const auto& [name, values] : t.columns)
        out.columns[name] =
            std::vector<double>(values.begin() + begin, values.begin() + end);
    if (t.cycle_id)
        out.cycle_id =
            std::vector<int>(t.cycle_id->begin() + begin, t.cycle_id->begin() + end);
    return out;
}

}  // namespace

IngestOutputs run_ingest(const config::RunConfig& cfg) {
    IngestOutputs out;
    out.snapshot_path = write_snapshot(cfg);
    const auto table = load_dataset(cfg.dataset);
    out.rows = table.length();
    out.cycles = table.cycle_ranges().size();
    for (const auto& [name, values] : table.columns) out.columns.push_back(name);
    return out;
}

TrainOutputs run_train(const config::RunConfig& cfg) {
    TrainOutputs out;
    out.snapshot_path = write_snapshot(cfg);
    const auto table = load_dataset(cfg.dataset);
    auto pw = prepare_windows(table, cfg.dataset.target, cfg.windows,
                              cfg.dataset.normalization, cfg.training.seed);
    const std::size_t cov_dim = pw.windows.train.front().cov_dim;
    auto model = build_model(cfg.model, cfg.windows, cov_dim);

    out.report = train::fit(*model, pw.windows.train, pw.windows.validation, cfg.training);

    io::Checkpoint ckpt = model->to_checkpoint();
    ckpt.meta["normalization"] = normalization_to_json(pw.spec);
    ckpt.meta["target"] = cfg.dataset.target;
    ckpt.meta["model_name"] = cfg.model.name;
    out.checkpoint_path = (fs::path(cfg.out_dir) / (cfg.model.name + ".ckpt")).string();
    io::save_checkpoint(ckpt, out.checkpoint_path);

    out.report_path = (fs::path(cfg.out_dir) / "train_report.csv").string();
    std::ofstream rep(out.report_path);
    if (!rep) throw std::runtime_error("run_train: cannot write \"" + out.report_path + "\"");
    rep << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < out.report.epochs_run(); ++i)
        rep << i << "," << format_double(out.report.train_curve[i]) << ","
            << format_double(out.report.val_curve[i]) << "\n";
    return out;
}

EvaluateOutputs run_evaluate(const config::RunConfig& cfg) {
    EvaluateOutputs out;
    out.snapshot_path = write_snapshot(cfg);
    const auto table = load_dataset(cfg.dataset);
    auto lc = open_checkpoint(cfg, cfg.evaluation.checkpoint, "evaluation.checkpoint");
    check_geometry(*lc.model, cfg.windows);

    auto pw = prepare_windows(table, lc.target, cfg.windows, lc.spec, cfg.training.seed);
    out.model_name = lc.name;
    out.model_mae = eval::evaluate_test_mae(*lc.model, pw.windows.test, pw.raw_test, pw.spec,
                                            lc.target, cfg.evaluation.n_samples,
                                            num::derive_seed(cfg.training.seed, 0xe7a1));
    out.persistence_mae = eval::persistence_test_mae(pw.raw_test);

    eval::HorizonSweepReport report;
    report.rows.push_back({lc.name, lc.target, cfg.windows.horizon, out.model_mae, 0.0, false, ""});
    report.rows.push_back(
        {"persistence", lc.target, cfg.windows.horizon, out.persistence_mae, 0.0, false, ""});
    out.csv_path = (fs::path(cfg.out_dir) / "evaluation.csv").string();
    eval::save_sweep_csv(report, out.csv_path);
    return out;
}

CompareOutputs run_compare(const config::RunConfig& cfg) {
    CompareOutputs out;
    out.snapshot_path = write_snapshot(cfg);
    if (cfg.compare_models.size() < 2)
        throw ConfigError("compare.models", "need >= 2 models, got " +
                                                std::to_string(cfg.compare_models.size()));
    const auto table = load_dataset(cfg.dataset);
    const auto& wc = cfg.windows;
    const auto& ev = cfg.evaluation;

    // One normalization for every cell, fit strictly before the earliest
    // validation window any horizon produces (window geometry does not
    // depend on the target column, so one boundary covers all variables).
    std::size_t fit_rows = std::numeric_limits<std::size_t>::max();
    for (const std::size_t h : ev.horizons) {
        try {
            config::WindowConfig hw = wc;
            hw.horizon = h;
            auto splits = data::split(
                data::make_windows(table, ev.variables.front(), hw.conditioning, h, hw.stride),
                hw.train_frac, cfg.training.seed);
            fit_rows = std::min(fit_rows, splits.validation.front().start_row);
        } catch (const std::exception&) {
            // horizon too long for the series; its cells get skipped below
        }
    }
    if (fit_rows == std::numeric_limits<std::size_t>::max())
        throw ConfigError("evaluation.horizons",
                          "no configured horizon leaves enough windows to split");
    const auto spec = data::fit_normalization(table, cfg.dataset.normalization, fit_rows);
    const auto normalized = data::apply_normalization(table, spec);

    std::vector<std::string> variables = ev.variables;
    std::sort(variables.begin(), variables.end());

    for (const auto& mc : cfg.compare_models) {
        eval::HorizonSweepReport merged;
        for (const auto& variable : variables) {
            eval::CellBuilder cells = [&](std::size_t h) {
                config::WindowConfig hw = wc;
                hw.horizon = h;
                eval::SweepCell cell;
                cell.windows = data::split(
                    data::make_windows(normalized, variable, hw.conditioning, h, hw.stride),
                    hw.train_frac, cfg.training.seed);
                cell.raw_test =
                    data::split(
                        data::make_windows(table, variable, hw.conditioning, h, hw.stride),
                        hw.train_frac, cfg.training.seed)
                        .test;
                return cell;
            };
            eval::ModelFactory factory = [&](std::size_t h, std::uint64_t seed) {
                config::WindowConfig hw = wc;
                hw.horizon = h;
                const std::size_t cov_dim = data::time_covariates(table).dim;
                return build_model(mc, hw, cov_dim, seed, "compare.models");
            };
            auto report = eval::horizon_sweep(mc.name, factory, cells, ev.horizons, variable,
                                              spec, cfg.training, ev.n_samples);
            for (auto& row : report.rows) {
                if (row.skipped)
                    throw ConfigError("evaluation.horizons",
                                      "horizon " + std::to_string(row.horizon) + " for " +
                                          row.model + "/" + row.variable +
                                          " skipped: " + row.reason);
                merged.rows.push_back(std::move(row));
            }
        }
        std::sort(merged.rows.begin(), merged.rows.end(),
                  [](const eval::SweepRow& a, const eval::SweepRow& b) {
                      return std::tie(a.variable, a.horizon) < std::tie(b.variable, b.horizon);
                  });
        out.reports.push_back(std::move(merged));
    }

    out.ranking = eval::compare_models(out.reports);

    eval::HorizonSweepReport all;
    for (const auto& report : out.reports)
        all.rows.insert(all.rows.end(), report.rows.begin(), report.rows.end());
    std::sort(all.rows.begin(), all.rows.end(),
              [](const eval::SweepRow& a, const eval::SweepRow& b) {
                  return std::tie(a.model, a.variable, a.horizon) <
                         std::tie(b.model, b.variable, b.horizon);
              });
    out.sweep_path = (fs::path(cfg.out_dir) / "sweep.csv").string();
    out.ranking_path = (fs::path(cfg.out_dir) / "ranking.csv").string();
    out.mean_ranks_path = (fs::path(cfg.out_dir) / "mean_ranks.csv").string();
    eval::save_sweep_csv(all, out.sweep_path);
    eval::save_ranking_csv(out.ranking, out.ranking_path);
    eval::save_mean_ranks_csv(out.ranking, out.mean_ranks_path);
    return out;
}

SynthesizeOutputs run_synthesize(const config::RunConfig& cfg) {
    SynthesizeOutputs out;
    out.snapshot_path = write_snapshot(cfg);
    const auto table = load_dataset(cfg.dataset);
    auto lc = open_checkpoint(cfg, cfg.synthesis.checkpoint, "synthesis.checkpoint");

    synth::SynthesisOptions options;
    options.n_variants = cfg.synthesis.n_variants;
    options.noise_seed = cfg.synthesis.noise_seed;
    if (lc.ckpt.kind == "nbeats") {
        // deterministic point forecaster: bootstrap residuals supply the
        // variant-to-variant diversity
        check_geometry(*lc.model, cfg.windows);
        auto pw = prepare_windows(table, lc.target, cfg.windows, lc.spec, cfg.training.seed);
        options.residual_pool = synth::training_residuals(
            *lc.model, pw.windows.train, cfg.synthesis.residual_samples,
            num::derive_seed(cfg.synthesis.noise_seed, 0xb007'1e5));
    }

    const auto variants =
        synth::generate_synthetic_dataset(*lc.model, table, lc.spec, lc.target, options);
    for (std::size_t v = 0; v < variants.size(); ++v) {
        char name[40];
        std::snprintf(name, sizeof name, "synthetic_%03zu.csv", v);
        const std::string path = (fs::path(cfg.out_dir) / name).string();
        data::save_csv(variants[v], path, lc.ckpt.kind,
                       num::derive_seed(cfg.synthesis.noise_seed, v));
        out.variant_paths.push_back(path);
    }

    // score the generated span only; the conditioning prefix is a bit-exact
    // copy and would dilute every metric with zeros
    const std::size_t cond = lc.model->conditioning_len();
    const auto generated = slice_rows(variants.front(), cond, table.length());
    const auto truth = slice_rows(table, cond, table.length());
    out.fidelity = synth::fidelity_report(generated, truth);
    out.fidelity_mae = out.fidelity.at(lc.target).mae;

    auto persist = table;
    auto& col = persist.columns.at(lc.target);
    std::fill(col.begin() + cond, col.end(), col[cond - 1]);
    out.persistence_mae =
        synth::fidelity_report(slice_rows(persist, cond, table.length()), truth)
            .at(lc.target)
            .mae;

    out.fidelity_path = (fs::path(cfg.out_dir) / "fidelity.csv").string();
    synth::save_fidelity_csv(out.fidelity, out.fidelity_path);
    return out;
}

}  // namespace battsynth::run
