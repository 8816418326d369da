#include <cstdint>
#include <iostream>

#include "CLI11.hpp"
#include "battsynth/runner.hpp"

namespace {

void print_ingest(const battsynth::run::IngestOutputs& o) {
    std::cout << "loaded " << o.rows << " rows, " << o.cycles << " cycle(s), columns:";
    for (const auto& c : o.columns) std::cout << " " << c;
    std::cout << "\n";
}

void print_train(const battsynth::run::TrainOutputs& o) {
    std::cout << "trained " << o.report.epochs_run() << " epoch(s), best val loss "
              << o.report.best_val << " at epoch " << o.report.best_epoch
              << (o.report.early_stopped ? " (early stop)" : "") << "\n"
              << "checkpoint: " << o.checkpoint_path << "\n"
              << "curves:     " << o.report_path << "\n";
}

void print_evaluate(const battsynth::run::EvaluateOutputs& o) {
    std::cout << o.model_name << " test MAE " << o.model_mae << " vs persistence "
              << o.persistence_mae << "\n"
              << "report: " << o.csv_path << "\n";
}

void print_compare(const battsynth::run::CompareOutputs& o) {
    std::cout << "mean ranks:\n";
    for (const auto& [name, rank] : o.ranking.mean_ranks)
        std::cout << "  " << name << " " << rank << "\n";
    std::cout << "best model: " << o.ranking.best_model()
              << (o.ranking.any_tie ? " (ties present)" : "") << "\n"
              << "sweep:      " << o.sweep_path << "\n"
              << "ranking:    " << o.ranking_path << "\n"
              << "mean ranks: " << o.mean_ranks_path << "\n";
}

void print_synthesize(const battsynth::run::SynthesizeOutputs& o) {
    std::cout << "emitted " << o.variant_paths.size() << " variant(s), fidelity MAE "
              << o.fidelity_mae << " vs persistence " << o.persistence_mae << "\n"
              << "fidelity: " << o.fidelity_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"battsynth: train, benchmark and sample battery time-series forecasters"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    auto* config_opt =
        app.add_option("--config", config_path, "run configuration JSON")->required();
    auto* seed_opt = app.add_option(
        "--seed", seed, "override training.seed and synthesis.noise_seed");
    auto* out_opt = app.add_option("--out", out_dir, "override out_dir");
    (void)config_opt;

    auto* ingest = app.add_subcommand("ingest", "load and validate the configured dataset");
    auto* train = app.add_subcommand("train", "train the configured model, write a checkpoint");
    auto* evaluate =
        app.add_subcommand("evaluate", "score a checkpoint against the persistence baseline");
    auto* compare =
        app.add_subcommand("compare", "horizon-sweep several models and rank them");
    auto* synthesize =
        app.add_subcommand("synthesize", "emit synthetic variants from a checkpoint");
    for (auto* sub : {ingest, train, evaluate, compare, synthesize}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = battsynth::config::load_config(config_path);
        if (seed_opt->count()) {
            cfg.training.seed = seed;
            cfg.synthesis.noise_seed = seed;
        }
        if (out_opt->count()) cfg.out_dir = out_dir;

        if (app.got_subcommand(ingest)) print_ingest(battsynth::run::run_ingest(cfg));
        if (app.got_subcommand(train)) print_train(battsynth::run::run_train(cfg));
        if (app.got_subcommand(evaluate)) print_evaluate(battsynth::run::run_evaluate(cfg));
        if (app.got_subcommand(compare)) print_compare(battsynth::run::run_compare(cfg));
        if (app.got_subcommand(synthesize))
            print_synthesize(battsynth::run::run_synthesize(cfg));
        return 0;
    } catch (const battsynth::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const battsynth::train::TrainingError& e) {
        std::cerr << "training failure: " << e.what() << "\n";
        return 3;
    } catch (const battsynth::run::MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
