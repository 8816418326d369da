#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "battsynth/forecaster.hpp"

namespace battsynth::train {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 1000;
    std::size_t early_stop_patience = 20;
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> train_curve;
    std::vector<double> val_curve;
    std::size_t best_epoch = 0;  // index into the curves
    double best_val = 0.0;
    bool early_stopped = false;
    double wall_seconds = 0.0;

    std::size_t epochs_run() const { return train_curve.size(); }
};

/// Raised when a loss goes non-finite; carries the epoch it happened in.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& msg, std::size_t epoch_index)
        : std::runtime_error(msg), epoch(epoch_index) {}
    std::size_t epoch;
};

/// SGD / Adam over a fixed parameter list. step() consumes whatever
/// gradients the tensors currently hold.
class Optimizer {
public:
    Optimizer(std::vector<num::Parameter> params, OptimizerKind kind, double learning_rate);

    void zero_grad();
    void step();

private:
    std::vector<num::Parameter> params_;
    OptimizerKind kind_;
    double lr_;
    std::vector<std::vector<double>> m_, v_;  // Adam moments
    std::size_t t_ = 0;
};

/// Minibatch training with early stopping on validation loss. The
/// best-validation state (parameters plus any running statistics) is
/// restored before returning. Fully reproducible from cfg.seed. With
/// patience p, training stops after p+1 consecutive epochs without a new
/// validation best (p = 0 stops at the first non-improving epoch).
TrainReport fit(model::Forecaster& model, const std::vector<data::WindowSample>& train_windows,
                const std::vector<data::WindowSample>& val_windows,
                const OptimizerConfig& cfg);

}  // namespace battsynth::train
