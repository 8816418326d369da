#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "battsynth/checkpoint.hpp"
#include "battsynth/preprocess.hpp"
#include "battsynth/tensor.hpp"

namespace battsynth::model {

/// Forecast over one window. Trajectories run over [0, t0 + H): the first
/// t0 entries replay the conditioning ground truth (autoregressive models
/// condition before sampling; direct models have t0 == 0), the rest are
/// model output. The per-step statistics cover the prediction range only.
struct ForecastResult {
    std::size_t t0 = 0;
    std::vector<std::vector<double>> trajectories;
    std::vector<double> mean;
    std::vector<double> q10, q50, q90;
    std::vector<double> point;  // estimate scored by MAE

    std::size_t horizon() const { return point.size(); }
};

/// Linear-interpolation empirical quantile of an unsorted sample.
double empirical_quantile(std::vector<double> values, double q);

/// Fill mean/quantiles/point of a result from its trajectories; the point
/// estimate is the per-step median.
void summarize_trajectories(ForecastResult& result);

enum class Mode { Train, Eval };

/// What the training loop and evaluation harness need from a model. All
/// implementations are deterministic functions of (constructor seed,
/// training data order, forecast seed). Instances are thread-confined.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t conditioning_len() const = 0;
    virtual std::size_t horizon() const = 0;

    /// Trainable tensors in a stable order (checkpoint and optimizer order).
    virtual std::vector<num::Parameter> parameters() = 0;

    /// Graph-building loss, averaged over the batch. Train mode lets batch
    /// normalization sites update running statistics; Eval freezes them.
    virtual num::TensorPtr loss(const std::vector<data::WindowSample>& batch,
                                Mode mode = Mode::Train) = 0;

    /// Forecast one window. Probabilistic models draw n_samples
    /// trajectories from independent (seed, trajectory) streams;
    /// deterministic models ignore n_samples/seed.
    virtual ForecastResult forecast(const data::WindowSample& sample, std::size_t n_samples,
                                    std::uint64_t seed) = 0;

    virtual io::Checkpoint to_checkpoint() const = 0;

    /// Restore parameters (and any running statistics) from a checkpoint
    /// of the same kind/architecture.
    virtual void load_state(const io::Checkpoint& ckpt) = 0;
};

}  // namespace battsynth::model
