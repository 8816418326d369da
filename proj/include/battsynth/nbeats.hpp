#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "battsynth/forecaster.hpp"

namespace battsynth::model {

struct NBeatsConfig {
    std::size_t horizon = 10;
    std::size_t lookback_multiple = 2;  // L = multiple * horizon
    std::size_t stacks = 3;
    std::size_t blocks_per_stack = 3;
    std::size_t width = 64;        // FC1..FC4 width
    std::size_t theta_f_dim = 0;   // 0 -> horizon
    std::size_t theta_b_dim = 0;   // 0 -> lookback
    std::uint64_t init_seed = 1;

    std::size_t lookback() const { return lookback_multiple * horizon; }
};

/// Optional per-block capture of the doubly-residual wiring, for tests and
/// diagnostics: inputs[d] is the residual entering block d, backcasts[d]
/// and forecasts[d] its outputs.
struct NBeatsTrace {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> backcasts;
    std::vector<std::vector<double>> forecasts;
};

/// Basis-expansion forecaster. Each block runs a four-layer ReLU FC tower,
/// two linear heads for the expansion coefficients theta_b / theta_f, and
/// learnable basis matrices mapping them to a backcast over the lookback
/// and a forecast over the horizon. Blocks are wired doubly-residually:
/// block d+1 sees the running residual x - sum of earlier backcasts, and
/// the model forecast is the sum of all block forecasts in block order.
/// Univariate: covariates are not consumed.
class NBeatsModel final : public Forecaster {
public:
    explicit NBeatsModel(const NBeatsConfig& cfg);

    static NBeatsModel from_checkpoint(const io::Checkpoint& ckpt);

    std::string kind() const override { return "nbeats"; }
    std::size_t conditioning_len() const override { return cfg_.lookback(); }
    std::size_t horizon() const override { return cfg_.horizon; }
    const NBeatsConfig& config() const { return cfg_; }
    std::size_t n_blocks() const { return blocks_.size(); }

    std::vector<num::Parameter> parameters() override;

    /// Mean absolute error between the model forecast and z_prediction,
    /// averaged over every horizon step and window. Windows must carry at
    /// least lookback() conditioning steps; the last lookback() are used.
    num::TensorPtr loss(const std::vector<data::WindowSample>& batch,
                        Mode mode = Mode::Train) override;

    /// Deterministic point forecast (n_samples and seed are ignored).
    ForecastResult forecast(const data::WindowSample& sample, std::size_t n_samples,
                            std::uint64_t seed) override;

    io::Checkpoint to_checkpoint() const override;
    void load_state(const io::Checkpoint& ckpt) override;

    // -- direct forward API (tests, synthesis) -----------------------------

    /// (backcast, forecast) of one block on a [L x batch] input.
    std::pair<num::TensorPtr, num::TensorPtr> block_forward(std::size_t block,
                                                            const num::TensorPtr& x) const;

    /// Model forecast [H x batch] for a [L x batch] input.
    num::TensorPtr model_forward(const num::TensorPtr& x, NBeatsTrace* trace = nullptr) const;

    /// Point forecast from the last lookback() values of a raw history.
    std::vector<double> forecast_values(const std::vector<double>& history) const;

    struct Block {
        num::TensorPtr W1, b1, W2, b2, W3, b3, W4, b4;
        num::TensorPtr Wf, bf, Wb, bb;  // linear heads
        num::TensorPtr Vf, Vb;          // basis matrices [H x df], [L x db]
    };

    Block& block(std::size_t i) { return blocks_[i]; }

private:
    NBeatsConfig cfg_;
    std::vector<Block> blocks_;
};

}  // namespace battsynth::model
