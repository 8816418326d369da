#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "battsynth/forecaster.hpp"

namespace battsynth::model {

enum class Likelihood { Gaussian, NegBin };

Likelihood likelihood_from_string(const std::string& s);
std::string to_string(Likelihood kind);

struct DeepArConfig {
    std::size_t hidden = 32;
    std::size_t cov_dim = 0;  // per-step covariate dimension the windows carry
    std::size_t conditioning = 64;
    std::size_t horizon = 10;
    Likelihood likelihood = Likelihood::Gaussian;
    std::uint64_t init_seed = 1;
};

/// Autoregressive recurrent likelihood model: a single-layer LSTM consumes
/// (z_{t-1}, x_t) each step and an affine head maps the hidden state to
/// distribution parameters. Training teacher-forces the true z over the
/// whole window and minimizes mean NLL over every step; forecasting feeds
/// samples back in and returns trajectory bundles.
class DeepArModel final : public Forecaster {
public:
    explicit DeepArModel(const DeepArConfig& cfg);

    static DeepArModel from_checkpoint(const io::Checkpoint& ckpt);

    std::string kind() const override { return "deepar"; }
    std::size_t conditioning_len() const override { return cfg_.conditioning; }
    std::size_t horizon() const override { return cfg_.horizon; }
    const DeepArConfig& config() const { return cfg_; }

    std::vector<num::Parameter> parameters() override;

    /// Mean NLL over all steps and windows under teacher forcing.
    num::TensorPtr loss(const std::vector<data::WindowSample>& batch,
                        Mode mode = Mode::Train) override;

    /// Ancestral sampling: ground truth through the conditioning range,
    /// then one draw per step fed forward. Trajectory j uses the stream
    /// derived from (seed, j).
    ForecastResult forecast(const data::WindowSample& sample, std::size_t n_samples,
                            std::uint64_t seed) override;

    io::Checkpoint to_checkpoint() const override;
    void load_state(const io::Checkpoint& ckpt) override;

    // -- stepping API (also used by the synthesizer and in tests) ---------

    struct State {
        num::TensorPtr h, c;  // [hidden x batch]
    };

    State initial_state(std::size_t batch = 1) const;

    /// Advance one step with scalar input (batch 1, tape-free) and return
    /// the head parameters (mu, sigma) for the new position.
    std::pair<double, double> step(State& state, double z_prev,
                                   const std::vector<double>& covariates) const;

    /// Run the conditioning range of a window; returns the state after the
    /// last conditioning step. Tape-free.
    State condition(const data::WindowSample& sample) const;

    /// Teacher-forced per-step head parameters over the full window,
    /// tape-free; used by tests to inspect mu/sigma paths.
    std::pair<std::vector<double>, std::vector<double>> conditioned_params(
        const data::WindowSample& sample) const;

private:
    // tape ops shared by training and stepping: one LSTM step on
    // [rows x batch] matrices, then the likelihood head
    void cell_forward(const num::TensorPtr& x, num::TensorPtr& h, num::TensorPtr& c) const;
    std::pair<num::TensorPtr, num::TensorPtr> head_forward(const num::TensorPtr& h) const;

    DeepArConfig cfg_;
    std::size_t input_dim_;
    num::TensorPtr W_x_, W_h_, b_;          // gates: [4H x in], [4H x H], [4H]
    num::TensorPtr W_mu_, b_mu_, W_s_, b_s_;  // head rows [1 x H], biases [1]
};

}  // namespace battsynth::model
