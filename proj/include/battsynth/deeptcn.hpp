#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "battsynth/forecaster.hpp"

namespace battsynth::model {

enum class TcnHead { Parametric, Quantile };

TcnHead tcn_head_from_string(const std::string& s);
std::string to_string(TcnHead head);

struct DeepTcnConfig {
    std::size_t channels = 32;
    std::size_t kernel = 2;
    std::size_t conditioning = 64;
    std::size_t horizon = 10;  // Omega
    std::size_t cov_dim = 1;   // future covariates drive the decoder, so >= 1
    std::size_t decoder_hidden = 32;
    TcnHead head = TcnHead::Parametric;
    std::vector<double> quantiles = {0.1, 0.5, 0.9};
    std::size_t depth = 0;  // conv layers; 0 derives from conditioning (see receptive_field)
    std::uint64_t init_seed = 1;
};

/// Receptive field of a causal conv stack with kernel k and dilations
/// 1, 2, ..., 2^(depth-1): 1 + (k-1) * (2^depth - 1).
std::size_t tcn_receptive_field(std::size_t depth, std::size_t kernel);

/// Smallest even depth whose receptive field covers the conditioning
/// length (even so layers pair up into two-conv residual blocks).
std::size_t tcn_depth_for(std::size_t conditioning, std::size_t kernel);

/// Non-autoregressive convolutional forecaster. A dilated causal conv
/// encoder (two-conv residual blocks, batchnorm+ReLU before each conv,
/// identity skip, post-skip ReLU) embeds the history into h_t; a decoder
/// applies R(X) = BN(dense(relu(BN(dense(X))))) to the future covariates,
/// adds a projection of h_t, and a final dense head emits every horizon
/// step in one pass — output at step w depends only on h_t and X_{t+w}.
class DeepTcnModel final : public Forecaster {
public:
    explicit DeepTcnModel(const DeepTcnConfig& cfg);

    static DeepTcnModel from_checkpoint(const io::Checkpoint& ckpt);

    std::string kind() const override { return "deeptcn"; }
    std::size_t conditioning_len() const override { return cfg_.conditioning; }
    std::size_t horizon() const override { return cfg_.horizon; }
    const DeepTcnConfig& config() const { return cfg_; }
    std::size_t depth() const { return cfg_.depth; }

    std::vector<num::Parameter> parameters() override;

    /// Gaussian NLL (parametric head) or mean pinball over the configured
    /// levels (quantile head), over all horizon steps and windows.
    num::TensorPtr loss(const std::vector<data::WindowSample>& batch,
                        Mode mode = Mode::Train) override;

    ForecastResult forecast(const data::WindowSample& sample, std::size_t n_samples,
                            std::uint64_t seed) override;

    io::Checkpoint to_checkpoint() const override;
    void load_state(const io::Checkpoint& ckpt) override;

    // -- structural API (tests, synthesis) ---------------------------------

    /// Encoder over a [1+cov_dim x T] input (row 0 = targets, rest =
    /// covariates); returns the [channels x T] embedding. Tape-building;
    /// Train mode updates batchnorm running statistics.
    num::TensorPtr encode(const num::TensorPtr& input, Mode mode);

    /// Tape-free eval-mode encoder on raw history; covariates are
    /// row-major [T x cov_dim].
    num::TensorPtr encode_history(const std::vector<double>& z,
                                  const std::vector<double>& covariates);

    /// Decoder head output [head_rows x Omega] from a hidden column h
    /// [channels] and future covariates [cov_dim x Omega]. head_rows is 2
    /// (mu, pre-softplus sigma) for the parametric head, |quantiles| for
    /// the quantile head.
    num::TensorPtr forecast_joint(const num::TensorPtr& h, const num::TensorPtr& x_future,
                                  Mode mode);

    std::size_t head_rows() const;

private:
    num::TensorPtr input_from_window(const data::WindowSample& sample) const;
    num::TensorPtr future_covariates(const data::WindowSample& sample) const;
    num::TensorPtr window_head(const data::WindowSample& sample, Mode mode);
    // Per-window head outputs with every batchnorm site seeing the whole
    // batch at once, so Train-mode batch statistics (and the running stats
    // they feed) describe the batch rather than one window.
    std::vector<num::TensorPtr> batch_heads(const std::vector<data::WindowSample>& batch,
                                            Mode mode);

    struct BnSite {
        num::TensorPtr gamma, beta;
        num::BatchNormStats stats;
        explicit BnSite(std::size_t channels) : stats(channels) {}
    };

    struct Block {
        num::TensorPtr K1, K2;  // [ch x ch x k]
        std::size_t d1 = 1, d2 = 2;
        BnSite bn1, bn2;
        Block(std::size_t ch) : bn1(ch), bn2(ch) {}
    };

    DeepTcnConfig cfg_;
    num::TensorPtr K_in_;  // 1x1 projection [ch x (1+cov) x 1]
    std::vector<Block> blocks_;
    num::TensorPtr W_d1_, W_d2_;  // decoder denses
    BnSite bn_d1_, bn_d2_;
    num::TensorPtr W_p_, b_p_;  // h_t projection
    num::TensorPtr W_o_, b_o_;  // output head
};

}  // namespace battsynth::model
