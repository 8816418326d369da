#include "battsynth/deeptcn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "battsynth/rng.hpp"

namespace battsynth::model {

using num::Tensor;
using num::TensorPtr;

TcnHead tcn_head_from_string(const std::string& s) {
    if (s == "parametric") return TcnHead::Parametric;
    if (s == "quantile") return TcnHead::Quantile;
    throw std::invalid_argument("unknown deeptcn head \"" + s +
                                "\" (expected parametric or quantile)");
}

std::string to_string(TcnHead head) {
    return head == TcnHead::Parametric ? "parametric" : "quantile";
}

std::size_t tcn_receptive_field(std::size_t depth, std::size_t kernel) {
    return 1 + (kernel - 1) * ((std::size_t{1} << depth) - 1);
}

std::size_t tcn_depth_for(std::size_t conditioning, std::size_t kernel) {
    if (kernel < 2) throw std::invalid_argument("deeptcn: kernel must be >= 2");
    std::size_t depth = 2;
    while (tcn_receptive_field(depth, kernel) < conditioning) depth += 2;
    return depth;
}

namespace {

TensorPtr glorot(num::Rng& rng, std::vector<std::size_t> dims, std::size_t fan_in,
                 std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    std::vector<double> w(n);
    for (double& v : w) v = rng.uniform(-limit, limit);
    return Tensor::make(std::move(w), std::move(dims), true);
}

TensorPtr ones_vec(std::size_t n) {
    return Tensor::make(std::vector<double>(n, 1.0), {n}, true);
}

TensorPtr zeros_vec(std::size_t n) {
    return Tensor::make(std::vector<double>(n, 0.0), {n}, true);
}

}  // namespace

std::size_t DeepTcnModel::head_rows() const {
    return cfg_.head == TcnHead::Parametric ? 2 : cfg_.quantiles.size();
}

DeepTcnModel::DeepTcnModel(const DeepTcnConfig& cfg)
    : cfg_(cfg), bn_d1_(cfg.decoder_hidden), bn_d2_(cfg.channels) {
    if (cfg.channels < 1) throw std::invalid_argument("deeptcn: channels must be >= 1");
    if (cfg.kernel < 2) throw std::invalid_argument("deeptcn: kernel must be >= 2");
    if (cfg.conditioning < 1)
        throw std::invalid_argument("deeptcn: conditioning length must be >= 1");
    if (cfg.horizon < 1) throw std::invalid_argument("deeptcn: horizon must be >= 1");
    if (cfg.cov_dim < 1)
        throw std::invalid_argument(
            "deeptcn: needs at least one covariate channel to tell horizons apart");
    if (cfg.head == TcnHead::Quantile) {
        if (cfg.quantiles.empty() ||
            !std::is_sorted(cfg.quantiles.begin(), cfg.quantiles.end()))
            throw std::invalid_argument("deeptcn: quantile levels must be ascending");
        for (double q : cfg.quantiles)
            if (!(q > 0.0 && q < 1.0))
                throw std::invalid_argument("deeptcn: quantile levels must lie in (0,1)");
    }
    if (cfg_.depth == 0) cfg_.depth = tcn_depth_for(cfg.conditioning, cfg.kernel);
    if (cfg_.depth % 2 != 0)
        throw std::invalid_argument("deeptcn: depth must be even (two convs per block)");

    num::Rng rng(num::derive_seed(cfg.init_seed, 0x7c17));
    const std::size_t ch = cfg.channels;
    const std::size_t in = 1 + cfg.cov_dim;
    const std::size_t k = cfg.kernel;

    K_in_ = glorot(rng, {ch, in, 1}, in, ch);
    for (std::size_t b = 0; b < cfg_.depth / 2; ++b) {
        Block blk(ch);
        blk.K1 = glorot(rng, {ch, ch, k}, ch * k, ch * k);
        blk.K2 = glorot(rng, {ch, ch, k}, ch * k, ch * k);
        blk.d1 = std::size_t{1} << (2 * b);
        blk.d2 = std::size_t{1} << (2 * b + 1);
        blk.bn1.gamma = ones_vec(ch);
        blk.bn1.beta = zeros_vec(ch);
        blk.bn2.gamma = ones_vec(ch);
        blk.bn2.beta = zeros_vec(ch);
        blocks_.push_back(std::move(blk));
    }
    const std::size_t dh = cfg.decoder_hidden;
    W_d1_ = glorot(rng, {dh, cfg.cov_dim}, cfg.cov_dim, dh);
    bn_d1_.gamma = ones_vec(dh);
    bn_d1_.beta = zeros_vec(dh);
    W_d2_ = glorot(rng, {ch, dh}, dh, ch);
    bn_d2_.gamma = ones_vec(ch);
    bn_d2_.beta = zeros_vec(ch);
    W_p_ = glorot(rng, {ch, ch}, ch, ch);
    b_p_ = zeros_vec(ch);
    W_o_ = glorot(rng, {head_rows(), ch}, ch, head_rows());
    b_o_ = zeros_vec(head_rows());
}

std::vector<num::Parameter> DeepTcnModel::parameters() {
    std::vector<num::Parameter> params{{K_in_, "deeptcn.enc.K_in"}};
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string p = "deeptcn.enc.block" + std::to_string(b) + ".";
        Block& blk = blocks_[b];
        params.push_back({blk.bn1.gamma, p + "bn1.gamma"});
        params.push_back({blk.bn1.beta, p + "bn1.beta"});
        params.push_back({blk.K1, p + "K1"});
        params.push_back({blk.bn2.gamma, p + "bn2.gamma"});
        params.push_back({blk.bn2.beta, p + "bn2.beta"});
        params.push_back({blk.K2, p + "K2"});
    }
    params.push_back({W_d1_, "deeptcn.dec.W1"});
    params.push_back({bn_d1_.gamma, "deeptcn.dec.bn1.gamma"});
    params.push_back({bn_d1_.beta, "deeptcn.dec.bn1.beta"});
    params.push_back({W_d2_, "deeptcn.dec.W2"});
    params.push_back({bn_d2_.gamma, "deeptcn.dec.bn2.gamma"});
    params.push_back({bn_d2_.beta, "deeptcn.dec.bn2.beta"});
    params.push_back({W_p_, "deeptcn.dec.W_p"});
    params.push_back({b_p_, "deeptcn.dec.b_p"});
    params.push_back({W_o_, "deeptcn.head.W_o"});
    params.push_back({b_o_, "deeptcn.head.b_o"});
    return params;
}

TensorPtr DeepTcnModel::encode(const TensorPtr& input, Mode mode) {
    if (input->rank() != 2 || input->shape[0] != 1 + cfg_.cov_dim)
        throw std::invalid_argument("deeptcn encode: input must be [1+cov_dim x T]");
    if (input->shape[1] < 1) throw std::invalid_argument("deeptcn encode: empty history");
    const auto bn_mode = mode == Mode::Train ? num::BNMode::Train : num::BNMode::Eval;
    auto y = conv1d_causal(input, K_in_, 1);
    for (auto& blk : blocks_) {
        auto u = batchnorm1d(y, blk.bn1.gamma, blk.bn1.beta, blk.bn1.stats, bn_mode);
        u = conv1d_causal(relu(u), blk.K1, blk.d1);
        auto v = batchnorm1d(u, blk.bn2.gamma, blk.bn2.beta, blk.bn2.stats, bn_mode);
        v = conv1d_causal(relu(v), blk.K2, blk.d2);
        y = relu(add(y, v));  // identity skip, then the post-block ReLU
    }
    return y;
}

TensorPtr DeepTcnModel::encode_history(const std::vector<double>& z,
                                       const std::vector<double>& covariates) {
    const std::size_t T = z.size();
    if (covariates.size() != T * cfg_.cov_dim)
        throw std::invalid_argument("deeptcn encode_history: covariate size mismatch");
    num::NoGradGuard guard;
    std::vector<double> in((1 + cfg_.cov_dim) * T);
    for (std::size_t t = 0; t < T; ++t) {
        in[t] = z[t];
        for (std::size_t k = 0; k < cfg_.cov_dim; ++k)
            in[(1 + k) * T + t] = covariates[t * cfg_.cov_dim + k];
    }
    return encode(Tensor::make(std::move(in), {1 + cfg_.cov_dim, T}), Mode::Eval);
}

TensorPtr DeepTcnModel::forecast_joint(const TensorPtr& h, const TensorPtr& x_future,
                                       Mode mode) {
    if (h->size() != cfg_.channels)
        throw std::invalid_argument("deeptcn forecast_joint: hidden state size mismatch");
    if (x_future->rank() != 2 || x_future->shape[0] != cfg_.cov_dim)
        throw std::invalid_argument(
            "deeptcn forecast_joint: future covariates must be [cov_dim x Omega]");
    const auto bn_mode = mode == Mode::Train ? num::BNMode::Train : num::BNMode::Eval;
    // R(X): dense -> BN -> ReLU -> dense -> BN, shared across horizon steps
    auto r = matmul(W_d1_, x_future);
    r = relu(batchnorm1d(r, bn_d1_.gamma, bn_d1_.beta, bn_d1_.stats, bn_mode));
    r = matmul(W_d2_, r);
    r = batchnorm1d(r, bn_d2_.gamma, bn_d2_.beta, bn_d2_.stats, bn_mode);
    auto proj = add(matmul(W_p_, h), b_p_);       // [ch]
    auto combined = relu(add_bias(r, proj));      // broadcast over horizon columns
    return add_bias(matmul(W_o_, combined), b_o_);
}

TensorPtr DeepTcnModel::input_from_window(const data::WindowSample& sample) const {
    const std::size_t c = sample.conditioning_len();
    std::vector<double> in((1 + cfg_.cov_dim) * c);
    for (std::size_t t = 0; t < c; ++t) {
        in[t] = sample.z_conditioning[t];
        for (std::size_t k = 0; k < cfg_.cov_dim; ++k)
            in[(1 + k) * c + t] = sample.covariate(t, k);
    }
    return Tensor::make(std::move(in), {1 + cfg_.cov_dim, c});
}

TensorPtr DeepTcnModel::future_covariates(const data::WindowSample& sample) const {
    const std::size_t c = sample.conditioning_len();
    const std::size_t h = sample.horizon();
    std::vector<double> xf(cfg_.cov_dim * h);
    for (std::size_t w = 0; w < h; ++w)
        for (std::size_t k = 0; k < cfg_.cov_dim; ++k)
            xf[k * h + w] = sample.covariate(c + w, k);
    return Tensor::make(std::move(xf), {cfg_.cov_dim, h});
}

TensorPtr DeepTcnModel::window_head(const data::WindowSample& sample, Mode mode) {
    if (sample.cov_dim != cfg_.cov_dim)
        throw std::invalid_argument("deeptcn: window covariate dimension mismatch");
    auto enc = encode(input_from_window(sample), mode);
    auto h = column(enc, sample.conditioning_len() - 1);
    return forecast_joint(h, future_covariates(sample), mode);
}

std::vector<TensorPtr> DeepTcnModel::batch_heads(const std::vector<data::WindowSample>& batch,
                                                 Mode mode) {
    const std::size_t B = batch.size();
    const auto bn_mode = mode == Mode::Train ? num::BNMode::Train : num::BNMode::Eval;

    std::vector<TensorPtr> ys(B);
    std::vector<std::size_t> off(B + 1, 0);
    for (std::size_t b = 0; b < B; ++b) {
        if (batch[b].cov_dim != cfg_.cov_dim)
            throw std::invalid_argument("deeptcn: window covariate dimension mismatch");
        ys[b] = conv1d_causal(input_from_window(batch[b]), K_in_, 1);
        off[b + 1] = off[b] + ys[b]->shape[1];
    }
    for (auto& blk : blocks_) {
        auto bn1 = relu(batchnorm1d(concat_cols(ys), blk.bn1.gamma, blk.bn1.beta,
                                    blk.bn1.stats, bn_mode));
        std::vector<TensorPtr> us(B);
        for (std::size_t b = 0; b < B; ++b)
            us[b] = conv1d_causal(slice_cols(bn1, off[b], off[b + 1] - off[b]), blk.K1,
                                  blk.d1);
        auto bn2 = relu(batchnorm1d(concat_cols(us), blk.bn2.gamma, blk.bn2.beta,
                                    blk.bn2.stats, bn_mode));
        for (std::size_t b = 0; b < B; ++b) {
            auto v = conv1d_causal(slice_cols(bn2, off[b], off[b + 1] - off[b]), blk.K2,
                                   blk.d2);
            ys[b] = relu(add(ys[b], v));
        }
    }

    // decoder: R(X) over every window's future covariates in one batch
    std::vector<TensorPtr> xfs(B);
    for (std::size_t b = 0; b < B; ++b) xfs[b] = future_covariates(batch[b]);
    auto r = matmul(W_d1_, concat_cols(xfs));
    r = relu(batchnorm1d(r, bn_d1_.gamma, bn_d1_.beta, bn_d1_.stats, bn_mode));
    r = matmul(W_d2_, r);
    r = batchnorm1d(r, bn_d2_.gamma, bn_d2_.beta, bn_d2_.stats, bn_mode);

    std::vector<TensorPtr> outs(B);
    for (std::size_t b = 0; b < B; ++b) {
        auto h = column(ys[b], batch[b].conditioning_len() - 1);
        auto proj = add(matmul(W_p_, h), b_p_);
        auto rb = slice_cols(r, b * cfg_.horizon, cfg_.horizon);
        outs[b] = add_bias(matmul(W_o_, relu(add_bias(rb, proj))), b_o_);
    }
    return outs;
}

num::TensorPtr DeepTcnModel::loss(const std::vector<data::WindowSample>& batch, Mode mode) {
    if (batch.empty()) throw std::invalid_argument("deeptcn loss: empty batch");
    for (const auto& sample : batch)
        if (sample.horizon() != cfg_.horizon)
            throw std::invalid_argument("deeptcn loss: window horizon mismatch");
    auto outs = batch_heads(batch, mode);
    TensorPtr total;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& sample = batch[b];
        const auto& out = outs[b];
        auto z = Tensor::make(sample.z_prediction, {1, sample.horizon()});
        TensorPtr window_loss;
        if (cfg_.head == TcnHead::Parametric) {
            auto mu = slice_rows(out, 0, 1);
            auto sigma = softplus(slice_rows(out, 1, 1));
            window_loss = gaussian_nll(z, mu, sigma);
        } else {
            for (std::size_t i = 0; i < cfg_.quantiles.size(); ++i) {
                auto piece = pinball_loss(z, slice_rows(out, i, 1), cfg_.quantiles[i]);
                window_loss = window_loss ? add(window_loss, piece) : piece;
            }
            window_loss =
                num::scale(window_loss, 1.0 / static_cast<double>(cfg_.quantiles.size()));
        }
        total = total ? add(total, window_loss) : window_loss;
    }
    return num::scale(total, 1.0 / static_cast<double>(batch.size()));
}

ForecastResult DeepTcnModel::forecast(const data::WindowSample& sample, std::size_t n_samples,
                                      std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("deeptcn forecast: n_samples must be >= 1");
    num::NoGradGuard guard;
    auto out = window_head(sample, Mode::Eval);
    const std::size_t h = sample.horizon();

    ForecastResult result;
    result.t0 = 0;
    if (cfg_.head == TcnHead::Parametric) {
        std::vector<double> mu(out->data.begin(), out->data.begin() + static_cast<std::ptrdiff_t>(h));
        std::vector<double> sigma(h);
        for (std::size_t w = 0; w < h; ++w) {
            const double raw = out->data[h + w];
            sigma[w] = raw > 30.0 ? raw : std::log1p(std::exp(raw));
        }
        constexpr double z90 = 1.2815515655446004;  // standard normal 0.9 quantile
        result.point = mu;
        result.mean = mu;
        result.q50 = mu;
        result.q10.resize(h);
        result.q90.resize(h);
        for (std::size_t w = 0; w < h; ++w) {
            result.q10[w] = mu[w] - z90 * sigma[w];
            result.q90[w] = mu[w] + z90 * sigma[w];
        }
        for (std::size_t j = 0; j < n_samples; ++j) {
            num::Rng rng(num::derive_seed(seed, j));
            std::vector<double> traj(h);
            for (std::size_t w = 0; w < h; ++w) traj[w] = rng.normal(mu[w], sigma[w]);
            result.trajectories.push_back(std::move(traj));
        }
    } else {
        const std::size_t nq = cfg_.quantiles.size();
        std::vector<std::vector<double>> q(nq, std::vector<double>(h));
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t w = 0; w < h; ++w) q[i][w] = out->data[i * h + w];
        result.q10 = q.front();
        result.q90 = q.back();
        const std::size_t mid = nq / 2;
        result.q50 = q[mid];
        result.point = q[mid];
        result.mean = q[mid];
        // sample through the piecewise-linear inverse CDF the quantile
        // grid defines; tails clamp to the outer levels
        for (std::size_t j = 0; j < n_samples; ++j) {
            num::Rng rng(num::derive_seed(seed, j));
            std::vector<double> traj(h);
            for (std::size_t w = 0; w < h; ++w) {
                const double u =
                    std::clamp(rng.uniform(), cfg_.quantiles.front(), cfg_.quantiles.back());
                std::size_t i = 1;
                while (i + 1 < nq && u > cfg_.quantiles[i]) ++i;
                const double lo_q = cfg_.quantiles[i - 1], hi_q = cfg_.quantiles[i];
                const double f = (u - lo_q) / (hi_q - lo_q);
                traj[w] = q[i - 1][w] * (1.0 - f) + q[i][w] * f;
            }
            result.trajectories.push_back(std::move(traj));
        }
    }
    return result;
}

io::Checkpoint DeepTcnModel::to_checkpoint() const {
    io::Checkpoint ckpt;
    ckpt.kind = "deeptcn";
    ckpt.meta["channels"] = cfg_.channels;
    ckpt.meta["kernel"] = cfg_.kernel;
    ckpt.meta["conditioning"] = cfg_.conditioning;
    ckpt.meta["horizon"] = cfg_.horizon;
    ckpt.meta["cov_dim"] = cfg_.cov_dim;
    ckpt.meta["decoder_hidden"] = cfg_.decoder_hidden;
    ckpt.meta["head"] = to_string(cfg_.head);
    ckpt.meta["quantiles"] = cfg_.quantiles;
    ckpt.meta["depth"] = cfg_.depth;
    ckpt.meta["init_seed"] = cfg_.init_seed;
    for (const auto& p : const_cast<DeepTcnModel*>(this)->parameters())
        ckpt.tensors.emplace_back(p.name, Tensor::make(p.tensor->data, p.tensor->shape));

    auto add_stats = [&](const std::string& name, const BnSite& site) {
        ckpt.tensors.emplace_back(
            name + ".running_mean",
            Tensor::make(site.stats.mean, {site.stats.mean.size()}));
        ckpt.tensors.emplace_back(name + ".running_var",
                                  Tensor::make(site.stats.var, {site.stats.var.size()}));
    };
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string p = "deeptcn.enc.block" + std::to_string(b) + ".";
        add_stats(p + "bn1", blocks_[b].bn1);
        add_stats(p + "bn2", blocks_[b].bn2);
    }
    add_stats("deeptcn.dec.bn1", bn_d1_);
    add_stats("deeptcn.dec.bn2", bn_d2_);
    return ckpt;
}

void DeepTcnModel::load_state(const io::Checkpoint& ckpt) {
    if (ckpt.kind != "deeptcn")
        throw std::runtime_error("deeptcn: checkpoint kind \"" + ckpt.kind + "\" mismatch");
    for (auto& p : parameters()) {
        const auto& src = ckpt.tensor(p.name);
        if (src->shape != p.tensor->shape)
            throw std::runtime_error("deeptcn: shape mismatch for \"" + p.name + "\"");
        p.tensor->data = src->data;
    }
    auto load_stats = [&](const std::string& name, BnSite& site) {
        site.stats.mean = ckpt.tensor(name + ".running_mean")->data;
        site.stats.var = ckpt.tensor(name + ".running_var")->data;
    };
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string p = "deeptcn.enc.block" + std::to_string(b) + ".";
        load_stats(p + "bn1", blocks_[b].bn1);
        load_stats(p + "bn2", blocks_[b].bn2);
    }
    load_stats("deeptcn.dec.bn1", bn_d1_);
    load_stats("deeptcn.dec.bn2", bn_d2_);
}

DeepTcnModel DeepTcnModel::from_checkpoint(const io::Checkpoint& ckpt) {
    DeepTcnConfig cfg;
    cfg.channels = ckpt.meta.at("channels").get<std::size_t>();
    cfg.kernel = ckpt.meta.at("kernel").get<std::size_t>();
    cfg.conditioning = ckpt.meta.at("conditioning").get<std::size_t>();
    cfg.horizon = ckpt.meta.at("horizon").get<std::size_t>();
    cfg.cov_dim = ckpt.meta.at("cov_dim").get<std::size_t>();
    cfg.decoder_hidden = ckpt.meta.at("decoder_hidden").get<std::size_t>();
    cfg.head = tcn_head_from_string(ckpt.meta.at("head").get<std::string>());
    cfg.quantiles = ckpt.meta.at("quantiles").get<std::vector<double>>();
    cfg.depth = ckpt.meta.at("depth").get<std::size_t>();
    cfg.init_seed = ckpt.meta.value("init_seed", std::uint64_t{1});
    DeepTcnModel model(cfg);
    model.load_state(ckpt);
    return model;
}

}  // namespace battsynth::model
