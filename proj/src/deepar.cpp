#include "battsynth/deepar.hpp"

#include <cmath>
#include <stdexcept>

#include "battsynth/rng.hpp"

namespace battsynth::model {

using num::Tensor;
using num::TensorPtr;

Likelihood likelihood_from_string(const std::string& s) {
    if (s == "gaussian") return Likelihood::Gaussian;
    if (s == "negbin") return Likelihood::NegBin;
    throw std::invalid_argument("unknown likelihood \"" + s +
                                "\" (expected gaussian or negbin)");
}

std::string to_string(Likelihood kind) {
    return kind == Likelihood::Gaussian ? "gaussian" : "negbin";
}

namespace {

TensorPtr glorot(num::Rng& rng, std::size_t rows, std::size_t cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> w(rows * cols);
    for (double& v : w) v = rng.uniform(-limit, limit);
    return Tensor::make(std::move(w), {rows, cols}, true);
}

}  // namespace

DeepArModel::DeepArModel(const DeepArConfig& cfg) : cfg_(cfg), input_dim_(1 + cfg.cov_dim) {
    if (cfg.hidden < 1) throw std::invalid_argument("deepar: hidden size must be >= 1");
    if (cfg.conditioning < 1)
        throw std::invalid_argument("deepar: conditioning length must be >= 1");
    if (cfg.horizon < 1) throw std::invalid_argument("deepar: horizon must be >= 1");

    num::Rng rng(num::derive_seed(cfg.init_seed, 0xdeeba));
    const std::size_t H = cfg.hidden;
    W_x_ = glorot(rng, 4 * H, input_dim_);
    W_h_ = glorot(rng, 4 * H, H);
    {
        // forget-gate bias starts at 1 so early training keeps memory open
        std::vector<double> b(4 * H, 0.0);
        for (std::size_t i = H; i < 2 * H; ++i) b[i] = 1.0;
        b_ = Tensor::make(std::move(b), {4 * H}, true);
    }
    W_mu_ = glorot(rng, 1, H);
    b_mu_ = Tensor::make({0.0}, {1}, true);
    W_s_ = glorot(rng, 1, H);
    b_s_ = Tensor::make({0.0}, {1}, true);
}

std::vector<num::Parameter> DeepArModel::parameters() {
    return {{W_x_, "deepar.lstm.W_x"}, {W_h_, "deepar.lstm.W_h"}, {b_, "deepar.lstm.b"},
            {W_mu_, "deepar.head.W_mu"}, {b_mu_, "deepar.head.b_mu"},
            {W_s_, "deepar.head.W_s"},   {b_s_, "deepar.head.b_s"}};
}

void DeepArModel::cell_forward(const TensorPtr& x, TensorPtr& h, TensorPtr& c) const {
    const std::size_t H = cfg_.hidden;
    auto gates = add_bias(add(matmul(W_x_, x), matmul(W_h_, h)), b_);
    auto i = sigmoid(slice_rows(gates, 0, H));
    auto f = sigmoid(slice_rows(gates, H, H));
    auto g = tanh_act(slice_rows(gates, 2 * H, H));
    auto o = sigmoid(slice_rows(gates, 3 * H, H));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh_act(c));
}

std::pair<TensorPtr, TensorPtr> DeepArModel::head_forward(const TensorPtr& h) const {
    auto mu = add_bias(matmul(W_mu_, h), b_mu_);
    auto scale_raw = add_bias(matmul(W_s_, h), b_s_);
    if (cfg_.likelihood == Likelihood::Gaussian) {
        return {mu, softplus(scale_raw)};  // sigma
    }
    return {softplus(mu), softplus(scale_raw)};  // NB needs mu > 0; second output is alpha
}

num::TensorPtr DeepArModel::loss(const std::vector<data::WindowSample>& batch, Mode) {
    if (batch.empty()) throw std::invalid_argument("deepar loss: empty batch");
    const std::size_t B = batch.size();
    const std::size_t T = batch.front().total_len();
    for (const auto& w : batch) {
        if (w.total_len() != T || w.cov_dim != cfg_.cov_dim)
            throw std::invalid_argument("deepar loss: window geometry mismatch");
        if (w.conditioning_len() == 0)
            throw std::invalid_argument("deepar loss: zero-length conditioning");
    }

    auto target_at = [&](const data::WindowSample& w, std::size_t t) {
        return t < w.conditioning_len() ? w.z_conditioning[t]
                                        : w.z_prediction[t - w.conditioning_len()];
    };

    auto h = Tensor::zeros({cfg_.hidden, B});
    auto c = Tensor::zeros({cfg_.hidden, B});
    TensorPtr total;
    for (std::size_t t = 0; t < T; ++t) {
        // teacher forcing: inputs are ground truth, so the step input is a constant
        std::vector<double> xin(input_dim_ * B);
        std::vector<double> zt(B);
        for (std::size_t j = 0; j < B; ++j) {
            xin[j] = t == 0 ? 0.0 : target_at(batch[j], t - 1);
            for (std::size_t k = 0; k < cfg_.cov_dim; ++k)
                xin[(1 + k) * B + j] = batch[j].covariate(t, k);
            zt[j] = target_at(batch[j], t);
        }
        cell_forward(Tensor::make(std::move(xin), {input_dim_, B}), h, c);
        auto [a, bparam] = head_forward(h);
        auto z = Tensor::make(std::move(zt), {1, B});
        auto step_loss = cfg_.likelihood == Likelihood::Gaussian
                             ? gaussian_nll(z, a, bparam)
                             : negbin_nll(z, a, bparam);
        total = total ? add(total, step_loss) : step_loss;
    }
    return num::scale(total, 1.0 / static_cast<double>(T));
}

DeepArModel::State DeepArModel::initial_state(std::size_t batch) const {
    return {Tensor::zeros({cfg_.hidden, batch}), Tensor::zeros({cfg_.hidden, batch})};
}

std::pair<double, double> DeepArModel::step(State& state, double z_prev,
                                            const std::vector<double>& covariates) const {
    if (covariates.size() != cfg_.cov_dim)
        throw std::invalid_argument("deepar step: covariate dimension mismatch");
    num::NoGradGuard guard;
    std::vector<double> xin(input_dim_);
    xin[0] = z_prev;
    for (std::size_t k = 0; k < cfg_.cov_dim; ++k) xin[1 + k] = covariates[k];
    cell_forward(Tensor::make(std::move(xin), {input_dim_, 1}), state.h, state.c);
    auto [a, b] = head_forward(state.h);
    return {a->item(), b->item()};
}

DeepArModel::State DeepArModel::condition(const data::WindowSample& sample) const {
    if (sample.conditioning_len() == 0)
        throw std::invalid_argument("deepar: zero-length conditioning");
    State st = initial_state(1);
    std::vector<double> cov(cfg_.cov_dim);
    for (std::size_t t = 0; t < sample.conditioning_len(); ++t) {
        for (std::size_t k = 0; k < cfg_.cov_dim; ++k) cov[k] = sample.covariate(t, k);
        step(st, t == 0 ? 0.0 : sample.z_conditioning[t - 1], cov);
    }
    return st;
}

std::pair<std::vector<double>, std::vector<double>> DeepArModel::conditioned_params(
    const data::WindowSample& sample) const {
    const std::size_t T = sample.total_len();
    auto target_at = [&](std::size_t t) {
        return t < sample.conditioning_len()
                   ? sample.z_conditioning[t]
                   : sample.z_prediction[t - sample.conditioning_len()];
    };
    State st = initial_state(1);
    std::vector<double> mus(T), scales(T), cov(cfg_.cov_dim);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < cfg_.cov_dim; ++k) cov[k] = sample.covariate(t, k);
        auto [a, b] = step(st, t == 0 ? 0.0 : target_at(t - 1), cov);
        mus[t] = a;
        scales[t] = b;
    }
    return {mus, scales};
}

ForecastResult DeepArModel::forecast(const data::WindowSample& sample, std::size_t n_samples,
                                     std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("deepar forecast: n_samples must be >= 1");
    if (sample.cov_dim != cfg_.cov_dim)
        throw std::invalid_argument("deepar forecast: covariate dimension mismatch");
    const std::size_t t0 = sample.conditioning_len();
    const std::size_t H = sample.horizon();

    const State conditioned = condition(sample);

    ForecastResult result;
    result.t0 = t0;
    result.trajectories.reserve(n_samples);
    std::vector<double> cov(cfg_.cov_dim);
    for (std::size_t j = 0; j < n_samples; ++j) {
        num::Rng rng(num::derive_seed(seed, j));
        State st{Tensor::make(conditioned.h->data, conditioned.h->shape),
                 Tensor::make(conditioned.c->data, conditioned.c->shape)};
        std::vector<double> traj(sample.z_conditioning);
        traj.reserve(t0 + H);
        double z_prev = sample.z_conditioning.back();
        for (std::size_t s = 0; s < H; ++s) {
            for (std::size_t k = 0; k < cfg_.cov_dim; ++k)
                cov[k] = sample.covariate(t0 + s, k);
            auto [a, b] = step(st, z_prev, cov);
            double draw;
            if (cfg_.likelihood == Likelihood::Gaussian) {
                draw = rng.normal(a, b);
            } else {
                // NB sampled via its Gaussian moment approximation: the
                // quantized targets this mode is meant for are far from
                // the small-count regime
                draw = std::max(0.0, std::round(rng.normal(a, std::sqrt(a + a * a * b))));
            }
            traj.push_back(draw);
            z_prev = draw;
        }
        result.trajectories.push_back(std::move(traj));
    }
    summarize_trajectories(result);
    return result;
}

io::Checkpoint DeepArModel::to_checkpoint() const {
    io::Checkpoint ckpt;
    ckpt.kind = "deepar";
    ckpt.meta["hidden"] = cfg_.hidden;
    ckpt.meta["cov_dim"] = cfg_.cov_dim;
    ckpt.meta["conditioning"] = cfg_.conditioning;
    ckpt.meta["horizon"] = cfg_.horizon;
    ckpt.meta["likelihood"] = to_string(cfg_.likelihood);
    ckpt.meta["init_seed"] = cfg_.init_seed;
    for (const auto& p : const_cast<DeepArModel*>(this)->parameters())
        ckpt.tensors.emplace_back(p.name, Tensor::make(p.tensor->data, p.tensor->shape));
    return ckpt;
}

void DeepArModel::load_state(const io::Checkpoint& ckpt) {
    if (ckpt.kind != "deepar")
        throw std::runtime_error("deepar: checkpoint kind \"" + ckpt.kind + "\" mismatch");
    for (auto& p : parameters()) {
        const auto& src = ckpt.tensor(p.name);
        if (src->shape != p.tensor->shape)
            throw std::runtime_error("deepar: shape mismatch for \"" + p.name + "\"");
        p.tensor->data = src->data;
    }
}

DeepArModel DeepArModel::from_checkpoint(const io::Checkpoint& ckpt) {
    DeepArConfig cfg;
    cfg.hidden = ckpt.meta.at("hidden").get<std::size_t>();
    cfg.cov_dim = ckpt.meta.at("cov_dim").get<std::size_t>();
    cfg.conditioning = ckpt.meta.at("conditioning").get<std::size_t>();
    cfg.horizon = ckpt.meta.at("horizon").get<std::size_t>();
    cfg.likelihood = likelihood_from_string(ckpt.meta.at("likelihood").get<std::string>());
    cfg.init_seed = ckpt.meta.value("init_seed", std::uint64_t{1});
    DeepArModel model(cfg);
    model.load_state(ckpt);
    return model;
}

}  // namespace battsynth::model
