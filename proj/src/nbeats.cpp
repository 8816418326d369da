#include "battsynth/nbeats.hpp"

#include <cmath>
#include <stdexcept>

#include "battsynth/rng.hpp"

namespace battsynth::model {

using num::Tensor;
using num::TensorPtr;

namespace {

TensorPtr glorot(num::Rng& rng, std::size_t rows, std::size_t cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> w(rows * cols);
    for (double& v : w) v = rng.uniform(-limit, limit);
    return Tensor::make(std::move(w), {rows, cols}, true);
}

TensorPtr zeros_vec(std::size_t n) {
    return Tensor::make(std::vector<double>(n, 0.0), {n}, true);
}

}  // namespace

NBeatsModel::NBeatsModel(const NBeatsConfig& cfg) : cfg_(cfg) {
    if (cfg.horizon < 1) throw std::invalid_argument("nbeats: horizon must be >= 1");
    if (cfg.lookback_multiple < 1)
        throw std::invalid_argument("nbeats: lookback must be a positive multiple of horizon");
    if (cfg.stacks < 1 || cfg.blocks_per_stack < 1)
        throw std::invalid_argument("nbeats: need at least one stack and block");
    if (cfg.width < 1) throw std::invalid_argument("nbeats: width must be >= 1");

    const std::size_t L = cfg.lookback();
    const std::size_t H = cfg.horizon;
    const std::size_t df = cfg.theta_f_dim ? cfg.theta_f_dim : H;
    const std::size_t db = cfg.theta_b_dim ? cfg.theta_b_dim : L;
    cfg_.theta_f_dim = df;
    cfg_.theta_b_dim = db;

    num::Rng rng(num::derive_seed(cfg.init_seed, 0xbea75));
    const std::size_t w = cfg.width;
    for (std::size_t i = 0; i < cfg.stacks * cfg.blocks_per_stack; ++i) {
        Block b;
        b.W1 = glorot(rng, w, L);
        b.b1 = zeros_vec(w);
        b.W2 = glorot(rng, w, w);
        b.b2 = zeros_vec(w);
        b.W3 = glorot(rng, w, w);
        b.b3 = zeros_vec(w);
        b.W4 = glorot(rng, w, w);
        b.b4 = zeros_vec(w);
        b.Wf = glorot(rng, df, w);
        b.bf = zeros_vec(df);
        b.Wb = glorot(rng, db, w);
        b.bb = zeros_vec(db);
        b.Vf = glorot(rng, H, df);
        b.Vb = glorot(rng, L, db);
        blocks_.push_back(std::move(b));
    }
}

std::vector<num::Parameter> NBeatsModel::parameters() {
    std::vector<num::Parameter> params;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "nbeats.block" + std::to_string(i) + ".";
        Block& b = blocks_[i];
        params.push_back({b.W1, p + "W1"});
        params.push_back({b.b1, p + "b1"});
        params.push_back({b.W2, p + "W2"});
        params.push_back({b.b2, p + "b2"});
        params.push_back({b.W3, p + "W3"});
        params.push_back({b.b3, p + "b3"});
        params.push_back({b.W4, p + "W4"});
        params.push_back({b.b4, p + "b4"});
        params.push_back({b.Wf, p + "Wf"});
        params.push_back({b.bf, p + "bf"});
        params.push_back({b.Wb, p + "Wb"});
        params.push_back({b.bb, p + "bb"});
        params.push_back({b.Vf, p + "Vf"});
        params.push_back({b.Vb, p + "Vb"});
    }
    return params;
}

std::pair<TensorPtr, TensorPtr> NBeatsModel::block_forward(std::size_t block,
                                                           const TensorPtr& x) const {
    if (x->rank() != 2 || x->shape[0] != cfg_.lookback())
        throw std::invalid_argument("nbeats block_forward: input must be [lookback x batch]");
    const Block& b = blocks_.at(block);
    auto h1 = relu(add_bias(matmul(b.W1, x), b.b1));
    auto h2 = relu(add_bias(matmul(b.W2, h1), b.b2));
    auto h3 = relu(add_bias(matmul(b.W3, h2), b.b3));
    auto h4 = relu(add_bias(matmul(b.W4, h3), b.b4));
    auto theta_f = add_bias(matmul(b.Wf, h4), b.bf);
    auto theta_b = add_bias(matmul(b.Wb, h4), b.bb);
    return {matmul(b.Vb, theta_b), matmul(b.Vf, theta_f)};
}

TensorPtr NBeatsModel::model_forward(const TensorPtr& x, NBeatsTrace* trace) const {
    TensorPtr residual = x;
    TensorPtr total;
    for (std::size_t d = 0; d < blocks_.size(); ++d) {
        if (trace) trace->inputs.push_back(residual->data);
        auto [backcast, forecast] = block_forward(d, residual);
        if (trace) {
            trace->backcasts.push_back(backcast->data);
            trace->forecasts.push_back(forecast->data);
        }
        residual = sub(residual, backcast);
        total = total ? add(total, forecast) : forecast;
    }
    return total;
}

num::TensorPtr NBeatsModel::loss(const std::vector<data::WindowSample>& batch, Mode) {
    if (batch.empty()) throw std::invalid_argument("nbeats loss: empty batch");
    const std::size_t L = cfg_.lookback();
    const std::size_t H = cfg_.horizon;
    const std::size_t B = batch.size();
    std::vector<double> xv(L * B), yv(H * B);
    for (std::size_t j = 0; j < B; ++j) {
        const auto& w = batch[j];
        if (w.conditioning_len() < L || w.horizon() != H)
            throw std::invalid_argument("nbeats loss: window geometry mismatch");
        const std::size_t off = w.conditioning_len() - L;  // consume the most recent L
        for (std::size_t t = 0; t < L; ++t) xv[t * B + j] = w.z_conditioning[off + t];
        for (std::size_t s = 0; s < H; ++s) yv[s * B + j] = w.z_prediction[s];
    }
    auto x = Tensor::make(std::move(xv), {L, B});
    auto y = Tensor::make(std::move(yv), {H, B});
    return mean(abs_val(sub(model_forward(x), y)));
}

std::vector<double> NBeatsModel::forecast_values(const std::vector<double>& history) const {
    const std::size_t L = cfg_.lookback();
    if (history.size() < L)
        throw std::invalid_argument("nbeats: history shorter than lookback " +
                                    std::to_string(L));
    num::NoGradGuard guard;
    std::vector<double> xv(history.end() - static_cast<std::ptrdiff_t>(L), history.end());
    auto out = model_forward(Tensor::make(std::move(xv), {L, 1}));
    return out->data;
}

ForecastResult NBeatsModel::forecast(const data::WindowSample& sample, std::size_t, std::uint64_t) {
    ForecastResult result;
    result.t0 = 0;
    result.point = forecast_values(sample.z_conditioning);
    result.mean = result.point;
    result.q10 = result.point;
    result.q50 = result.point;
    result.q90 = result.point;
    result.trajectories = {result.point};
    return result;
}

io::Checkpoint NBeatsModel::to_checkpoint() const {
    io::Checkpoint ckpt;
    ckpt.kind = "nbeats";
    ckpt.meta["horizon"] = cfg_.horizon;
    ckpt.meta["lookback_multiple"] = cfg_.lookback_multiple;
    ckpt.meta["stacks"] = cfg_.stacks;
    ckpt.meta["blocks_per_stack"] = cfg_.blocks_per_stack;
    ckpt.meta["width"] = cfg_.width;
    ckpt.meta["theta_f_dim"] = cfg_.theta_f_dim;
    ckpt.meta["theta_b_dim"] = cfg_.theta_b_dim;
    ckpt.meta["init_seed"] = cfg_.init_seed;
    for (const auto& p : const_cast<NBeatsModel*>(this)->parameters())
        ckpt.tensors.emplace_back(p.name, Tensor::make(p.tensor->data, p.tensor->shape));
    return ckpt;
}

void NBeatsModel::load_state(const io::Checkpoint& ckpt) {
    if (ckpt.kind != "nbeats")
        throw std::runtime_error("nbeats: checkpoint kind \"" + ckpt.kind + "\" mismatch");
    for (auto& p : parameters()) {
        const auto& src = ckpt.tensor(p.name);
        if (src->shape != p.tensor->shape)
            throw std::runtime_error("nbeats: shape mismatch for \"" + p.name + "\"");
        p.tensor->data = src->data;
    }
}

NBeatsModel NBeatsModel::from_checkpoint(const io::Checkpoint& ckpt) {
    NBeatsConfig cfg;
    cfg.horizon = ckpt.meta.at("horizon").get<std::size_t>();
    cfg.lookback_multiple = ckpt.meta.at("lookback_multiple").get<std::size_t>();
    cfg.stacks = ckpt.meta.at("stacks").get<std::size_t>();
    cfg.blocks_per_stack = ckpt.meta.at("blocks_per_stack").get<std::size_t>();
    cfg.width = ckpt.meta.at("width").get<std::size_t>();
    cfg.theta_f_dim = ckpt.meta.at("theta_f_dim").get<std::size_t>();
    cfg.theta_b_dim = ckpt.meta.at("theta_b_dim").get<std::size_t>();
    cfg.init_seed = ckpt.meta.value("init_seed", std::uint64_t{1});
    NBeatsModel model(cfg);
    model.load_state(ckpt);
    return model;
}

}  // namespace battsynth::model
