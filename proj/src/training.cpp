#include "battsynth/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "battsynth/rng.hpp"

namespace battsynth::train {

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw std::invalid_argument("unknown optimizer \"" + s + "\" (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

Optimizer::Optimizer(std::vector<num::Parameter> params, OptimizerKind kind,
                     double learning_rate)
    : params_(std::move(params)), kind_(kind), lr_(learning_rate) {
    if (!(lr_ > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
    if (kind_ == OptimizerKind::Adam) {
        for (const auto& p : params_) {
            m_.emplace_back(p.tensor->size(), 0.0);
            v_.emplace_back(p.tensor->size(), 0.0);
        }
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.tensor->zero_grad();
}

void Optimizer::step() {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& w = params_[i].tensor->data;
        const auto& g = params_[i].tensor->grad;
        if (g.size() != w.size()) continue;  // never touched by backward
        if (kind_ == OptimizerKind::Sgd) {
            for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr_ * g[j];
        } else {
            auto& m = m_[i];
            auto& v = v_[i];
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
            }
        }
    }
}

namespace {

double batched_loss(model::Forecaster& model, const std::vector<data::WindowSample>& windows,
                    std::size_t batch_size, model::Mode mode) {
    num::NoGradGuard guard;
    double acc = 0.0;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, windows.size() - start);
        std::vector<data::WindowSample> batch(windows.begin() + start,
                                              windows.begin() + start + len);
        acc += model.loss(batch, mode)->item() * static_cast<double>(len);
    }
    return acc / static_cast<double>(windows.size());
}

}  // namespace

TrainReport fit(model::Forecaster& model, const std::vector<data::WindowSample>& train_windows,
                const std::vector<data::WindowSample>& val_windows,
                const OptimizerConfig& cfg) {
    if (train_windows.empty() || val_windows.empty())
        throw std::invalid_argument("fit: train and validation splits must be non-empty");
    if (cfg.batch_size < 1) throw std::invalid_argument("fit: batch size must be >= 1");

    const auto t_start = std::chrono::steady_clock::now();
    Optimizer opt(model.parameters(), cfg.kind, cfg.learning_rate);

    TrainReport report;
    report.best_val = std::numeric_limits<double>::infinity();
    io::Checkpoint best;
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        num::Rng shuffle_rng(num::derive_seed(cfg.seed, epoch + 1));
        shuffle_rng.shuffle(order);

        double train_acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            std::vector<data::WindowSample> batch;
            batch.reserve(len);
            for (std::size_t i = 0; i < len; ++i)
                batch.push_back(train_windows[order[start + i]]);

            opt.zero_grad();
            auto loss = model.loss(batch, model::Mode::Train);
            const double value = loss->item();
            if (!std::isfinite(value))
                throw TrainingError("fit: non-finite training loss at epoch " +
                                        std::to_string(epoch) + " (batch starting at " +
                                        std::to_string(start) + ")",
                                    epoch);
            num::backward(loss);
            opt.step();
            train_acc += value * static_cast<double>(len);
        }
        report.train_curve.push_back(train_acc / static_cast<double>(order.size()));

        const double val = batched_loss(model, val_windows, cfg.batch_size, model::Mode::Eval);
        if (!std::isfinite(val))
            throw TrainingError(
                "fit: non-finite validation loss at epoch " + std::to_string(epoch), epoch);
        report.val_curve.push_back(val);

        if (val < report.best_val) {
            report.best_val = val;
            report.best_epoch = epoch;
            best = model.to_checkpoint();
            since_best = 0;
        } else {
            ++since_best;
            if (since_best > cfg.early_stop_patience) {
                report.early_stopped = true;
                break;
            }
        }
    }

    if (!best.tensors.empty()) model.load_state(best);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace battsynth::train
