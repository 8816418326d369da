#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "battsynth/checkpoint.hpp"
#include "battsynth/nbeats.hpp"
#include "battsynth/rng.hpp"
#include "battsynth/training.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace battsynth;
using model::NBeatsConfig;
using model::NBeatsModel;
using model::NBeatsTrace;
using testutil::series_windows;
using testutil::window_from;

namespace {

void fill(const num::TensorPtr& t, double v) {
    std::fill(t->data.begin(), t->data.end(), v);
}

void set_identity(const num::TensorPtr& t) {
    REQUIRE(t->rank() == 2);
    REQUIRE(t->shape[0] == t->shape[1]);
    fill(t, 0.0);
    for (std::size_t i = 0; i < t->shape[0]; ++i) t->data[i * t->shape[0] + i] = 1.0;
}

NBeatsConfig tiny_config(std::size_t horizon, std::size_t multiple, std::size_t stacks,
                         std::size_t blocks, std::size_t width, std::uint64_t seed = 1) {
    NBeatsConfig cfg;
    cfg.horizon = horizon;
    cfg.lookback_multiple = multiple;
    cfg.stacks = stacks;
    cfg.blocks_per_stack = blocks;
    cfg.width = width;
    cfg.init_seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("nbeats: config validation and derived dimensions") {
    NBeatsConfig cfg = tiny_config(5, 2, 3, 3, 8);
    CHECK(cfg.lookback() == 10);
    NBeatsModel m(cfg);
    CHECK(m.n_blocks() == 9);
    CHECK(m.conditioning_len() == 10);
    CHECK(m.horizon() == 5);
    // theta dims default to horizon / lookback
    CHECK(m.config().theta_f_dim == 5);
    CHECK(m.config().theta_b_dim == 10);
    CHECK(m.block(0).Vf->shape == std::vector<std::size_t>{5, 5});
    CHECK(m.block(0).Vb->shape == std::vector<std::size_t>{10, 10});

    cfg.horizon = 0;
    CHECK_THROWS_AS(NBeatsModel{cfg}, std::invalid_argument);
    cfg = tiny_config(5, 0, 1, 1, 8);
    CHECK_THROWS_AS(NBeatsModel{cfg}, std::invalid_argument);
    cfg = tiny_config(5, 2, 0, 1, 8);
    CHECK_THROWS_AS(NBeatsModel{cfg}, std::invalid_argument);
}

TEST_CASE("nbeats: zeroed heads produce exactly zero block outputs") {
    NBeatsModel m(tiny_config(3, 2, 1, 1, 8));
    auto& b = m.block(0);
    fill(b.Wf, 0.0);
    fill(b.bf, 0.0);
    fill(b.Wb, 0.0);
    fill(b.bb, 0.0);
    auto x = num::Tensor::make({0.3, -0.1, 0.7, 0.2, -0.4, 0.6}, {6, 1});
    auto [backcast, forecast] = m.block_forward(0, x);
    for (double v : backcast->data) CHECK(v == 0.0);
    for (double v : forecast->data) CHECK(v == 0.0);
}

TEST_CASE("nbeats: a one-hot theta with identity basis selects a basis vector") {
    NBeatsModel m(tiny_config(4, 1, 1, 1, 8));  // df defaults to H = 4
    auto& b = m.block(0);
    fill(b.Wf, 0.0);
    fill(b.bf, 0.0);
    b.bf->data[2] = 1.0;  // theta_f = e_2 regardless of the input
    set_identity(b.Vf);
    auto x = num::Tensor::make({0.5, 0.1, -0.2, 0.8}, {4, 1});
    auto [backcast, forecast] = m.block_forward(0, x);
    CHECK(forecast->data == std::vector<double>{0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("nbeats: block output matches an independent dense reimplementation") {
    NBeatsModel m(tiny_config(3, 2, 1, 1, 5, 42));
    const std::size_t L = 6;
    std::vector<double> xv{0.4, -0.3, 0.9, 0.05, -0.7, 0.25};
    auto [backcast, forecast] = m.block_forward(0, num::Tensor::make(xv, {L, 1}));

    auto dense = [](const num::TensorPtr& W, const std::vector<double>& v,
                    const num::TensorPtr& bias) {
        std::vector<double> out(W->shape[0], 0.0);
        for (std::size_t r = 0; r < W->shape[0]; ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < W->shape[1]; ++k) acc += W->data[r * W->shape[1] + k] * v[k];
            out[r] = acc + (bias ? bias->data[r] : 0.0);
        }
        return out;
    };
    auto relu_v = [](std::vector<double> v) {
        for (double& x : v) x = x > 0.0 ? x : 0.0;
        return v;
    };

    const auto& b = m.block(0);
    auto h = relu_v(dense(b.W1, xv, b.b1));
    h = relu_v(dense(b.W2, h, b.b2));
    h = relu_v(dense(b.W3, h, b.b3));
    h = relu_v(dense(b.W4, h, b.b4));
    auto theta_f = dense(b.Wf, h, b.bf);
    auto theta_b = dense(b.Wb, h, b.bb);
    auto want_f = dense(b.Vf, theta_f, nullptr);
    auto want_b = dense(b.Vb, theta_b, nullptr);

    REQUIRE(forecast->data.size() == want_f.size());
    for (std::size_t i = 0; i < want_f.size(); ++i)
        CHECK(forecast->data[i] == doctest::Approx(want_f[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < want_b.size(); ++i)
        CHECK(backcast->data[i] == doctest::Approx(want_b[i]).epsilon(1e-12));
}

TEST_CASE("nbeats: a single-block model is exactly that block's forecast") {
    NBeatsModel m(tiny_config(4, 2, 1, 1, 6, 3));
    auto x = num::Tensor::make({0.1, 0.4, -0.2, 0.6, 0.3, -0.5, 0.2, 0.7}, {8, 1});
    auto [backcast, forecast] = m.block_forward(0, x);
    auto out = m.model_forward(x);
    CHECK(out->data == forecast->data);
}

TEST_CASE("nbeats: an identity block hands exact zeros to its successor") {
    // dyadic positive inputs pass ReLU unchanged, so an identity tower with
    // identity backcast head reproduces the input bit for bit
    NBeatsConfig cfg = tiny_config(2, 2, 1, 2, 4, 9);  // width == lookback == 4
    NBeatsModel m(cfg);
    auto& b = m.block(0);
    set_identity(b.W1);
    set_identity(b.W2);
    set_identity(b.W3);
    set_identity(b.W4);
    fill(b.b1, 0.0);
    fill(b.b2, 0.0);
    fill(b.b3, 0.0);
    fill(b.b4, 0.0);
    set_identity(b.Wb);  // db defaults to lookback == width
    fill(b.bb, 0.0);
    set_identity(b.Vb);
    fill(b.Wf, 0.0);
    fill(b.bf, 0.0);

    auto x = num::Tensor::make({0.5, 0.25, 0.75, 0.5}, {4, 1});
    NBeatsTrace trace;
    m.model_forward(x, &trace);
    REQUIRE(trace.inputs.size() == 2);
    CHECK(trace.backcasts[0] == x->data);
    CHECK(trace.inputs[1] == std::vector<double>{0.0, 0.0, 0.0, 0.0});
}

TEST_CASE("nbeats: doubly-residual wiring telescopes") {
    NBeatsModel m(tiny_config(3, 2, 2, 2, 7, 12));
    num::Rng rng(99);
    std::vector<double> xv(6);
    for (double& v : xv) v = rng.uniform(-1.0, 1.0);
    auto x = num::Tensor::make(xv, {6, 1});

    NBeatsTrace trace;
    auto out = m.model_forward(x, &trace);
    REQUIRE(trace.inputs.size() == 4);

    CHECK(trace.inputs[0] == xv);
    for (std::size_t d = 0; d + 1 < 4; ++d) {
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(trace.inputs[d + 1][i] == trace.inputs[d][i] - trace.backcasts[d][i]);
        }
    }
    for (std::size_t s = 0; s < 3; ++s) {
        double total = 0.0;
        for (std::size_t d = 0; d < 4; ++d) total += trace.forecasts[d][s];
        CHECK(out->data[s] == doctest::Approx(total).epsilon(1e-12));
    }
}

TEST_CASE("nbeats: basis column permutation with matching head rows is a no-op") {
    NBeatsModel m(tiny_config(4, 1, 1, 1, 6, 21));
    auto x = num::Tensor::make({0.2, -0.6, 0.9, 0.1}, {4, 1});
    auto before = m.block_forward(0, x).second->data;

    auto& b = m.block(0);
    const std::size_t df = m.config().theta_f_dim;
    const std::size_t width = m.config().width;
    std::vector<std::size_t> perm(df);
    for (std::size_t j = 0; j < df; ++j) perm[j] = df - 1 - j;

    auto Vf = b.Vf->data;
    auto Wf = b.Wf->data;
    auto bf = b.bf->data;
    for (std::size_t j = 0; j < df; ++j) {
        for (std::size_t r = 0; r < 4; ++r) b.Vf->data[r * df + j] = Vf[r * df + perm[j]];
        for (std::size_t k = 0; k < width; ++k) b.Wf->data[j * width + k] = Wf[perm[j] * width + k];
        b.bf->data[j] = bf[perm[j]];
    }

    auto after = m.block_forward(0, x).second->data;
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-12));
}

TEST_CASE("nbeats: loss consumes only the most recent lookback steps") {
    NBeatsModel m(tiny_config(2, 2, 1, 1, 5, 4));  // lookback 4
    auto w1 = window_from({9.0, -9.0, 0.3, 0.1, 0.4, 0.2}, {0.5, 0.3});
    auto w2 = window_from({-1.0, 7.0, 0.3, 0.1, 0.4, 0.2}, {0.5, 0.3});
    CHECK(m.loss({w1})->item() == m.loss({w2})->item());
    auto f1 = m.forecast(w1, 1, 0);
    auto f2 = m.forecast(w2, 1, 0);
    CHECK(f1.point == f2.point);

    // too little conditioning is rejected
    auto small = window_from({0.1, 0.2, 0.3}, {0.5, 0.3});
    CHECK_THROWS_AS(m.loss({small}), std::invalid_argument);
    CHECK_THROWS_AS(m.forecast_values({0.1, 0.2, 0.3}), std::invalid_argument);
}

TEST_CASE("nbeats: loss equals the mean absolute forecast error") {
    NBeatsModel m(tiny_config(3, 2, 1, 2, 5, 8));
    auto w = window_from({0.2, 0.5, -0.1, 0.4, 0.6, 0.0}, {0.3, 0.1, 0.2});
    const double loss = m.loss({w})->item();
    auto point = m.forecast_values(w.z_conditioning);
    double want = 0.0;
    for (std::size_t s = 0; s < 3; ++s) want += std::abs(point[s] - w.z_prediction[s]);
    want /= 3.0;
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("nbeats: deterministic forecast result shape") {
    NBeatsModel m(tiny_config(3, 2, 1, 1, 5, 2));
    auto w = window_from({0.2, 0.5, -0.1, 0.4, 0.6, 0.0}, {0.3, 0.1, 0.2});
    auto fc = m.forecast(w, 128, 7);
    CHECK(fc.t0 == 0);
    REQUIRE(fc.trajectories.size() == 1);  // seed and sample count are ignored
    CHECK(fc.trajectories[0] == fc.point);
    CHECK(fc.q10 == fc.point);
    CHECK(fc.q50 == fc.point);
    CHECK(fc.q90 == fc.point);
    CHECK(fc.mean == fc.point);
    CHECK(m.forecast(w, 1, 99).point == fc.point);
}

TEST_CASE("nbeats: gradient check on a two-block toy model") {
    NBeatsModel m(tiny_config(2, 1, 1, 2, 4, 6));
    // move every bias off zero so no ReLU preactivation sits on the kink,
    // where finite differences and subgradients legitimately disagree
    num::Rng nudge(77);
    for (auto& p : m.parameters())
        if (p.tensor->rank() == 1)
            for (double& v : p.tensor->data) v = nudge.uniform(0.05, 0.35);
    auto w = window_from({0.4, -0.2}, {0.3, 0.5});
    auto loss = m.loss({w});
    num::backward(loss);
    auto res = gradcheck::compare([&] { return m.loss({w})->item(); }, m.parameters());
    INFO(res.worst);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("nbeats: learns a constant series") {
    NBeatsConfig cfg = tiny_config(4, 2, 1, 1, 8, 5);
    NBeatsModel m(cfg);
    auto windows = series_windows([](std::size_t) { return 0.5; }, 40, 8, 4, 1);
    REQUIRE(windows.size() >= 25);
    std::vector<data::WindowSample> train(windows.begin(), windows.begin() + 20);
    std::vector<data::WindowSample> val(windows.begin() + 20, windows.begin() + 25);

    train::OptimizerConfig opt;
    opt.learning_rate = 0.002;
    opt.batch_size = 20;  // full batch: the problem is deterministic
    opt.max_epochs = 200;
    opt.early_stop_patience = 200;
    opt.seed = 1;
    auto report = train::fit(m, train, val, opt);
    CHECK(report.best_val < 1e-3);
}

TEST_CASE("nbeats: learns to extrapolate a linear ramp") {
    NBeatsConfig cfg = tiny_config(4, 2, 1, 2, 16, 8);  // lookback = 2H
    NBeatsModel m(cfg);
    auto windows = series_windows([](std::size_t i) { return 0.005 * double(i); }, 120, 8, 4, 1);
    REQUIRE(windows.size() >= 80);
    std::vector<data::WindowSample> train(windows.begin(), windows.begin() + 60);
    std::vector<data::WindowSample> val(windows.begin() + 60, windows.begin() + 70);

    train::OptimizerConfig opt;
    opt.learning_rate = 0.01;
    opt.batch_size = 32;
    opt.max_epochs = 500;
    opt.early_stop_patience = 500;
    opt.seed = 2;
    auto report = train::fit(m, train, val, opt);
    CHECK(report.best_val < 0.02);
}

TEST_CASE("nbeats: zero-epoch training is a no-op") {
    NBeatsModel m(tiny_config(3, 2, 1, 1, 6, 13));
    auto snapshot = m.to_checkpoint();
    auto windows = series_windows([](std::size_t i) { return 0.01 * double(i); }, 30, 6, 3, 1);
    std::vector<data::WindowSample> train(windows.begin(), windows.begin() + 10);
    std::vector<data::WindowSample> val(windows.begin() + 10, windows.begin() + 14);

    train::OptimizerConfig opt;
    opt.max_epochs = 0;
    auto report = train::fit(m, train, val, opt);
    CHECK(report.epochs_run() == 0);
    CHECK(report.train_curve.empty());
    CHECK(report.val_curve.empty());
    for (auto& p : m.parameters()) CHECK(p.tensor->data == snapshot.tensor(p.name)->data);
}

TEST_CASE("nbeats: checkpoint round trip preserves forecasts bit-exactly") {
    NBeatsModel m(tiny_config(5, 2, 2, 2, 9, 33));
    testutil::TempFile f("nbeats.ckpt");
    io::save_checkpoint(m.to_checkpoint(), f.str());
    auto loaded = NBeatsModel::from_checkpoint(io::load_checkpoint(f.str()));

    CHECK(loaded.config().width == 9);
    CHECK(loaded.config().stacks == 2);
    CHECK(loaded.conditioning_len() == 10);

    std::vector<double> history(10);
    for (std::size_t i = 0; i < 10; ++i) history[i] = 0.1 * double(i) - 0.3;
    CHECK(m.forecast_values(history) == loaded.forecast_values(history));
}
