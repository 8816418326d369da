#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "battsynth/rng.hpp"
#include "battsynth/tensor.hpp"
#include "gradcheck.hpp"

using namespace battsynth::num;

namespace {

TensorPtr random_tensor(Rng& rng, std::vector<std::size_t> dims, bool req_grad,
                        double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::make(std::move(v), std::move(dims), req_grad);
}

}  // namespace

TEST_CASE("tensor shape/data invariant") {
    CHECK_THROWS_AS(Tensor::make({1.0, 2.0, 3.0}, {2, 2}), std::invalid_argument);
    auto t = Tensor::make({1.0, 2.0, 3.0, 4.0}, {2, 2});
    CHECK(t->size() == 4);
    CHECK(t->rows() == 2);
}

TEST_CASE("matmul identity case") {
    auto eye = Tensor::make({1, 0, 0, 1}, {2, 2});
    auto m = Tensor::make({1, 2, 3, 4}, {2, 2});
    auto out = matmul(eye, m);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out->data[i] == doctest::Approx(m->data[i]));
}

TEST_CASE("matmul hand expansion") {
    auto a = Tensor::make({1, 2}, {1, 2});
    auto b = Tensor::make({3, 4}, {2, 1});
    auto out = matmul(a, b);
    CHECK(out->item() == doctest::Approx(11.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    auto a = Tensor::make({1, 2, 3, 4, 5, 6}, {2, 3});
    auto b = Tensor::make({1, 2, 3, 4}, {2, 2});
    try {
        matmul(a, b);
        FAIL("expected dimension error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(11);
    auto a = random_tensor(rng, {3, 4}, true);
    auto b = random_tensor(rng, {4, 2}, true);
    auto loss = mean(mul(matmul(a, b), matmul(a, b)));
    backward(loss);
    auto fwd = [&]() { return mean(mul(matmul(a, b), matmul(a, b)))->item(); };
    auto res = gradcheck::compare(fwd, {{a, "a"}, {b, "b"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("matvec right operand") {
    auto a = Tensor::make({1, 2, 3, 4}, {2, 2});
    auto v = Tensor::make({1, 1}, {2});
    auto out = matmul(a, v);
    CHECK(out->rank() == 1);
    CHECK(out->data[0] == doctest::Approx(3));
    CHECK(out->data[1] == doctest::Approx(7));
}

TEST_CASE("activation trivial values") {
    auto x = Tensor::make({0.0}, {1});
    CHECK(softplus(x)->item() == doctest::Approx(std::log(2.0)));
    auto neg = Tensor::make({-5.0}, {1});
    auto pos = Tensor::make({5.0}, {1});
    CHECK(relu(neg)->item() == 0.0);
    CHECK(relu(pos)->item() == 5.0);
}

TEST_CASE("softplus overflow guard") {
    auto x = Tensor::make({31.0, 800.0}, {2});
    auto y = softplus(x);
    CHECK(y->data[0] == 31.0);
    CHECK(y->data[1] == 800.0);
    CHECK(std::isfinite(y->data[1]));
}

TEST_CASE("tanh gradient at 0.3 vs finite differences") {
    auto x = Tensor::make({0.3}, {1}, true);
    auto loss = sum(tanh_act(x));
    backward(loss);
    auto fwd = [&]() { return sum(tanh_act(x))->item(); };
    auto res = gradcheck::compare(fwd, {{x, "x"}});
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("all activations pass gradient check") {
    Rng rng(21);
    for (Act kind : {Act::Relu, Act::Tanh, Act::Sigmoid, Act::Softplus}) {
        auto x = random_tensor(rng, {7}, true, -2.0, 2.0);
        // keep relu inputs away from the kink
        for (auto& v : x->data)
            if (std::abs(v) < 1e-3) v = 0.5;
        x->zero_grad();
        auto loss = mean(mul(activation(x, kind), activation(x, kind)));
        backward(loss);
        auto fwd = [&]() { return mean(mul(activation(x, kind), activation(x, kind)))->item(); };
        auto res = gradcheck::compare(fwd, {{x, "x"}});
        CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
    }
}

TEST_CASE("conv1d_causal direct summation") {
    auto x = Tensor::make({1, 2, 3, 4}, {1, 4});
    auto k = Tensor::make({1, 1}, {1, 1, 2});
    auto y = conv1d_causal(x, k, 1);
    std::vector<double> expect{1, 3, 5, 7};
    for (std::size_t i = 0; i < 4; ++i) CHECK(y->data[i] == doctest::Approx(expect[i]));
}

TEST_CASE("conv1d_causal identity kernel") {
    auto x = Tensor::make({0.5, -1.5, 2.5, 3.0, -0.25}, {1, 5});
    auto k = Tensor::make({1, 0}, {1, 1, 2});
    auto y = conv1d_causal(x, k, 1);
    for (std::size_t i = 0; i < 5; ++i) CHECK(y->data[i] == x->data[i]);
}

TEST_CASE("conv1d_causal rejects zero dilation") {
    auto x = Tensor::make({1, 2}, {1, 2});
    auto k = Tensor::make({1, 1}, {1, 1, 2});
    CHECK_THROWS_AS(conv1d_causal(x, k, 0), std::invalid_argument);
}

TEST_CASE("dilation stack 1,2,4 has receptive field 8") {
    // y = conv_d4(conv_d2(conv_d1(x))) with k=2; perturbing x at distance 7
    // must reach the last output, distance 8 must not.
    const std::size_t T = 16;
    Rng rng(3);
    auto make_x = [&](std::size_t bump) {
        std::vector<double> v(T, 0.0);
        if (bump < T) v[bump] = 1.0;
        return Tensor::make(std::move(v), {1, T});
    };
    auto k1 = Tensor::make({0.7, 0.3}, {1, 1, 2});
    auto k2 = Tensor::make({0.6, 0.4}, {1, 1, 2});
    auto k3 = Tensor::make({0.9, 0.1}, {1, 1, 2});
    auto forward = [&](const TensorPtr& x) {
        auto h = conv1d_causal(x, k1, 1);
        h = conv1d_causal(h, k2, 2);
        h = conv1d_causal(h, k3, 4);
        return h->data[T - 1];
    };
    const double base = forward(make_x(T));  // all zeros
    const std::size_t last = T - 1;
    CHECK(forward(make_x(last - 7)) != base);   // inside the field: 1+(2-1)*(1+2+4)=8 taps
    CHECK(forward(make_x(last - 8)) == base);   // just outside
}

TEST_CASE("conv1d_causal causality property") {
    // zeroing inputs after time t never changes output at or before t
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c_in = 1 + rng.index(3);
        const std::size_t c_out = 1 + rng.index(3);
        const std::size_t T = 4 + rng.index(12);
        const std::size_t k = 1 + rng.index(3);
        const std::size_t d = 1 + rng.index(4);
        auto x = random_tensor(rng, {c_in, T}, false);
        auto w = random_tensor(rng, {c_out, c_in, k}, false);
        auto y = conv1d_causal(x, w, d);

        const std::size_t t = rng.index(T);
        auto x2 = Tensor::make(x->data, x->shape);
        for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t s = t + 1; s < T; ++s) x2->data[c * T + s] = 0.0;
        auto y2 = conv1d_causal(x2, w, d);
        for (std::size_t c = 0; c < c_out; ++c)
            for (std::size_t s = 0; s <= t; ++s)
                CHECK(y->data[c * T + s] == y2->data[c * T + s]);
    }
}

TEST_CASE("conv1d_causal gradient vs finite differences") {
    Rng rng(29);
    auto x = random_tensor(rng, {2, 6}, true);
    auto w = random_tensor(rng, {3, 2, 2}, true);
    auto run = [&]() { return mean(mul(conv1d_causal(x, w, 2), conv1d_causal(x, w, 2))); };
    auto loss = run();
    backward(loss);
    auto res = gradcheck::compare([&]() { return run()->item(); }, {{x, "x"}, {w, "w"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("batchnorm1d passthrough on standardized input") {
    // two channels, each already zero-mean unit-variance
    auto x = Tensor::make({-1, 1, -1, 1, 2, 0, -2, 0}, {2, 4});
    auto gamma = Tensor::make({1, 1}, {2});
    auto beta = Tensor::make({0, 0}, {2});
    BatchNormStats stats(2);
    // channel variances are 1 and 2; use channel 0 for the unit-variance claim
    auto y = batchnorm1d(x, gamma, beta, stats, BNMode::Train);
    const double correction = 1.0 / std::sqrt(1.0 + stats.epsilon);
    for (std::size_t t = 0; t < 4; ++t)
        CHECK(y->data[t] == doctest::Approx(x->data[t] * correction).epsilon(1e-6));
}

TEST_CASE("batchnorm1d gamma zero emits beta") {
    Rng rng(5);
    auto x = random_tensor(rng, {2, 5}, false);
    auto gamma = Tensor::make({0, 0}, {2});
    auto beta = Tensor::make({0.25, -1.5}, {2});
    BatchNormStats stats(2);
    auto y = batchnorm1d(x, gamma, beta, stats, BNMode::Train);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(y->data[t] == doctest::Approx(0.25));
        CHECK(y->data[5 + t] == doctest::Approx(-1.5));
    }
}

TEST_CASE("batchnorm1d gradient check on 2x5 input") {
    Rng rng(31);
    auto x = random_tensor(rng, {2, 5}, true);
    auto gamma = Tensor::make({1.2, 0.8}, {2}, true);
    auto beta = Tensor::make({0.1, -0.2}, {2}, true);
    auto run = [&]() {
        BatchNormStats stats(2);  // fresh stats so repeated calls agree
        auto y = batchnorm1d(x, gamma, beta, stats, BNMode::Train);
        return mean(mul(y, y));
    };
    auto loss = run();
    backward(loss);
    auto res = gradcheck::compare([&]() { return run()->item(); },
                                  {{x, "x"}, {gamma, "gamma"}, {beta, "beta"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("batchnorm1d eval mode uses running stats and passes gradient check") {
    Rng rng(37);
    auto x = random_tensor(rng, {2, 5}, true);
    auto gamma = Tensor::make({1.1, 0.9}, {2}, true);
    auto beta = Tensor::make({0.0, 0.3}, {2}, true);
    BatchNormStats stats(2);
    stats.mean = {0.2, -0.1};
    stats.var = {1.5, 0.7};
    auto run = [&]() { return mean(mul(batchnorm1d(x, gamma, beta, stats, BNMode::Eval),
                                       batchnorm1d(x, gamma, beta, stats, BNMode::Eval))); };
    auto loss = run();
    backward(loss);
    auto res = gradcheck::compare([&]() { return run()->item(); },
                                  {{x, "x"}, {gamma, "gamma"}, {beta, "beta"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("batchnorm1d T==1 in train mode relies on epsilon") {
    auto x = Tensor::make({3.0}, {1, 1});
    auto gamma = Tensor::make({1.0}, {1});
    auto beta = Tensor::make({0.0}, {1});
    BatchNormStats stats(1);
    auto y = batchnorm1d(x, gamma, beta, stats, BNMode::Train);
    CHECK(std::isfinite(y->item()));
    CHECK(y->item() == doctest::Approx(0.0));  // (x - x)/sqrt(eps)
}

TEST_CASE("gaussian_nll closed form") {
    const double half_ln_2pi = 0.9189385332046727;
    auto v = [](double x) { return Tensor::make({x}, {1}); };
    CHECK(gaussian_nll(v(0), v(0), v(1))->item() == doctest::Approx(half_ln_2pi).epsilon(1e-12));
    for (double mu : {-3.0, 0.0, 7.5}) {
        CHECK(gaussian_nll(v(mu), v(mu), v(1))->item() ==
              doctest::Approx(half_ln_2pi).epsilon(1e-12));
    }
}

TEST_CASE("gaussian_nll analytic gradient wrt mu") {
    auto z = Tensor::make({1.0}, {1});
    auto mu = Tensor::make({0.0}, {1}, true);
    auto sigma = Tensor::make({2.0}, {1});
    auto loss = gaussian_nll(z, mu, sigma);
    backward(loss);
    CHECK(mu->grad[0] == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("gaussian_nll rejects non-positive sigma") {
    auto v = [](double x) { return Tensor::make({x}, {1}); };
    CHECK_THROWS_AS(gaussian_nll(v(0), v(0), v(0)), std::domain_error);
    CHECK_THROWS_AS(gaussian_nll(v(0), v(0), v(-1)), std::domain_error);
}

TEST_CASE("gaussian_nll full gradient vs finite differences") {
    Rng rng(41);
    auto z = random_tensor(rng, {6}, false);
    auto mu = random_tensor(rng, {6}, true);
    auto pre_sigma = random_tensor(rng, {6}, true);
    auto run = [&]() { return gaussian_nll(z, mu, softplus(pre_sigma)); };
    auto loss = run();
    backward(loss);
    auto res = gradcheck::compare([&]() { return run()->item(); },
                                  {{mu, "mu"}, {pre_sigma, "pre_sigma"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("negbin pmf normalizes over z=0..200") {
    double total = 0.0;
    for (int zi = 0; zi <= 200; ++zi) {
        auto z = Tensor::make({static_cast<double>(zi)}, {1});
        auto mu = Tensor::make({3.0}, {1});
        auto alpha = Tensor::make({0.5}, {1});
        total += std::exp(-negbin_nll(z, mu, alpha)->item());
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("negbin approaches Poisson as alpha -> 0") {
    const double mu = 2.0;
    auto poisson_pmf = [&](int zv) {
        double logp = -mu + zv * std::log(mu) - std::lgamma(zv + 1.0);
        return std::exp(logp);
    };
    for (int zv : {0, 1, 2, 3}) {
        auto z = Tensor::make({static_cast<double>(zv)}, {1});
        auto m = Tensor::make({mu}, {1});
        auto a = Tensor::make({1e-4}, {1});
        const double nb = std::exp(-negbin_nll(z, m, a)->item());
        CHECK(nb == doctest::Approx(poisson_pmf(zv)).epsilon(1e-3));
    }
}

TEST_CASE("negbin_nll rejects invalid targets") {
    auto mu = Tensor::make({2.0}, {1});
    auto alpha = Tensor::make({0.5}, {1});
    CHECK_THROWS_AS(negbin_nll(Tensor::make({-1.0}, {1}), mu, alpha), std::domain_error);
    CHECK_THROWS_AS(negbin_nll(Tensor::make({1.5}, {1}), mu, alpha), std::domain_error);
}

TEST_CASE("negbin_nll gradient vs finite differences") {
    auto z = Tensor::make({0, 1, 3, 7}, {4});
    auto mu = Tensor::make({2.0, 1.5, 3.0, 5.0}, {4}, true);
    auto alpha = Tensor::make({0.5, 0.8, 0.3, 1.2}, {4}, true);
    auto loss = negbin_nll(z, mu, alpha);
    backward(loss);
    auto res = gradcheck::compare([&]() { return negbin_nll(z, mu, alpha)->item(); },
                                  {{mu, "mu"}, {alpha, "alpha"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("backward on sum of squares") {
    auto w = Tensor::make({1.0, 2.0}, {2}, true);
    auto loss = sum(mul(w, w));
    backward(loss);
    CHECK(w->grad[0] == doctest::Approx(2.0));
    CHECK(w->grad[1] == doctest::Approx(4.0));
}

TEST_CASE("backward leaves unreachable parameters at zero") {
    auto w = Tensor::make({1.0, 2.0}, {2}, true);
    auto other = Tensor::make({3.0}, {1}, true);
    auto loss = sum(mul(other, other));
    backward(loss);
    CHECK(w->grad[0] == 0.0);
    CHECK(w->grad[1] == 0.0);
}

TEST_CASE("gradients of shared tensors accumulate") {
    auto w = Tensor::make({0.7, -0.4}, {2}, true);
    auto run = [&]() { return add(sum(mul(w, w)), mean(mul(w, tanh_act(w)))); };
    auto loss = run();
    backward(loss);
    auto res = gradcheck::compare([&]() { return run()->item(); }, {{w, "w"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("backward rejects non-scalar loss") {
    auto w = Tensor::make({1.0, 2.0}, {2}, true);
    auto y = mul(w, w);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("slice, concat and column route gradients") {
    Rng rng(53);
    auto v = random_tensor(rng, {6}, true);
    auto m = random_tensor(rng, {3, 4}, true);
    auto run = [&]() {
        auto parts = concat({slice(v, 0, 3), slice(v, 2, 4), column(m, 1)});
        return mean(mul(parts, parts));
    };
    auto loss = run();
    backward(loss);
    auto res = gradcheck::compare([&]() { return run()->item(); }, {{v, "v"}, {m, "m"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("add_bias broadcasts per row") {
    auto m = Tensor::make({1, 2, 3, 4, 5, 6}, {2, 3}, true);
    auto b = Tensor::make({10, 20}, {2}, true);
    auto y = add_bias(m, b);
    CHECK(y->data[0] == 11);
    CHECK(y->data[5] == 26);
    auto loss = sum(y);
    backward(loss);
    CHECK(b->grad[0] == doctest::Approx(3.0));
    CHECK(b->grad[1] == doctest::Approx(3.0));
}

TEST_CASE("pinball loss basic behavior") {
    auto t = Tensor::make({1.0}, {1});
    auto p = Tensor::make({0.0}, {1});
    CHECK(pinball_loss(t, p, 0.9)->item() == doctest::Approx(0.9));
    CHECK(pinball_loss(p, t, 0.9)->item() == doctest::Approx(0.1));
}

TEST_CASE("deterministic outputs and gradients for identical seeds") {
    auto build = [](std::uint64_t seed) {
        Rng rng(seed);
        auto w = random_tensor(rng, {4, 4}, true);
        auto x = random_tensor(rng, {4}, false);
        auto loss = mean(mul(tanh_act(matmul(w, x)), sigmoid(matmul(w, x))));
        backward(loss);
        return std::pair{loss->item(), w->grad};
    };
    auto [l1, g1] = build(99);
    auto [l2, g2] = build(99);
    CHECK(l1 == l2);
    CHECK(g1 == g2);
    auto [l3, g3] = build(100);
    CHECK(l1 != l3);
}

TEST_CASE("slice_rows grabs a contiguous block and routes gradients") {
    auto m = Tensor::make({1, 2, 3, 4, 5, 6, 7, 8}, {4, 2}, true);
    auto s = slice_rows(m, 1, 2);
    REQUIRE(s->shape == std::vector<std::size_t>{2, 2});
    CHECK(s->data == std::vector<double>{3, 4, 5, 6});
    backward(mean(mul(s, s)));
    // d/dx mean(x^2) = 2x/4 over the sliced block, zero elsewhere
    CHECK(m->grad[0] == 0.0);
    CHECK(m->grad[2] == doctest::Approx(2.0 * 3 / 4));
    CHECK(m->grad[5] == doctest::Approx(2.0 * 6 / 4));
    CHECK(m->grad[6] == 0.0);
    CHECK_THROWS_AS(slice_rows(m, 3, 2), std::invalid_argument);
}

TEST_CASE("slice_cols gathers a strided block and routes gradients") {
    auto m = Tensor::make({1, 2, 3, 4, 5, 6, 7, 8}, {2, 4}, true);
    auto s = slice_cols(m, 1, 2);
    REQUIRE(s->shape == std::vector<std::size_t>{2, 2});
    CHECK(s->data == std::vector<double>{2, 3, 6, 7});
    backward(sum(mul(s, s)));
    CHECK(m->grad[0] == 0.0);
    CHECK(m->grad[1] == doctest::Approx(4.0));
    CHECK(m->grad[2] == doctest::Approx(6.0));
    CHECK(m->grad[3] == 0.0);
    CHECK(m->grad[6] == doctest::Approx(14.0));
    CHECK_THROWS_AS(slice_cols(m, 3, 2), std::invalid_argument);
    CHECK_THROWS_AS(slice_cols(Tensor::make({1, 2}, {2}), 0, 1), std::invalid_argument);
}

TEST_CASE("concat_cols stitches matrices side by side") {
    auto a = Tensor::make({1, 2, 3, 4}, {2, 2}, true);
    auto b = Tensor::make({5, 6}, {2, 1}, true);
    auto c = concat_cols({a, b});
    REQUIRE(c->shape == std::vector<std::size_t>{2, 3});
    CHECK(c->data == std::vector<double>{1, 2, 5, 3, 4, 6});
    backward(sum(mul(c, c)));
    CHECK(a->grad == std::vector<double>{2, 4, 6, 8});
    CHECK(b->grad == std::vector<double>{10, 12});
    CHECK_THROWS_AS(concat_cols({}), std::invalid_argument);
    CHECK_THROWS_AS(concat_cols({a, Tensor::make({1, 2, 3}, {3, 1})}),
                    std::invalid_argument);
}

TEST_CASE("slice_cols of concat_cols recovers each part") {
    Rng rng(71);
    auto a = random_tensor(rng, {3, 2}, true);
    auto b = random_tensor(rng, {3, 3}, true);
    auto whole = concat_cols({a, b});
    CHECK(slice_cols(whole, 0, 2)->data == a->data);
    CHECK(slice_cols(whole, 2, 3)->data == b->data);
    auto run = [&]() {
        auto j = concat_cols({a, b});
        auto back = slice_cols(j, 1, 3);
        return mean(mul(back, tanh_act(back)));
    };
    backward(run());
    auto res = gradcheck::compare([&]() { return run()->item(); }, {{a, "a"}, {b, "b"}});
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("reshape keeps data and passes gradients through") {
    auto m = Tensor::make({1, 2, 3, 4, 5, 6}, {2, 3}, true);
    auto v = reshape(m, {6});
    CHECK(v->rank() == 1);
    CHECK(v->data == m->data);
    backward(sum(mul(v, v)));
    CHECK(m->grad[4] == doctest::Approx(10.0));
    CHECK_THROWS_AS(reshape(m, {4}), std::invalid_argument);
}

TEST_CASE("NoGradGuard suppresses tape recording") {
    auto w = Tensor::make({1, 2, 3, 4}, {2, 2}, true);
    auto x = Tensor::make({1, 1}, {2});
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        auto y = relu(matmul(w, x));
        CHECK_FALSE(y->requires_grad);
        CHECK(y->parents.empty());
        CHECK(y->data[0] == doctest::Approx(3.0));
    }
    CHECK(grad_enabled());
    auto y = relu(matmul(w, x));
    CHECK(y->requires_grad);
    CHECK(y->parents.size() == 1);  // the matmul node
}
