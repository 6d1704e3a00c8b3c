#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "keec/errors.hpp"
#include "keec/nn.hpp"

using namespace keec;

namespace {

MlpParams random_net(Rng& rng, const std::vector<int>& dims, const std::vector<Act>& acts) {
    return init_params(dims, acts, rng);
}

// Loss used by the finite-difference checks: L = sum_ij C_ij Y_ij for a fixed
// random C, so dY = C and all parameter gradients are exercised.
double weighted_sum(const MlpParams& p, const Matrix& x, const Matrix& c) {
    return mlp_forward(p, x).cwiseProduct(c).sum();
}

}  // namespace

TEST_CASE("mlp_forward: zero weights give bias rows; single linear layer exact") {
    MlpParams p;
    p.layers.push_back({Matrix::Zero(3, 2), Vector::Zero(3), Act::none});
    p.layers[0].b << 1.0, -2.0, 0.5;
    Matrix x = Matrix::Ones(4, 2);
    Matrix y = mlp_forward(p, x);
    for (int i = 0; i < 4; ++i) {
        CHECK(y(i, 0) == 1.0);
        CHECK(y(i, 1) == -2.0);
        CHECK(y(i, 2) == 0.5);
    }

    Rng rng(3);
    MlpParams lin = random_net(rng, {3, 2}, {Act::none});
    Matrix xin = testutil::random_matrix(rng, 5, 3);
    Matrix want = xin * lin.layers[0].W.transpose();
    want.rowwise() += lin.layers[0].b.transpose();
    CHECK(testutil::rel_err(mlp_forward(lin, xin), want) < 1e-15);
}

TEST_CASE("mlp_forward: matches straight-line oracle on a 3-layer tanh net") {
    Rng rng(5);
    MlpParams p = random_net(rng, {4, 6, 5, 3}, {Act::tanh_fn, Act::tanh_fn, Act::none});
    // give the biases some life
    for (auto& l : p.layers)
        for (int i = 0; i < l.b.size(); ++i) l.b(i) = rng.uniform(-0.5, 0.5);
    Matrix x = testutil::random_matrix(rng, 3, 4);
    Matrix y = mlp_forward(p, x);
    for (int r = 0; r < 3; ++r) {
        // scalar-loop oracle, one sample at a time
        std::vector<double> h(4);
        for (int j = 0; j < 4; ++j) h[j] = x(r, j);
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            const auto& layer = p.layers[l];
            std::vector<double> nh(layer.W.rows());
            for (int i = 0; i < layer.W.rows(); ++i) {
                double acc = layer.b(i);
                for (int j = 0; j < layer.W.cols(); ++j) acc += layer.W(i, j) * h[j];
                nh[i] = (layer.act == Act::tanh_fn) ? std::tanh(acc) : acc;
            }
            h = std::move(nh);
        }
        for (int i = 0; i < 3; ++i) CHECK(y(r, i) == doctest::Approx(h[i]).epsilon(1e-14));
    }
}

TEST_CASE("mlp_backward: linear layer closed form dW = dY^T X") {
    Rng rng(7);
    MlpParams p = random_net(rng, {3, 2}, {Act::none});
    Matrix x = testutil::random_matrix(rng, 4, 3);
    ForwardCache cache;
    mlp_forward(p, x, &cache);
    Matrix dy = testutil::random_matrix(rng, 4, 2);
    MlpGrads g = zero_grads_like(p);
    Matrix dx = mlp_backward(p, cache, dy, &g);
    CHECK(testutil::rel_err(g.layers[0].dW, dy.transpose() * x) < 1e-14);
    CHECK(testutil::rel_err(dx, dy * p.layers[0].W) < 1e-14);
    CHECK(testutil::rel_err(Matrix(g.layers[0].db.transpose()),
                            Matrix(dy.colwise().sum())) < 1e-14);
}

TEST_CASE("mlp_backward: scalar tanh net closed form") {
    MlpParams p;
    p.layers.push_back({Matrix::Constant(1, 1, 0.7), Vector::Constant(1, 0.2), Act::tanh_fn});
    Matrix x = Matrix::Constant(1, 1, 0.3);
    ForwardCache cache;
    Matrix y = mlp_forward(p, x, &cache);
    Matrix dx = mlp_backward(p, cache, Matrix::Ones(1, 1), nullptr);
    double t = std::tanh(0.7 * 0.3 + 0.2);
    CHECK(y(0, 0) == doctest::Approx(t).epsilon(1e-15));
    CHECK(dx(0, 0) == doctest::Approx(0.7 * (1.0 - t * t)).epsilon(1e-14));
}

TEST_CASE("mlp_backward: all gradients match central finite differences") {
    Rng rng(11);
    for (auto acts : {std::vector<Act>{Act::tanh_fn, Act::relu, Act::none},
                      std::vector<Act>{Act::relu, Act::tanh_fn, Act::tanh_fn}}) {
        MlpParams p = random_net(rng, {4, 8, 6, 2}, acts);
        Matrix x = testutil::random_matrix(rng, 4, 4);
        Matrix c = testutil::random_matrix(rng, 4, 2);

        ForwardCache cache;
        mlp_forward(p, x, &cache);
        MlpGrads g = zero_grads_like(p);
        Matrix dx = mlp_backward(p, cache, c, &g);

        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            auto& layer = p.layers[l];
            for (int i = 0; i < layer.W.rows(); ++i)
                for (int j = 0; j < layer.W.cols(); ++j) {
                    double fd = testutil::central_diff(&layer.W(i, j), 1e-5,
                                                       [&] { return weighted_sum(p, x, c); });
                    double an = g.layers[l].dW(i, j);
                    CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
                }
            for (int i = 0; i < layer.b.size(); ++i) {
                double fd = testutil::central_diff(&layer.b(i), 1e-5,
                                                   [&] { return weighted_sum(p, x, c); });
                CHECK(std::abs(g.layers[l].db(i) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
            }
        }
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) {
                double fd = testutil::central_diff(&x(i, j), 1e-5,
                                                   [&] { return weighted_sum(p, x, c); });
                CHECK(std::abs(dx(i, j) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
            }
    }
}

TEST_CASE("adam_step: zero gradients leave params unchanged") {
    Rng rng(13);
    MlpParams p = random_net(rng, {3, 4, 2}, {Act::tanh_fn, Act::none});
    MlpParams before = p;
    AdamState st = AdamState::like(p);
    adam_step(p, zero_grads_like(p), st, 1e-3);
    CHECK(st.step == 1);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK((p.layers[l].W - before.layers[l].W).norm() == 0.0);
        CHECK((p.layers[l].b - before.layers[l].b).norm() == 0.0);
    }
}

TEST_CASE("adam_step: first step has magnitude ~lr in each coordinate") {
    MlpParams p;
    p.layers.push_back({Matrix::Zero(2, 2), Vector::Zero(2), Act::none});
    AdamState st = AdamState::like(p);
    MlpGrads g = zero_grads_like(p);
    g.layers[0].dW << 3.0, -0.5, 100.0, -1e-3;
    adam_step(p, g, st, 1e-3);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double step = p.layers[0].W(i, j);
            CHECK(std::abs(std::abs(step) - 1e-3) < 1e-4);  // |update| ~ lr
            CHECK(step * g.layers[0].dW(i, j) < 0.0);       // against the gradient
        }
}

TEST_CASE("adam_step: descends a quadratic bowl") {
    // minimize 0.5*(w - 3)^2 via its gradient
    MlpParams p;
    p.layers.push_back({Matrix::Zero(1, 1), Vector::Zero(1), Act::none});
    AdamState st = AdamState::like(p);
    double prev = 0.5 * 9.0;
    for (int k = 0; k < 100; ++k) {
        MlpGrads g = zero_grads_like(p);
        g.layers[0].dW(0, 0) = p.layers[0].W(0, 0) - 3.0;
        adam_step(p, g, st, 0.05);
        double loss = 0.5 * std::pow(p.layers[0].W(0, 0) - 3.0, 2);
        CHECK(loss < prev + 1e-12);
        prev = loss;
    }
    CHECK(prev < 0.5 * 9.0 * 0.1);
}

TEST_CASE("adam_step: non-finite gradient raises") {
    MlpParams p;
    p.layers.push_back({Matrix::Zero(1, 1), Vector::Zero(1), Act::none});
    AdamState st = AdamState::like(p);
    MlpGrads g = zero_grads_like(p);
    g.layers[0].dW(0, 0) = std::nan("");
    CHECK_THROWS_AS(adam_step(p, g, st, 1e-3), NumericError);
}

TEST_CASE("init_params: deterministic, Glorot-bounded, zero biases") {
    Rng a(99), b(99);
    MlpParams p1 = init_params({5, 7, 3}, {Act::tanh_fn, Act::none}, a);
    MlpParams p2 = init_params({5, 7, 3}, {Act::tanh_fn, Act::none}, b);
    for (std::size_t l = 0; l < p1.layers.size(); ++l) {
        CHECK((p1.layers[l].W - p2.layers[l].W).norm() == 0.0);
        CHECK(p1.layers[l].b.norm() == 0.0);
        double r = std::sqrt(6.0 / (p1.layers[l].W.cols() + p1.layers[l].W.rows()));
        CHECK(p1.layers[l].W.cwiseAbs().maxCoeff() <= r);
    }
}

TEST_CASE("init_params: weight sample mean near zero over many draws") {
    Rng rng(101);
    double sum = 0.0;
    std::size_t count = 0;
    for (int rep = 0; rep < 40; ++rep) {
        MlpParams p = init_params({50, 50}, {Act::none}, rng);
        sum += p.layers[0].W.sum();
        count += static_cast<std::size_t>(p.layers[0].W.size());
    }
    // 1e5 draws of U(-r, r), r ~ 0.245: se of mean ~ r/sqrt(3*1e5) ~ 4.5e-4
    CHECK(std::abs(sum / static_cast<double>(count)) < 3e-3);
}

TEST_CASE("determinism: identical seed and data give bit-identical training") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        MlpParams p = init_params({3, 6, 1}, {Act::tanh_fn, Act::none}, rng);
        AdamState st = AdamState::like(p);
        Matrix x = testutil::random_matrix(rng, 8, 3);
        Matrix target = testutil::random_matrix(rng, 8, 1);
        for (int k = 0; k < 25; ++k) {
            ForwardCache cache;
            Matrix y = mlp_forward(p, x, &cache);
            MlpGrads g = zero_grads_like(p);
            mlp_backward(p, cache, y - target, &g);
            adam_step(p, g, st, 1e-3);
        }
        return p;
    };
    MlpParams a = run(555), b = run(555);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK((a.layers[l].W - b.layers[l].W).norm() == 0.0);
        CHECK((a.layers[l].b - b.layers[l].b).norm() == 0.0);
    }
}

TEST_CASE("mlp_forward/backward: shape errors") {
    Rng rng(1);
    MlpParams p = random_net(rng, {3, 2}, {Act::none});
    CHECK_THROWS_AS(mlp_forward(p, Matrix::Zero(2, 4)), DimensionError);
    ForwardCache cache;
    mlp_forward(p, Matrix::Zero(2, 3), &cache);
    CHECK_THROWS_AS(mlp_backward(p, cache, Matrix::Zero(2, 5), nullptr), DimensionError);
    CHECK_THROWS_AS(mlp_backward(p, cache, Matrix::Zero(3, 2), nullptr), DimensionError);
}
