#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "keec/data.hpp"
#include "keec/errors.hpp"
#include "keec/koopman.hpp"

using namespace keec;
using testutil::central_diff;
using testutil::exp_series;
using testutil::phi1_series;
using testutil::random_matrix;
using testutil::random_with_spectral_norm;
using testutil::rel_err;
using testutil::spearman;

namespace {

// Single linear layer encoder/decoder pair with identity normalization; used
// to build models whose exact behavior is computable by hand.
EmbeddingModel linear_model(const Matrix& enc_w, const Matrix& dec_w) {
    EmbeddingModel model;
    model.n = static_cast<int>(enc_w.rows());
    model.encoder.layers = {Layer{enc_w, Vector::Zero(enc_w.rows()), Act::none}};
    model.decoder.layers = {Layer{dec_w, Vector::Zero(dec_w.rows()), Act::none}};
    model.norm_mu = Vector::Zero(enc_w.cols());
    model.norm_sigma = Vector::Ones(enc_w.cols());
    model.lambda_met = 0.3;
    return model;
}

LatentOperators make_ops(const Matrix& p, const Matrix& u, double dt) {
    LatentOperators ops;
    ops.P = p;
    ops.U = u;
    ops.dt = dt;
    ops.refresh();
    return ops;
}

// Plain-loop RK4 on the latent ODE z_dot = P z + (U z) a with a frozen; the
// U contraction is written index-by-index so the oracle also pins the flat
// layout U(i, j*d + k).
Vector bilinear_rk4(const Matrix& p, const Matrix& u, Vector z, const Vector& a, double horizon,
                    int substeps) {
    const int n = static_cast<int>(p.rows());
    const int d = static_cast<int>(a.size());
    auto field = [&](const Vector& x) {
        Vector dz = Vector::Zero(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                dz(i) += p(i, j) * x(j);
                for (int k = 0; k < d; ++k) dz(i) += u(i, j * d + k) * x(j) * a(k);
            }
        return dz;
    };
    const double h = horizon / substeps;
    for (int s = 0; s < substeps; ++s) {
        Vector k1 = field(z);
        Vector k2 = field(z + 0.5 * h * k1);
        Vector k3 = field(z + 0.5 * h * k2);
        Vector k4 = field(z + h * k3);
        z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return z;
}

// Exact one-step data for s_dot = -s + a: s' = e^{-h} s + (1 - e^{-h}) a.
double linear1d_step(double s, double a, double h) {
    const double e = std::exp(-h);
    return e * s + (1.0 - e) * a;
}

TrajectorySet make_linear1d_set(int count, int steps, double h, std::uint64_t seed) {
    TrajectorySet ts;
    ts.env_name = "linear1d";
    ts.seed = seed;
    ts.steps = steps;
    ts.m = 1;
    ts.d = 1;
    Rng rng(seed);
    for (int j = 0; j < count; ++j) {
        Matrix s(steps + 1, 1), a(steps, 1);
        s(0, 0) = rng.uniform(-1.0, 1.0);
        for (int t = 0; t < steps; ++t) {
            a(t, 0) = rng.uniform(-1.0, 1.0);
            s(t + 1, 0) = linear1d_step(s(t, 0), a(t, 0), h);
        }
        ts.states.push_back(s);
        ts.actions.push_back(a);
        ts.rewards.push_back(Vector::Zero(steps));
    }
    return ts;
}

}  // namespace

TEST_SUITE("koopman") {

TEST_CASE("operator caches follow P and dt, and uz uses the flat layout") {
    Rng rng(901);
    Matrix p = random_with_spectral_norm(rng, 3, 0.9);
    Matrix u = random_matrix(rng, 3, 6, -0.5, 0.5);  // d = 2
    LatentOperators ops = make_ops(p, u, 0.07);
    CHECK(ops.n == 3);
    CHECK(ops.d == 2);
    CHECK(rel_err(ops.exp_pdt, exp_series(p * 0.07)) < 1e-13);
    CHECK(rel_err(ops.phi_dt, 0.07 * phi1_series(p * 0.07)) < 1e-13);

    Vector z(3);
    z << 0.3, -1.1, 0.8;
    Matrix uz = ops.uz(z);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k) {
            double want = 0.0;
            for (int j = 0; j < 3; ++j) want += u(i, j * 2 + k) * z(j);
            CHECK(uz(i, k) == doctest::Approx(want).epsilon(1e-14));
        }

    ops.dt = -1.0;
    CHECK_THROWS_AS(ops.refresh(), ConfigError);
}

TEST_CASE("zero-weight encoder maps every state to the bias vector") {
    Rng rng(902);
    EmbeddingModel model = make_embedding_model(3, 4, 0.3, rng);
    for (auto& layer : model.encoder.layers) layer.W.setZero();
    model.encoder.layers.back().b << 0.4, -1.0, 2.5, 0.0;
    Matrix s = random_matrix(rng, 5, 3, -2.0, 2.0);
    Matrix z = model.encode(s);
    for (int i = 0; i < 5; ++i) {
        CHECK(z(i, 0) == 0.4);
        CHECK(z(i, 1) == -1.0);
        CHECK(z(i, 2) == 2.5);
        CHECK(z(i, 3) == 0.0);
    }
}

TEST_CASE("encoding a single row equals the corresponding batch row") {
    Rng rng(903);
    EmbeddingModel model = make_embedding_model(3, 4, 0.3, rng);
    model.norm_mu << 0.2, -0.4, 1.0;
    model.norm_sigma << 1.5, 0.7, 2.0;
    Matrix s = random_matrix(rng, 6, 3, -2.0, 2.0);
    Matrix z = model.encode(s);
    Matrix y = model.decode(z);
    for (int i = 0; i < 6; ++i) {
        Vector zi = model.encode(Vector(s.row(i).transpose()));
        Vector yi = model.decode(Vector(z.row(i).transpose()));
        CHECK((zi - z.row(i).transpose()).norm() == 0.0);
        CHECK((yi - y.row(i).transpose()).norm() == 0.0);
    }
    CHECK_THROWS_AS(model.encode(Matrix(random_matrix(rng, 2, 4))), DimensionError);
    CHECK_THROWS_AS(model.decode(Matrix(random_matrix(rng, 2, 3))), DimensionError);
}

TEST_CASE("identify: zero difference with no actions gives a zero generator") {
    Rng rng(904);
    Matrix z = random_matrix(rng, 50, 3);
    Matrix a(50, 0);
    LatentOperators ops = identify_operators(z, z, a, 1e-3, 1e-6);
    CHECK(ops.P.norm() == 0.0);
    CHECK(ops.U.cols() == 0);
}

TEST_CASE("identify recovers a known stable 4x4 generator from exact flow data") {
    Matrix p0(4, 4);
    p0 << -0.6, 0.4, 0.0, 0.2,
          -0.4, -0.5, 0.3, 0.0,
           0.1, -0.3, -0.7, 0.5,
           0.0, 0.2, -0.5, -0.4;
    const double dt = 1e-3;
    Matrix e0 = exp_series(p0 * dt);
    Rng rng(905);
    Matrix z = random_matrix(rng, 400, 4);
    Matrix z_plus = z * e0.transpose();
    Matrix a(400, 0);
    LatentOperators ops = identify_operators(z, z_plus, a, dt, 1e-8);
    CHECK(rel_err(ops.P, p0) <= 1e-2);
}

TEST_CASE("identify recovers constant actuation on an augmented coordinate") {
    // z_dot = B0 a on the first 3 coordinates, with z(3) held at 1, is a
    // bilinear system whose actuation tensor lives entirely on the constant
    // coordinate: U(i, 3*d + k) = B0(i, k). The matrix (I + h M_a) flow is
    // exact because M_a^2 = 0, so the only identification error is the ridge.
    Matrix b0(3, 2);
    b0 << 0.8, -0.3,
          0.2, 0.5,
         -0.6, 0.1;
    const double h = 1e-3;
    const int n = 4, d = 2;
    Rng rng(906);
    Matrix z(600, n), z_plus(600, n), a = random_matrix(rng, 600, d);
    for (int r = 0; r < 600; ++r) {
        for (int j = 0; j < 3; ++j) z(r, j) = rng.uniform(-1.0, 1.0);
        z(r, 3) = 1.0;
        for (int i = 0; i < 3; ++i) {
            double drift = 0.0;
            for (int k = 0; k < d; ++k) drift += b0(i, k) * a(r, k);
            z_plus(r, i) = z(r, i) + h * drift;
        }
        z_plus(r, 3) = 1.0;
    }
    LatentOperators ops = identify_operators(z, z_plus, a, h, 1e-8);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < d; ++k)
            CHECK(std::abs(ops.U(i, 3 * d + k) - b0(i, k)) <= 1e-2);
    CHECK(ops.P.norm() <= 1e-2);
    // Every non-constant-coordinate actuation entry stays near zero.
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < d; ++k) CHECK(std::abs(ops.U(i, j * d + k)) <= 1e-2);
}

TEST_CASE("identify is invariant to row permutation of the batch") {
    Rng rng(907);
    Matrix z = random_matrix(rng, 80, 3);
    Matrix dz = 0.01 * random_matrix(rng, 80, 3);
    Matrix z_plus = z + dz;
    Matrix a = random_matrix(rng, 80, 2);
    LatentOperators base = identify_operators(z, z_plus, a, 0.01, 1e-6);

    std::vector<int> perm(80);
    for (int i = 0; i < 80; ++i) perm[i] = i;
    for (int i = 79; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    Matrix zq(80, 3), zpq(80, 3), aq(80, 2);
    for (int i = 0; i < 80; ++i) {
        zq.row(i) = z.row(perm[i]);
        zpq.row(i) = z_plus.row(perm[i]);
        aq.row(i) = a.row(perm[i]);
    }
    LatentOperators shuffled = identify_operators(zq, zpq, aq, 0.01, 1e-6);
    CHECK((shuffled.P - base.P).norm() <= 1e-9);
    CHECK((shuffled.U - base.U).norm() <= 1e-9);
}

TEST_CASE("predict_flow trivial cases") {
    Rng rng(908);
    const int n = 3, d = 2;
    Matrix p = random_with_spectral_norm(rng, n, 0.8);
    Matrix u = random_matrix(rng, n, n * d, -0.4, 0.4);
    Vector z = random_matrix(rng, n, 1).col(0);
    Vector a = random_matrix(rng, d, 1).col(0);
    const double dt = 0.05;

    SUBCASE("zero action gives the homogeneous flow") {
        LatentOperators ops = make_ops(p, u, dt);
        Vector out = predict_flow(ops, z, Vector(Vector::Zero(d)));
        CHECK((out - exp_series(p * dt) * z).norm() <= 1e-13);
    }
    SUBCASE("zero generator gives the Euler actuation step") {
        LatentOperators ops = make_ops(Matrix(Matrix::Zero(n, n)), u, dt);
        Vector want = z + dt * ops.uz(z) * a;
        Vector out = predict_flow(ops, z, a);
        CHECK((out - want).norm() <= 1e-14);
    }
    SUBCASE("shape errors") {
        LatentOperators ops = make_ops(p, u, dt);
        CHECK_THROWS_AS(predict_flow(ops, Vector(Vector::Zero(n + 1)), a), DimensionError);
        CHECK_THROWS_AS(predict_flow(ops, z, Vector(Vector::Zero(d + 1))), DimensionError);
    }
}

TEST_CASE("predict_flow matches the latent ODE to second order in dt") {
    Rng rng(909);
    const int n = 3, d = 2;
    Matrix p = random_with_spectral_norm(rng, n, 0.8);
    Matrix u = random_matrix(rng, n, n * d, -0.3, 0.3);
    Vector z = random_matrix(rng, n, 1).col(0);
    Vector a = random_matrix(rng, d, 1).col(0);

    // Oracle self-check: with a frozen the ODE is linear with generator
    // P + M_a, so RK4 must agree with the series exponential.
    Matrix m_a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < d; ++k) m_a(i, j) += u(i, j * d + k) * a(k);
    Vector truth = exp_series((p + m_a) * 0.2) * z;
    CHECK((bilinear_rk4(p, u, z, a, 0.2, 2000) - truth).norm() <= 1e-12);

    auto err = [&](double h) {
        LatentOperators ops = make_ops(p, u, h);
        return (predict_flow(ops, z, a) - bilinear_rk4(p, u, z, a, h, 2000)).norm();
    };
    const double e1 = err(0.2), e2 = err(0.1), e3 = err(0.05);
    CHECK(e1 > 1e-8);  // the formula is only a second-order approximation
    CHECK(e1 / e2 > 2.7);
    CHECK(e1 / e2 < 5.5);
    CHECK(e2 / e3 > 2.7);
    CHECK(e2 / e3 < 5.5);
    CHECK(e3 <= 1e-3);
}

TEST_CASE("one full step and two half steps agree to second order") {
    Rng rng(910);
    const int n = 4, d = 2;
    Matrix p = random_with_spectral_norm(rng, n, 1.0);
    Matrix u = random_matrix(rng, n, n * d, -0.4, 0.4);
    Vector z = random_matrix(rng, n, 1).col(0);
    Vector a = random_matrix(rng, d, 1).col(0);

    auto gap = [&](double h) {
        LatentOperators full = make_ops(p, u, h);
        LatentOperators half = make_ops(p, u, h / 2.0);
        Vector one = predict_flow(full, z, a);
        Vector two = predict_flow(half, predict_flow(half, z, a), a);
        return (one - two).norm();
    };
    const double g1 = gap(0.2), g2 = gap(0.1), g3 = gap(0.05);
    CHECK(g1 > 1e-9);
    CHECK(g1 / g2 > 2.7);
    CHECK(g1 / g2 < 5.5);
    CHECK(g2 / g3 > 2.7);
    CHECK(g2 / g3 < 5.5);
}

TEST_CASE("loss values on a hand-computed scalar instance") {
    // Encoder z = 2 s, decoder y = 3 z, P = 0 (d = 0), one window of one
    // transition with s0 = 0.5, s1 = 0.25:
    //   prediction: |3 * (2 * 0.5) - 0.25|             = 2.75
    //   identity:  (|3 - 0.5| + |1.5 - 0.25|) / 2      = 1.875
    //   isometry:  ||1.0 - 0.5| - |0.5 - 0.25||        = 0.25
    EmbeddingModel model = linear_model(Matrix(Matrix::Constant(1, 1, 2.0)),
                                        Matrix(Matrix::Constant(1, 1, 3.0)));
    LatentOperators ops = make_ops(Matrix(Matrix::Zero(1, 1)), Matrix(1, 0), 0.1);
    WindowBatch batch;
    batch.B = 1;
    batch.L = 1;
    batch.m = 1;
    batch.d = 0;
    batch.states = Matrix(2, 1);
    batch.states << 0.5, 0.25;
    batch.actions = Matrix(1, 0);

    CHECK(forward_loss(model, ops, batch) == doctest::Approx(4.625).epsilon(1e-15));
    CHECK(isometry_loss(model, batch) == doctest::Approx(0.25).epsilon(1e-15));

    TotalLoss tl = total_loss(model, ops, batch);
    CHECK(tl.fwd == doctest::Approx(4.625).epsilon(1e-15));
    CHECK(tl.met == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(tl.value == doctest::Approx(0.7 * 4.625 + 0.3 * 0.25).epsilon(1e-15));

    model.lambda_met = 0.0;
    CHECK(total_loss(model, ops, batch).value ==
          doctest::Approx(forward_loss(model, ops, batch)).epsilon(1e-15));
    model.lambda_met = 1.0;
    CHECK(total_loss(model, ops, batch).value ==
          doctest::Approx(isometry_loss(model, batch)).epsilon(1e-15));
}

TEST_CASE("exact autoencoder with exact predictions has zero forward loss") {
    // Identity encoder/decoder on a constant trajectory with P = 0: every
    // residual vanishes identically.
    EmbeddingModel model = linear_model(Matrix(Matrix::Identity(2, 2)),
                                        Matrix(Matrix::Identity(2, 2)));
    LatentOperators ops = make_ops(Matrix(Matrix::Zero(2, 2)), Matrix(2, 0), 0.1);
    WindowBatch batch;
    batch.B = 1;
    batch.L = 3;
    batch.m = 2;
    batch.d = 0;
    batch.states = Matrix(4, 2);
    batch.states << 0.7, -0.2, 0.7, -0.2, 0.7, -0.2, 0.7, -0.2;
    batch.actions = Matrix(3, 0);
    // exp(0) lands one ulp off the identity, so the prediction residual is
    // bounded by machine precision rather than exactly zero.
    CHECK(forward_loss(model, ops, batch) <= 1e-15);
    CHECK(isometry_loss(model, batch) == 0.0);
}

TEST_CASE("isometry loss on exactly isometric and exactly scaling encoders") {
    Rng rng(911);
    SUBCASE("rotation encoder is isometric") {
        const double th = 0.7;
        Matrix rot(2, 2);
        rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        EmbeddingModel model = linear_model(rot, Matrix(rot.transpose()));
        WindowBatch batch;
        batch.B = 2;
        batch.L = 3;
        batch.m = 2;
        batch.d = 0;
        batch.states = random_matrix(rng, 8, 2, -2.0, 2.0);
        batch.actions = Matrix(6, 0);
        CHECK(isometry_loss(model, batch) <= 1e-14);
    }
    SUBCASE("2x scaling of a scalar state distorts by the mean step size") {
        EmbeddingModel model = linear_model(Matrix(Matrix::Constant(1, 1, 2.0)),
                                            Matrix(Matrix::Constant(1, 1, 0.5)));
        WindowBatch batch;
        batch.B = 1;
        batch.L = 4;
        batch.m = 1;
        batch.d = 0;
        batch.states = random_matrix(rng, 5, 1, -1.0, 1.0);
        batch.actions = Matrix(4, 0);
        double mean_ds = 0.0;
        for (int t = 0; t < 4; ++t) mean_ds += std::abs(batch.states(t + 1, 0) - batch.states(t, 0));
        mean_ds /= 4.0;
        CHECK(isometry_loss(model, batch) == doctest::Approx(mean_ds).epsilon(1e-13));
    }
}

TEST_CASE("loss gradients match finite differences with operators held constant") {
    Rng rng(912);
    const int m = 3, n = 4, d = 2, B = 4, L = 3;
    EmbeddingModel model = make_embedding_model(m, n, 0.3, rng);
    model.norm_mu << 0.1, -0.2, 0.4;
    model.norm_sigma << 1.3, 0.7, 2.0;

    WindowBatch batch;
    batch.B = B;
    batch.L = L;
    batch.m = m;
    batch.d = d;
    batch.states = random_matrix(rng, B * (L + 1), m, -1.5, 1.5);
    batch.actions = random_matrix(rng, B * L, d);

    // Frozen operators: the stop-gradient contract means finite differences
    // re-evaluate the loss with these exact operators, never re-identified.
    Matrix p = random_with_spectral_norm(rng, n, 0.8);
    Matrix u = random_matrix(rng, n, n * d, -0.3, 0.3);
    LatentOperators ops = make_ops(p, u, 0.1);

    auto check_against_fd = [&](const char* label, auto&& value_of, const LossGrads& grads) {
        double worst = 0.0;
        auto scan = [&](MlpParams& params, const MlpGrads& g) {
            for (std::size_t l = 0; l < params.layers.size(); ++l) {
                Matrix& w = params.layers[l].W;
                for (Eigen::Index i = 0; i < w.rows(); ++i)
                    for (Eigen::Index j = 0; j < w.cols(); ++j) {
                        double fd = central_diff(&w(i, j), 1e-5, value_of);
                        worst = std::max(worst, std::abs(g.layers[l].dW(i, j) - fd) /
                                                    std::max(1.0, std::abs(fd)));
                    }
                Vector& b = params.layers[l].b;
                for (Eigen::Index i = 0; i < b.size(); ++i) {
                    double fd = central_diff(&b(i), 1e-5, value_of);
                    worst = std::max(worst, std::abs(g.layers[l].db(i) - fd) /
                                                std::max(1.0, std::abs(fd)));
                }
            }
        };
        scan(model.encoder, grads.enc);
        scan(model.decoder, grads.dec);
        CAPTURE(label);
        CHECK(worst <= 1e-4);
    };

    SUBCASE("forward loss") {
        LossGrads g = zero_loss_grads(model);
        forward_loss(model, ops, batch, &g);
        check_against_fd("forward", [&] { return forward_loss(model, ops, batch); }, g);
    }
    SUBCASE("isometry loss") {
        LossGrads g = zero_loss_grads(model);
        isometry_loss(model, batch, &g);
        check_against_fd("isometry", [&] { return isometry_loss(model, batch); }, g);
    }
    SUBCASE("total loss") {
        LossGrads g = zero_loss_grads(model);
        total_loss(model, ops, batch, &g);
        check_against_fd("total", [&] { return total_loss(model, ops, batch).value; }, g);
    }
}

TEST_CASE("gather_windows copies the right rows and validates ranges") {
    TrajectorySet ts;
    ts.env_name = "toy";
    ts.steps = 4;
    ts.m = 2;
    ts.d = 1;
    for (int j = 0; j < 2; ++j) {
        Matrix s(5, 2), a(4, 1);
        for (int t = 0; t < 5; ++t) {
            s(t, 0) = 10.0 * j + t;
            s(t, 1) = -(10.0 * j + t);
        }
        for (int t = 0; t < 4; ++t) a(t, 0) = 100.0 * j + t;
        ts.states.push_back(s);
        ts.actions.push_back(a);
        ts.rewards.push_back(Vector::Zero(4));
    }

    std::vector<WindowRef> refs = {{0, 1}, {1, 2}};
    WindowBatch b = gather_windows(ts, refs, 2, 0, 2);
    CHECK(b.B == 2);
    CHECK(b.states.rows() == 6);
    CHECK(b.actions.rows() == 4);
    CHECK(b.states(0, 0) == 1.0);   // traj 0, state 1
    CHECK(b.states(2, 0) == 3.0);   // traj 0, state 3
    CHECK(b.states(3, 0) == 12.0);  // traj 1, state 2
    CHECK(b.states(5, 1) == -14.0);
    CHECK(b.actions(1, 0) == 2.0);    // traj 0, action 2
    CHECK(b.actions(2, 0) == 102.0);  // traj 1, action 2
    CHECK_THROWS_AS(gather_windows(ts, {{0, 4}}, 2, 0, 1), StateError);
    CHECK_THROWS_AS(gather_windows(ts, {{2, 0}}, 2, 0, 1), StateError);
    CHECK_THROWS_AS(gather_windows(ts, refs, 2, 1, 2), StateError);
}

TEST_CASE("train_embedding validates its inputs") {
    auto src = std::make_shared<const TrajectorySet>(make_linear1d_set(4, 10, 0.1, 7));
    WindowDataset wd = slice_windows(src, 4, 7);
    EmbedTrainConfig cfg;
    cfg.n = 2;
    cfg.dt = 0.1;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train_embedding(wd, cfg), ConfigError);
    cfg.epochs = 1;
    cfg.batch = 0;
    CHECK_THROWS_AS(train_embedding(wd, cfg), ConfigError);
    cfg.batch = 16;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(train_embedding(wd, cfg), ConfigError);
    cfg.dt = 0.1;
    WindowDataset empty = slice_windows(src, 100, 7);
    CHECK_THROWS_AS(train_embedding(empty, cfg), StateError);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto src = std::make_shared<const TrajectorySet>(make_linear1d_set(8, 12, 0.1, 21));
    WindowDataset wd = slice_windows(src, 4, 21);
    EmbedTrainConfig cfg;
    cfg.n = 2;
    cfg.dt = 0.1;
    cfg.epochs = 2;
    cfg.batch = 32;
    cfg.seed = 5;
    EmbedTrainResult r1 = train_embedding(wd, cfg);
    EmbedTrainResult r2 = train_embedding(wd, cfg);
    REQUIRE(r1.epoch_log.size() == 2);
    CHECK(r1.epoch_log[0].value == r2.epoch_log[0].value);
    CHECK(r1.epoch_log[0].fwd == r2.epoch_log[0].fwd);
    CHECK(r1.epoch_log[0].met == r2.epoch_log[0].met);
    CHECK((r1.ops.P - r2.ops.P).norm() == 0.0);
    CHECK((r1.ops.U - r2.ops.U).norm() == 0.0);
    CHECK((r1.model.encoder.layers[0].W - r2.model.encoder.layers[0].W).norm() == 0.0);
}

}  // TEST_SUITE("koopman")

TEST_SUITE("slow") {

TEST_CASE("koopman: training a 1-d linear system reaches small held-out error") {
    const double h = 0.1;
    auto src = std::make_shared<const TrajectorySet>(make_linear1d_set(60, 30, h, 33));
    WindowDataset wd = slice_windows(src, 4, 33);

    EmbedTrainConfig cfg;
    cfg.n = 2;
    cfg.dt = h;
    cfg.epochs = 1000;
    cfg.batch = 128;
    cfg.lr = 3e-3;
    cfg.lr_decay = 0.998;
    cfg.eps = 1e-6;
    cfg.seed = 11;
    EmbedTrainResult res = train_embedding(wd, cfg);

    CHECK(res.epoch_log.back().value < res.epoch_log.front().value);

    Rng rng(777);
    double err = 0.0;
    const int trials = 500;
    for (int i = 0; i < trials; ++i) {
        Vector s(1), a(1);
        s << rng.uniform(-1.0, 1.0);
        a << rng.uniform(-1.0, 1.0);
        Vector s_next(1);
        s_next << linear1d_step(s(0), a(0), h);
        Vector z_pred = predict_flow(res.ops, res.model.encode(s), a);
        err += (res.model.encode(s_next) - z_pred).norm();
    }
    err /= trials;
    CAPTURE(err);
    CHECK(err <= 1e-3);
}

TEST_CASE("koopman: equivariance error shrinks together with the training loss") {
    // Ground truth: z_dot = P0 z + B0 a observed directly (encoder must learn
    // some embedding of a 2-d linear system). Per epoch we measure
    // ||encode(F(s, a)) - predict_flow(encode(s), a)|| on held-out pairs and
    // require it to co-trend with the training loss.
    Matrix p0(2, 2);
    p0 << -0.5, 1.2, -1.2, -0.5;
    Matrix b0(2, 1);
    b0 << 1.0, 0.4;
    const double h = 0.1;
    Matrix e0 = exp_series(p0 * h);
    Matrix phi0 = h * phi1_series(p0 * h);

    TrajectorySet ts;
    ts.env_name = "linear2d";
    ts.seed = 55;
    ts.steps = 25;
    ts.m = 2;
    ts.d = 1;
    Rng gen(55);
    for (int j = 0; j < 40; ++j) {
        Matrix s(26, 2), a(25, 1);
        s.row(0) << gen.uniform(-1.0, 1.0), gen.uniform(-1.0, 1.0);
        for (int t = 0; t < 25; ++t) {
            a(t, 0) = gen.uniform(-1.0, 1.0);
            s.row(t + 1) = (e0 * s.row(t).transpose() + phi0 * b0 * a.row(t).transpose()).transpose();
        }
        ts.states.push_back(s);
        ts.actions.push_back(a);
        ts.rewards.push_back(Vector::Zero(25));
    }
    auto src = std::make_shared<const TrajectorySet>(std::move(ts));
    WindowDataset wd = slice_windows(src, 4, 55);

    Rng held(56);
    Matrix hs = random_matrix(held, 200, 2), ha = random_matrix(held, 200, 1);

    // The correlation is taken over a long run; the first dozen epochs are an
    // adjustment transient (the EMA operators lag the encoder), after which
    // both series descend together.
    std::vector<double> losses, equiv_errs;
    EmbedTrainConfig cfg;
    cfg.n = 4;
    cfg.dt = h;
    cfg.epochs = 200;
    cfg.batch = 128;
    cfg.eps = 1e-6;
    cfg.seed = 3;
    cfg.on_epoch = [&](int, const TotalLoss& tl, const EmbeddingModel& model,
                       const LatentOperators& ema) {
        double err = 0.0;
        for (int i = 0; i < 200; ++i) {
            Vector s = hs.row(i).transpose();
            Vector a = ha.row(i).transpose();
            Vector s_next = e0 * s + phi0 * b0 * a;
            err += (model.encode(s_next) - predict_flow(ema, model.encode(s), a)).norm();
        }
        losses.push_back(tl.value);
        equiv_errs.push_back(err / 200.0);
    };
    train_embedding(wd, cfg);

    REQUIRE(losses.size() == 200);
    double rho = spearman(losses, equiv_errs);
    CAPTURE(rho);
    CHECK(rho > 0.9);
}

}  // TEST_SUITE("slow")
