// Micro-benchmarks for the numeric kernels on the training and control hot
// paths. Run `keec_bench --benchmark_min_time=0.1` for a quick pass.

#include <benchmark/benchmark.h>

#include "keec/envs.hpp"
#include "keec/koopman.hpp"
#include "keec/nn.hpp"
#include "keec/numkit.hpp"
#include "keec/rng.hpp"
#include "keec/valuectl.hpp"

using namespace keec;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * (2.0 * rng.uniform() - 1.0);
    return m;
}

LatentOperators random_ops(int n, int d, double dt) {
    Rng rng(1);
    LatentOperators ops;
    ops.P = random_matrix(rng, n, n, 0.3);
    ops.U = random_matrix(rng, n, n * d, 0.3);
    ops.dt = dt;
    ops.refresh();
    return ops;
}

void bm_mat_exp(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(2);
    Matrix a = random_matrix(rng, n, n, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(numkit::mat_exp(a));
}
BENCHMARK(bm_mat_exp)->Arg(8)->Arg(16)->Arg(64);

void bm_ridge_identify(benchmark::State& state) {
    // The per-batch operator solve inside training: B latent transitions.
    const int b = static_cast<int>(state.range(0)), n = 8, d = 1;
    Rng rng(3);
    Matrix z = random_matrix(rng, b, n, 1.0);
    Matrix zp = random_matrix(rng, b, n, 1.0);
    Matrix a = random_matrix(rng, b, d, 1.0);
    for (auto _ : state)
        benchmark::DoNotOptimize(identify_operators(z, zp, a, 0.05, 1e-3));
}
BENCHMARK(bm_ridge_identify)->Arg(128)->Arg(1024);

void bm_predict_flow(benchmark::State& state) {
    const int b = static_cast<int>(state.range(0)), n = 8, d = 1;
    LatentOperators ops = random_ops(n, d, 0.05);
    Rng rng(4);
    Matrix z = random_matrix(rng, b, n, 1.0);
    Matrix a = random_matrix(rng, b, d, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(predict_flow(ops, z, a));
}
BENCHMARK(bm_predict_flow)->Arg(1)->Arg(128);

void bm_mlp_forward(benchmark::State& state) {
    const int b = static_cast<int>(state.range(0));
    Rng rng(5);
    MlpParams net = init_params({2, 4, 8, 8, 8}, {Act::tanh_fn, Act::tanh_fn, Act::tanh_fn,
                                                  Act::none}, rng);
    Matrix x = random_matrix(rng, b, 2, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(net, x));
}
BENCHMARK(bm_mlp_forward)->Arg(1)->Arg(128)->Arg(1024);

void bm_mlp_backward(benchmark::State& state) {
    const int b = static_cast<int>(state.range(0));
    Rng rng(6);
    MlpParams net = init_params({2, 4, 8, 8, 8}, {Act::tanh_fn, Act::tanh_fn, Act::tanh_fn,
                                                  Act::none}, rng);
    Matrix x = random_matrix(rng, b, 2, 1.0);
    ForwardCache cache;
    Matrix y = mlp_forward(net, x, &cache);
    Matrix dy = Matrix::Ones(y.rows(), y.cols());
    MlpGrads grads = zero_grads_like(net);
    for (auto _ : state) benchmark::DoNotOptimize(mlp_backward(net, cache, dy, &grads));
}
BENCHMARK(bm_mlp_backward)->Arg(128)->Arg(1024);

void bm_env_step(benchmark::State& state) {
    const EnvName name = static_cast<EnvName>(state.range(0));
    EnvSpec env = EnvSpec::make(name);
    Rng rng(7);
    Vector s = sample_initial(env, rng);
    Vector a = Vector::Zero(env.d);
    for (auto _ : state) benchmark::DoNotOptimize(s = step_rk4(env, s, a));
}
BENCHMARK(bm_env_step)
    ->Arg(static_cast<int>(EnvName::pendulum))
    ->Arg(static_cast<int>(EnvName::lorenz63))
    ->Arg(static_cast<int>(EnvName::wave));

void bm_greedy_action(benchmark::State& state) {
    const int n = 8, d = 1;
    LatentOperators ops = random_ops(n, d, 0.05);
    Rng rng(8);
    ValueModel vm = make_value_model(n, ValueVariant::mlp, 0.99, 1.0, rng);
    PolicyConfig cfg;
    cfg.gamma = 0.99;
    cfg.r1 = Matrix::Identity(d, d) * 0.001;
    cfg.dt = 0.05;
    cfg.action_low = Vector::Constant(d, -2.0);
    cfg.action_high = Vector::Constant(d, 2.0);
    Vector z = random_matrix(rng, n, 1, 1.0).col(0);
    for (auto _ : state) benchmark::DoNotOptimize(greedy_action(ops, vm, z, cfg));
}
BENCHMARK(bm_greedy_action);

}  // namespace

BENCHMARK_MAIN();
