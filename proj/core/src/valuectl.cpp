#include "keec/valuectl.hpp"

#include <cmath>
#include <utility>

#include "keec/errors.hpp"

namespace keec {

namespace {

void check_latent(const ValueModel& vm, const Vector& z) {
    if (z.size() != vm.n) throw DimensionError("value: latent dimension mismatch");
}

// Reshape the quadratic net output row (1 x n^2) as the n x n factor H(z).
Matrix reshape_half(const Matrix& flat, int n) {
    Matrix h(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) h(i, j) = flat(0, i * n + j);
    return h;
}

// Pullback of a cotangent on H through the W-net: returns the n-vector
// t with t_k = sum_ij cot(i, j) * dH_ij/dz_k.
Vector half_net_pullback(const ValueModel& vm, const ForwardCache& cache, const Matrix& cot) {
    const int n = vm.n;
    Matrix dy(1, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) dy(0, i * n + j) = cot(i, j);
    Matrix dx = mlp_backward(vm.net, cache, dy);
    return dx.row(0).transpose();
}

Vector clip_to_box(Vector a, const PolicyConfig& cfg) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
        a(i) = std::min(cfg.action_high(i), std::max(cfg.action_low(i), a(i)));
    return a;
}

Matrix solve_r1(const PolicyConfig& cfg, const Vector& rhs) {
    Eigen::LLT<Eigen::MatrixXd> llt(cfg.r1);
    if (llt.info() != Eigen::Success) throw ConfigError("policy: R1 is not SPD");
    return llt.solve(rhs);
}

}  // namespace

ValueModel make_value_model(int n, ValueVariant variant, double gamma, double out_scale,
                            Rng& rng) {
    if (n < 1) throw ConfigError("value model: latent dimension must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("value model: gamma must lie in (0, 1)");
    ValueModel vm;
    vm.variant = variant;
    vm.gamma = gamma;
    vm.out_scale = out_scale;
    vm.n = n;
    if (variant == ValueVariant::mlp) {
        if (n % 2 != 0) throw ConfigError("value model: mlp variant needs even n");
        vm.net = init_params({n, n, n / 2, n / 2, 1}, {Act::relu, Act::relu, Act::relu, Act::none},
                             rng);
    } else {
        vm.net = init_params({n, n * n}, {Act::none}, rng);
        vm.z_star = Vector::Zero(n);
    }
    return vm;
}

double value(const ValueModel& vm, const Vector& z) {
    check_latent(vm, z);
    if (vm.variant == ValueVariant::mlp) {
        Matrix out = mlp_forward(vm.net, Matrix(z.transpose()));
        return vm.out_scale * out(0, 0);
    }
    Matrix flat = mlp_forward(vm.net, Matrix(z.transpose()));
    Matrix h = reshape_half(flat, vm.n);
    Vector w = h * (z - vm.z_star);
    return -w.squaredNorm() + vm.bias;
}

Vector value_grad(const ValueModel& vm, const Vector& z) {
    check_latent(vm, z);
    ForwardCache cache;
    if (vm.variant == ValueVariant::mlp) {
        mlp_forward(vm.net, Matrix(z.transpose()), &cache);
        Matrix dx = mlp_backward(vm.net, cache, Matrix(Matrix::Ones(1, 1)));
        return vm.out_scale * dx.row(0).transpose();
    }
    Matrix flat = mlp_forward(vm.net, Matrix(z.transpose()), &cache);
    Matrix h = reshape_half(flat, vm.n);
    Vector q = z - vm.z_star;
    Vector w = h * q;
    // V = -||H(z) q||^2 + b: the q path gives -2 H^T w, the H path pulls the
    // cotangent -2 w q^T back through the net.
    Vector grad = -2.0 * (h.transpose() * w);
    grad += half_net_pullback(vm, cache, Matrix(-2.0 * w * q.transpose()));
    return grad;
}

PolicyConfig make_policy_config(const EnvSpec& env, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("policy: gamma must lie in (0, 1)");
    PolicyConfig cfg;
    cfg.gamma = gamma;
    cfg.r1 = env.R1;
    cfg.dt = env.dt;
    cfg.action_low = env.action_low;
    cfg.action_high = env.action_high;
    if (env.d > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(cfg.r1);
        if (llt.info() != Eigen::Success) throw ConfigError("policy: R1 is not SPD");
    }
    return cfg;
}

Vector greedy_action(const LatentOperators& ops, const ValueModel& vm, const Vector& z,
                     const PolicyConfig& cfg) {
    if (ops.d == 0) return Vector(0);
    Vector g = value_grad(vm, z);
    Vector rhs = ops.uz(z).transpose() * g;
    Vector raw = 0.5 * cfg.gamma * solve_r1(cfg, rhs);
    return clip_to_box(std::move(raw), cfg);
}

Vector quadratic_greedy_action(const LatentOperators& ops, const ValueModel& vm, const Vector& z,
                               const PolicyConfig& cfg) {
    if (vm.variant != ValueVariant::quadratic)
        throw StateError("quadratic_greedy_action: value model is not the quadratic variant");
    if (ops.d == 0) return Vector(0);
    ForwardCache cache;
    Matrix flat = mlp_forward(vm.net, Matrix(z.transpose()), &cache);
    Matrix h = reshape_half(flat, vm.n);
    Vector q = z - vm.z_star;
    Vector w = h * q;
    // rho = W z + gamma t  (or W q in corrected mode), with
    // t_k = sum_ij w_i q_j dH_ij/dz_k, so q^T (dW/dz_k) q = 2 t_k.
    Vector rho = cfg.corrected_quadratic ? Vector(h.transpose() * w)
                                         : Vector(h.transpose() * (h * z));
    rho += cfg.gamma * half_net_pullback(vm, cache, Matrix(w * q.transpose()));
    Vector raw = -cfg.gamma * solve_r1(cfg, Vector(ops.uz(z).transpose() * rho));
    return clip_to_box(std::move(raw), cfg);
}

Vector policy_action(const LatentOperators& ops, const ValueModel& vm, const Vector& z,
                     const PolicyConfig& cfg) {
    return cfg.use_quadratic ? quadratic_greedy_action(ops, vm, z, cfg)
                             : greedy_action(ops, vm, z, cfg);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
}

ValueOpt ValueOpt::like(const ValueModel& vm) {
    ValueOpt opt;
    opt.net = AdamState::like(vm.net);
    return opt;
}

double td_update(ValueModel& vm, const ValueModel& target, const ReplayBuffer& buf, int batch,
                 double lr, ValueOpt& opt, Rng& rng) {
    if (buf.size() == 0) throw StateError("td_update: empty replay buffer");
    if (batch < 1) throw ConfigError("td_update: batch must be >= 1");
    const int n = vm.n;

    Matrix z(batch, n), z_next(batch, n);
    Vector r(batch);
    for (int b = 0; b < batch; ++b) {
        const Transition& t = buf[rng.index(buf.size())];
        z.row(b) = t.z.transpose();
        z_next.row(b) = t.z_next.transpose();
        r(b) = t.r;
    }

    // Frozen-target values of the successor states.
    Vector v_next(batch);
    if (target.variant == ValueVariant::mlp) {
        Matrix out = mlp_forward(target.net, z_next);
        v_next = target.out_scale * out.col(0);
    } else {
        for (int b = 0; b < batch; ++b) v_next(b) = value(target, Vector(z_next.row(b).transpose()));
    }

    ForwardCache cache;
    Matrix out = mlp_forward(vm.net, z, &cache);
    MlpGrads grads = zero_grads_like(vm.net);
    double loss = 0.0;

    if (vm.variant == ValueVariant::mlp) {
        Matrix dy(batch, 1);
        for (int b = 0; b < batch; ++b) {
            const double delta = r(b) + vm.gamma * v_next(b) - vm.out_scale * out(b, 0);
            loss += delta * delta;
            dy(b, 0) = -2.0 * delta * vm.out_scale / batch;
        }
        mlp_backward(vm.net, cache, dy, &grads);
        adam_step(vm.net, grads, opt.net, lr);
    } else {
        Matrix dy = Matrix::Zero(batch, n * n);
        double dbias = 0.0;
        for (int b = 0; b < batch; ++b) {
            Matrix h = reshape_half(Matrix(out.row(b)), n);
            Vector q = z.row(b).transpose() - vm.z_star;
            Vector w = h * q;
            const double v_cur = -w.squaredNorm() + vm.bias;
            const double delta = r(b) + vm.gamma * v_next(b) - v_cur;
            loss += delta * delta;
            // dLoss/dH = (-2 delta / B) * dV/dH = (4 delta / B) w q^T.
            const double c = 4.0 * delta / batch;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) dy(b, i * n + j) = c * w(i) * q(j);
            dbias += -2.0 * delta / batch;
        }
        mlp_backward(vm.net, cache, dy, &grads);
        adam_step(vm.net, grads, opt.net, lr);
        // Scalar Adam step for the bias, sharing the net's step counter.
        const double b1 = opt.net.beta1, b2 = opt.net.beta2;
        opt.m_bias = b1 * opt.m_bias + (1.0 - b1) * dbias;
        opt.v_bias = b2 * opt.v_bias + (1.0 - b2) * dbias * dbias;
        const double t_step = static_cast<double>(opt.net.step);
        const double mhat = opt.m_bias / (1.0 - std::pow(b1, t_step));
        const double vhat = opt.v_bias / (1.0 - std::pow(b2, t_step));
        vm.bias -= lr * mhat / (std::sqrt(vhat) + opt.net.eps);
    }
    return loss / batch;
}

ValueTrainResult train_value(const EmbeddingModel& model, const LatentOperators& ops,
                             const EnvSpec& env, const ValueTrainConfig& cfg) {
    if (model.n != ops.n) throw DimensionError("train_value: model/operator latent mismatch");
    if (env.m != model.m()) throw DimensionError("train_value: env state dimension mismatch");
    if (env.d != ops.d) throw DimensionError("train_value: env action dimension mismatch");
    if (cfg.episodes < 1 || cfg.horizon < 1) throw ConfigError("train_value: episodes and horizon must be >= 1");
    if (cfg.target_every < 1) throw ConfigError("train_value: target_every must be >= 1");

    Rng init_rng = Rng::split(cfg.seed, "value-init", 0);
    ValueTrainResult res;
    res.vm = make_value_model(model.n, cfg.variant, cfg.gamma, cfg.out_scale, init_rng);
    if (cfg.variant == ValueVariant::quadratic) res.vm.z_star = model.encode(env.goal);

    PolicyConfig pcfg = make_policy_config(env, cfg.gamma);
    ValueModel target = res.vm;
    ReplayBuffer buf(cfg.buffer_capacity);
    ValueOpt opt = ValueOpt::like(res.vm);
    long steps = 0;

    for (int e = 0; e < cfg.episodes; ++e) {
        Rng ep_rng = Rng::split(cfg.seed, "value-episode", static_cast<std::uint64_t>(e));
        Vector s0 = sample_initial(env, ep_rng);
        Vector z = model.encode(s0);
        for (int t = 0; t < cfg.horizon; ++t) {
            Vector a = greedy_action(ops, res.vm, z, pcfg);
            if (cfg.explore_noise > 0.0) {
                for (Eigen::Index i = 0; i < a.size(); ++i)
                    a(i) += cfg.explore_noise * ep_rng.uniform(-1.0, 1.0);
                a = clip_action(env, std::move(a));
            }
            const double r = reward(env, model.decode(z), a);
            Vector z_next = predict_flow(ops, z, a);
            if (!z_next.allFinite() || !std::isfinite(r)) {
                ++res.truncated;
                break;
            }
            buf.push({z, a, z_next, r});
            z = std::move(z_next);
        }

        const double lr = cfg.lr * std::pow(cfg.lr_decay, e);
        Rng upd_rng = Rng::split(cfg.seed, "value-update", static_cast<std::uint64_t>(e));
        double mean_loss = 0.0;
        for (int u = 0; u < cfg.updates_per_episode; ++u) {
            mean_loss += td_update(res.vm, target, buf, cfg.batch, lr, opt, upd_rng);
            if (++steps % cfg.target_every == 0) target = res.vm;
        }
        mean_loss /= cfg.updates_per_episode;
        res.episode_loss.push_back(mean_loss);
        if (cfg.on_episode) cfg.on_episode(e, mean_loss);
    }
    return res;
}

ControlResult run_control(const EnvSpec& env, const EmbeddingModel& model,
                          const LatentOperators& ops, const ValueModel& vm,
                          const PolicyConfig& cfg, const Vector& s0, int t_max) {
    if (t_max < 0) throw ConfigError("run_control: t_max must be >= 0");
    if (s0.size() != env.m) throw DimensionError("run_control: initial state dimension mismatch");

    ControlResult res;
    res.states.resize(t_max + 1, env.m);
    res.actions.resize(t_max, env.d);
    res.rewards.resize(t_max);
    res.states.row(0) = s0.transpose();

    Vector s = s0;
    int t = 0;
    for (; t < t_max; ++t) {
        Vector a;
        try {
            Vector z = model.encode(s);
            a = policy_action(ops, vm, z, cfg);
            res.rewards(t) = reward(env, s, a);
            res.actions.row(t) = a.transpose();
            s = step_rk4(env, s, a);
        } catch (const NumericError&) {
            res.diverged = true;
            break;
        }
        res.states.row(t + 1) = s.transpose();
        res.episodic += res.rewards(t);
    }
    res.states.conservativeResize(t + 1, env.m);
    res.actions.conservativeResize(t, env.d);
    res.rewards.conservativeResize(t);
    return res;
}

}  // namespace keec
