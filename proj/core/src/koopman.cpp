#include "keec/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "keec/errors.hpp"

namespace keec {

namespace {

constexpr double kNormFloor = 1e-12;  // below this a residual direction is taken as zero

void check_ops(const LatentOperators& ops) {
    if (ops.P.rows() != ops.n || ops.P.cols() != ops.n)
        throw DimensionError("latent operators: P must be n x n");
    if (ops.U.rows() != ops.n || ops.U.cols() != static_cast<Eigen::Index>(ops.n) * ops.d)
        throw DimensionError("latent operators: U must be n x (n*d)");
    if (ops.exp_pdt.rows() != ops.n || ops.phi_dt.rows() != ops.n)
        throw StateError("latent operators: caches stale; call refresh()");
}

}  // namespace

void LatentOperators::refresh() {
    if (P.rows() != P.cols()) throw DimensionError("latent operators: P must be square");
    n = static_cast<int>(P.rows());
    d = n > 0 ? static_cast<int>(U.cols()) / n : 0;
    if (U.rows() != n || U.cols() != static_cast<Eigen::Index>(n) * d)
        throw DimensionError("latent operators: U must be n x (n*d)");
    if (!(dt > 0.0)) throw ConfigError("latent operators: dt must be positive");
    exp_pdt = numkit::mat_exp(P * dt);
    phi_dt = dt * numkit::phi1(P * dt);
}

Matrix LatentOperators::uz(const Vector& z) const {
    if (z.size() != n) throw DimensionError("uz: z has wrong dimension");
    Matrix out = Matrix::Zero(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < d; ++k) out(i, k) += U(i, j * d + k) * z(j);
    return out;
}

Matrix EmbeddingModel::encode(const Matrix& s) const {
    if (s.cols() != m()) throw DimensionError("encode: state dimension mismatch");
    Matrix sn = (s.rowwise() - norm_mu.transpose()).array().rowwise() /
                norm_sigma.transpose().array();
    return mlp_forward(encoder, sn);
}

Matrix EmbeddingModel::decode(const Matrix& z) const {
    if (z.cols() != n) throw DimensionError("decode: latent dimension mismatch");
    Matrix y = mlp_forward(decoder, z);
    y = (y.array().rowwise() * norm_sigma.transpose().array()).matrix().rowwise() +
        norm_mu.transpose();
    return y;
}

Vector EmbeddingModel::encode(const Vector& s) const {
    Matrix row = encode(Matrix(s.transpose()));
    return row.transpose();
}

Vector EmbeddingModel::decode(const Vector& z) const {
    Matrix row = decode(Matrix(z.transpose()));
    return row.transpose();
}

EmbeddingModel make_embedding_model(int m, int n, double lambda_met, Rng& rng) {
    if (m < 1) throw ConfigError("embedding model: state dimension must be >= 1");
    if (n < 2 || n % 2 != 0) throw ConfigError("embedding model: latent dimension must be even and >= 2");
    if (!(lambda_met >= 0.0 && lambda_met <= 1.0))
        throw ConfigError("embedding model: lambda_met must lie in [0, 1]");
    EmbeddingModel model;
    model.n = n;
    model.lambda_met = lambda_met;
    const int h = n / 2;
    model.encoder = init_params({m, h, n, n, n}, {Act::tanh_fn, Act::tanh_fn, Act::tanh_fn, Act::none}, rng);
    model.decoder = init_params({n, n, n, h, m}, {Act::tanh_fn, Act::tanh_fn, Act::tanh_fn, Act::none}, rng);
    model.norm_mu = Vector::Zero(m);
    model.norm_sigma = Vector::Ones(m);
    return model;
}

void set_normalization(EmbeddingModel& model, const TrajectorySet& ts) {
    const int m = model.m();
    if (ts.m != m) throw DimensionError("set_normalization: state dimension mismatch");
    if (ts.count() == 0) throw StateError("set_normalization: empty trajectory set");
    Vector mu = Vector::Zero(m), sq = Vector::Zero(m);
    double total = 0.0;
    for (const Matrix& s : ts.states) {
        mu += s.colwise().sum().transpose();
        sq += s.array().square().colwise().sum().matrix().transpose();
        total += static_cast<double>(s.rows());
    }
    mu /= total;
    model.norm_mu = mu;
    model.norm_sigma =
        ((sq / total - mu.array().square().matrix()).array().max(0.0).sqrt().max(1e-8)).matrix();
}

LatentOperators identify_operators(const Matrix& z, const Matrix& z_plus, const Matrix& a,
                                   double dt, double eps, numkit::RidgeInfo* info) {
    const Eigen::Index rows = z.rows();
    const int n = static_cast<int>(z.cols());
    const int d = static_cast<int>(a.cols());
    if (z_plus.rows() != rows || z_plus.cols() != n)
        throw DimensionError("identify_operators: z_plus shape mismatch");
    if (a.rows() != rows) throw DimensionError("identify_operators: action row count mismatch");
    if (!(dt > 0.0)) throw ConfigError("identify_operators: dt must be positive");

    Matrix lambda(rows, n + static_cast<Eigen::Index>(n) * d);
    lambda.leftCols(n) = z;
    if (d > 0) lambda.rightCols(static_cast<Eigen::Index>(n) * d) = numkit::colwise_kron(z, a);
    Matrix target = (z_plus - z) / dt;
    Matrix w = numkit::ridge_lstsq(lambda, target, eps, info);

    LatentOperators ops;
    ops.P = w.topRows(n).transpose();
    ops.U = w.bottomRows(static_cast<Eigen::Index>(n) * d).transpose();
    ops.dt = dt;
    ops.refresh();
    return ops;
}

Matrix predict_flow(const LatentOperators& ops, const Matrix& z, const Matrix& a) {
    check_ops(ops);
    if (z.cols() != ops.n) throw DimensionError("predict_flow: latent dimension mismatch");
    if (a.rows() != z.rows() || a.cols() != ops.d)
        throw DimensionError("predict_flow: action shape mismatch");
    Matrix out = z * ops.exp_pdt.transpose();
    if (ops.d > 0)
        out.noalias() += numkit::colwise_kron(z, a) * ops.U.transpose() * ops.phi_dt.transpose();
    return out;
}

Vector predict_flow(const LatentOperators& ops, const Vector& z, const Vector& a) {
    Matrix row = predict_flow(ops, Matrix(z.transpose()), Matrix(a.transpose()));
    return row.transpose();
}

WindowBatch gather_windows(const TrajectorySet& ts, const std::vector<WindowRef>& refs, int L,
                           std::size_t first, std::size_t count) {
    if (L < 1) throw ConfigError("gather_windows: window length must be >= 1");
    if (first + count > refs.size()) throw StateError("gather_windows: range out of bounds");
    WindowBatch b;
    b.B = static_cast<int>(count);
    b.L = L;
    b.m = ts.m;
    b.d = ts.d;
    b.states.resize(static_cast<Eigen::Index>(count) * (L + 1), ts.m);
    b.actions.resize(static_cast<Eigen::Index>(count) * L, ts.d);
    for (std::size_t i = 0; i < count; ++i) {
        const WindowRef& ref = refs[first + i];
        if (ref.traj >= ts.count()) throw StateError("gather_windows: trajectory index out of range");
        const Matrix& s = ts.states[ref.traj];
        const Matrix& a = ts.actions[ref.traj];
        if (static_cast<Eigen::Index>(ref.start) + L + 1 > s.rows())
            throw StateError("gather_windows: window exceeds trajectory");
        b.states.middleRows(static_cast<Eigen::Index>(i) * (L + 1), L + 1) =
            s.middleRows(ref.start, L + 1);
        b.actions.middleRows(static_cast<Eigen::Index>(i) * L, L) = a.middleRows(ref.start, L);
    }
    return b;
}

WindowBatch gather_windows(const WindowDataset& wd, std::size_t first, std::size_t count) {
    if (!wd.src) throw StateError("gather_windows: dataset has no source trajectories");
    std::vector<WindowRef> refs(count);
    if (first + count > wd.order.size()) throw StateError("gather_windows: range out of bounds");
    for (std::size_t i = 0; i < count; ++i) refs[i] = wd.order[first + i];
    return gather_windows(*wd.src, refs, wd.L, 0, count);
}

LossGrads zero_loss_grads(const EmbeddingModel& model) {
    LossGrads g;
    g.enc = zero_grads_like(model.encoder);
    g.dec = zero_grads_like(model.decoder);
    return g;
}

namespace {

// Fused forward/isometry evaluation. Weights (w_fwd, w_met) select which
// terms contribute to the value and, when grads != nullptr, to the gradient.
// Operators enter only the prediction path and are held constant there.
TotalLoss loss_kernel(const EmbeddingModel& model, const LatentOperators* ops,
                      const WindowBatch& batch, double w_fwd, double w_met, LossGrads* grads) {
    const int B = batch.B, L = batch.L, m = batch.m;
    if (B < 1 || L < 1) throw StateError("loss: empty batch");
    if (m != model.m()) throw DimensionError("loss: state dimension mismatch");
    const Eigen::Index ns = static_cast<Eigen::Index>(B) * (L + 1);  // state rows
    const Eigen::Index np = static_cast<Eigen::Index>(B) * L;        // transition pairs
    const int n = model.n;

    // Encode all states (normalized inputs, cache for backprop).
    Matrix sn = (batch.states.rowwise() - model.norm_mu.transpose()).array().rowwise() /
                model.norm_sigma.transpose().array();
    ForwardCache enc_cache;
    Matrix z = mlp_forward(model.encoder, sn, &enc_cache);

    // Current-state rows of each pair, aligned with batch.actions rows.
    Matrix z_cur(np, n);
    for (int b = 0; b < B; ++b)
        z_cur.middleRows(static_cast<Eigen::Index>(b) * L, L) =
            z.middleRows(static_cast<Eigen::Index>(b) * (L + 1), L);

    TotalLoss out;
    Matrix dz = Matrix::Zero(ns, n);  // accumulated d(loss)/d(z rows)

    const bool want_fwd = w_fwd != 0.0;
    const bool want_met = w_met != 0.0;

    if (want_fwd) {
        if (ops == nullptr) throw StateError("loss: forward term requires operators");
        check_ops(*ops);
        if (ops->n != n) throw DimensionError("loss: operator latent dimension mismatch");
        if (ops->d != batch.d) throw DimensionError("loss: operator action dimension mismatch");

        Matrix z_hat = predict_flow(*ops, z_cur, batch.actions);

        // Decode predicted and encoded states in one stacked pass.
        Matrix dec_in(np + ns, n);
        dec_in.topRows(np) = z_hat;
        dec_in.bottomRows(ns) = z;
        ForwardCache dec_cache;
        Matrix y = mlp_forward(model.decoder, dec_in, grads ? &dec_cache : nullptr);
        y = (y.array().rowwise() * model.norm_sigma.transpose().array()).matrix().rowwise() +
            model.norm_mu.transpose();

        double pred_sum = 0.0, id_sum = 0.0;
        Matrix dy = Matrix::Zero(np + ns, m);  // d(loss)/d(raw decoder output)
        for (Eigen::Index p = 0; p < np; ++p) {
            const Eigen::Index b = p / L, t = p % L;
            Vector r = y.row(p).transpose() - batch.states.row(b * (L + 1) + t + 1).transpose();
            const double nr = r.norm();
            pred_sum += nr;
            if (grads && nr > kNormFloor) dy.row(p) = (w_fwd / (nr * np)) * r.transpose();
        }
        for (Eigen::Index i = 0; i < ns; ++i) {
            Vector r = y.row(np + i).transpose() - batch.states.row(i).transpose();
            const double nr = r.norm();
            id_sum += nr;
            if (grads && nr > kNormFloor) dy.row(np + i) = (w_fwd / (nr * ns)) * r.transpose();
        }
        out.fwd = pred_sum / static_cast<double>(np) + id_sum / static_cast<double>(ns);

        if (grads) {
            // Undo the output un-standardization, then run the decoder backward.
            dy = (dy.array().rowwise() * model.norm_sigma.transpose().array()).matrix();
            Matrix d_dec_in = mlp_backward(model.decoder, dec_cache, dy, &grads->dec);

            // Identity path: dz straight through.
            dz += d_dec_in.bottomRows(ns);

            // Prediction path: pull the gradient through the one-step flow.
            //   z_hat = E z + Phi (U z) a  =>  dz = E^T g + M_a^T Phi^T g
            // with M_a(i, j) = sum_k U(i, j*d + k) a_k. Batched over rows.
            Matrix g = d_dec_in.topRows(np);
            Matrix dz_cur = g * ops->exp_pdt;
            if (ops->d > 0) {
                Matrix h = g * ops->phi_dt;        // rows are (Phi^T g)^T
                Matrix wk = h * ops->U;            // rows index (j*d + k)
                for (Eigen::Index p = 0; p < np; ++p)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int k = 0; k < ops->d; ++k) acc += batch.actions(p, k) * wk(p, j * ops->d + k);
                        dz_cur(p, j) += acc;
                    }
            }
            for (int b = 0; b < B; ++b)
                dz.middleRows(static_cast<Eigen::Index>(b) * (L + 1), L) +=
                    dz_cur.middleRows(static_cast<Eigen::Index>(b) * L, L);
        }
    }

    if (want_met) {
        double met_sum = 0.0;
        for (Eigen::Index p = 0; p < np; ++p) {
            const Eigen::Index b = p / L, t = p % L;
            const Eigen::Index cur = b * (L + 1) + t;
            Vector dzv = z.row(cur + 1).transpose() - z.row(cur).transpose();
            Vector dsv = batch.states.row(cur + 1).transpose() - batch.states.row(cur).transpose();
            const double nz = dzv.norm(), nssq = dsv.norm();
            const double diff = nz - nssq;
            met_sum += std::abs(diff);
            if (grads && nz > kNormFloor && std::abs(diff) > 0.0) {
                const double c = w_met * (diff > 0.0 ? 1.0 : -1.0) / (nz * static_cast<double>(np));
                dz.row(cur + 1) += c * dzv.transpose();
                dz.row(cur) -= c * dzv.transpose();
            }
        }
        out.met = met_sum / static_cast<double>(np);
    }

    out.value = w_fwd * out.fwd + w_met * out.met;

    if (grads) mlp_backward(model.encoder, enc_cache, dz, &grads->enc);
    return out;
}

}  // namespace

double forward_loss(const EmbeddingModel& model, const LatentOperators& ops,
                    const WindowBatch& batch, LossGrads* grads) {
    return loss_kernel(model, &ops, batch, 1.0, 0.0, grads).fwd;
}

double isometry_loss(const EmbeddingModel& model, const WindowBatch& batch, LossGrads* grads) {
    return loss_kernel(model, nullptr, batch, 0.0, 1.0, grads).met;
}

TotalLoss total_loss(const EmbeddingModel& model, const LatentOperators& ops,
                     const WindowBatch& batch, LossGrads* grads) {
    return loss_kernel(model, &ops, batch, 1.0 - model.lambda_met, model.lambda_met, grads);
}

EmbedTrainResult train_embedding(const WindowDataset& wd, const EmbedTrainConfig& cfg) {
    if (!wd.src) throw StateError("train_embedding: dataset has no source trajectories");
    if (wd.size() == 0) throw StateError("train_embedding: dataset is empty");
    if (cfg.epochs < 1) throw ConfigError("train_embedding: epochs must be >= 1");
    if (cfg.batch < 1) throw ConfigError("train_embedding: batch size must be >= 1");
    if (!(cfg.dt > 0.0)) throw ConfigError("train_embedding: dt must be positive");
    if (!(cfg.ema_momentum >= 0.0 && cfg.ema_momentum < 1.0))
        throw ConfigError("train_embedding: ema_momentum must lie in [0, 1)");

    const TrajectorySet& ts = *wd.src;
    Rng init_rng = Rng::split(cfg.seed, "embed-init", 0);
    EmbedTrainResult res;
    res.model = make_embedding_model(ts.m, cfg.n, cfg.lambda_met, init_rng);
    if (cfg.normalize) set_normalization(res.model, ts);

    AdamState enc_opt = AdamState::like(res.model.encoder);
    AdamState dec_opt = AdamState::like(res.model.decoder);
    const int n = cfg.n, d = ts.d, L = wd.L;
    const std::size_t total = wd.size();
    const std::size_t batches = (total + cfg.batch - 1) / cfg.batch;

    bool have_ema = false;
    Matrix ema_p, ema_u;
    Matrix avg_p, avg_u;  // plain average over the final epoch

    std::vector<std::size_t> perm(total);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng shuf = Rng::split(cfg.seed, "embed-epoch", static_cast<std::uint64_t>(epoch));
        for (std::size_t i = total; i > 1; --i) std::swap(perm[i - 1], perm[shuf.index(i)]);

        const bool last_epoch = epoch == cfg.epochs - 1;
        if (last_epoch) {
            avg_p = Matrix::Zero(n, n);
            avg_u = Matrix::Zero(n, static_cast<Eigen::Index>(n) * d);
        }

        TotalLoss epoch_mean;
        std::vector<WindowRef> refs;
        for (std::size_t bi = 0; bi < batches; ++bi) {
            const std::size_t lo = bi * cfg.batch;
            const std::size_t count = std::min<std::size_t>(cfg.batch, total - lo);
            refs.resize(count);
            for (std::size_t i = 0; i < count; ++i) refs[i] = wd.order[perm[lo + i]];
            WindowBatch batch = gather_windows(ts, refs, L, 0, count);

            // Identification pairs: encoded (z_t, z_{t+1}) within each window.
            Matrix z_all = res.model.encode(batch.states);
            const Eigen::Index np = static_cast<Eigen::Index>(count) * L;
            Matrix zc(np, n), zp(np, n);
            for (std::size_t b = 0; b < count; ++b) {
                zc.middleRows(static_cast<Eigen::Index>(b) * L, L) =
                    z_all.middleRows(static_cast<Eigen::Index>(b) * (L + 1), L);
                zp.middleRows(static_cast<Eigen::Index>(b) * L, L) =
                    z_all.middleRows(static_cast<Eigen::Index>(b) * (L + 1) + 1, L);
            }
            LatentOperators ops = identify_operators(zc, zp, batch.actions, cfg.dt, cfg.eps);

            LossGrads grads = zero_loss_grads(res.model);
            TotalLoss tl = total_loss(res.model, ops, batch, &grads);
            if (!std::isfinite(tl.value)) {
                std::ostringstream msg;
                msg << "train_embedding: loss diverged at epoch " << epoch << ", batch " << bi
                    << " (total=" << tl.value << ", fwd=" << tl.fwd << ", met=" << tl.met << ")";
                throw NumericError(msg.str());
            }
            adam_step(res.model.encoder, grads.enc, enc_opt, lr);
            adam_step(res.model.decoder, grads.dec, dec_opt, lr);

            if (!have_ema) {
                ema_p = ops.P;
                ema_u = ops.U;
                have_ema = true;
            } else {
                ema_p = cfg.ema_momentum * ema_p + (1.0 - cfg.ema_momentum) * ops.P;
                ema_u = cfg.ema_momentum * ema_u + (1.0 - cfg.ema_momentum) * ops.U;
            }
            if (last_epoch) {
                avg_p += ops.P;
                avg_u += ops.U;
            }
            epoch_mean.value += tl.value;
            epoch_mean.fwd += tl.fwd;
            epoch_mean.met += tl.met;
        }
        epoch_mean.value /= static_cast<double>(batches);
        epoch_mean.fwd /= static_cast<double>(batches);
        epoch_mean.met /= static_cast<double>(batches);
        res.epoch_log.push_back(epoch_mean);
        if (cfg.on_epoch) {
            LatentOperators ema;
            ema.P = ema_p;
            ema.U = ema_u;
            ema.dt = cfg.dt;
            ema.refresh();
            cfg.on_epoch(epoch, epoch_mean, res.model, ema);
        }
    }

    res.ops.P = avg_p / static_cast<double>(batches);
    res.ops.U = avg_u / static_cast<double>(batches);
    res.ops.dt = cfg.dt;
    res.ops.refresh();
    res.ema_ops.P = ema_p;
    res.ema_ops.U = ema_u;
    res.ema_ops.dt = cfg.dt;
    res.ema_ops.refresh();
    return res;
}

}  // namespace keec
