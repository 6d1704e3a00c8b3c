#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "keec/data.hpp"
#include "keec/nn.hpp"
#include "keec/numkit.hpp"
#include "keec/rng.hpp"

namespace keec {

// Identified latent dynamics z_dot = P z + (U z) a. U is stored flattened as
// an n x (n*d) matrix whose entry (i, j*d + k) multiplies z_j * a_k — the same
// index layout colwise_kron produces, which the identification solve depends
// on. Caches hold exp(P*dt) and dt*phi1(P*dt); call refresh() after editing
// P, U, or dt by hand.
struct LatentOperators {
    Matrix P;        // n x n generator
    Matrix U;        // n x (n*d) actuation coefficients; d == 0 gives n x 0
    double dt = 0.0;
    int n = 0, d = 0;
    Matrix exp_pdt;  // exp(P dt)
    Matrix phi_dt;   // dt * phi1(P dt)

    void refresh();

    // The n x d matrix (U z): column k is the actuation direction of a_k.
    Matrix uz(const Vector& z) const;
};

// Encoder/decoder pair with per-dimension input standardization. The MLPs see
// (s - mu) / sigma; decode un-standardizes its output, so encode/decode and
// every loss operate in raw state units.
struct EmbeddingModel {
    MlpParams encoder;  // m -> n/2 -> n -> n -> n (tanh, tanh, tanh, none)
    MlpParams decoder;  // n -> n -> n -> n/2 -> m (tanh, tanh, tanh, none)
    int n = 0;
    double lambda_met = 0.3;
    Vector norm_mu, norm_sigma;  // sigma elementwise > 0

    Matrix encode(const Matrix& s) const;
    Matrix decode(const Matrix& z) const;
    Vector encode(const Vector& s) const;
    Vector decode(const Vector& z) const;
    int m() const { return encoder.in_dim(); }
};

// Fresh model with Glorot-initialized nets and identity normalization.
// n must be even (the first encoder layer is m -> n/2).
EmbeddingModel make_embedding_model(int m, int n, double lambda_met, Rng& rng);

// Sets norm_mu/norm_sigma from the per-dimension mean/std of all states in
// the set (sigma floored at 1e-8).
void set_normalization(EmbeddingModel& model, const TrajectorySet& ts);

// Solves the ridge least squares (Eq.-style Koopman differencing)
//   [Z, colwise_kron(Z, A)] W ~= (Z_plus - Z)/dt
// and splits W^T into P (first n columns) and U (remaining n*d columns).
LatentOperators identify_operators(const Matrix& z, const Matrix& z_plus, const Matrix& a,
                                   double dt, double eps,
                                   numkit::RidgeInfo* info = nullptr);

// Equivariant one-step flow: exp(P dt) z + dt phi1(P dt) (U z) a.
Vector predict_flow(const LatentOperators& ops, const Vector& z, const Vector& a);
// Batched rows: Z is B x n, A is B x d.
Matrix predict_flow(const LatentOperators& ops, const Matrix& z, const Matrix& a);

// B windows of L transitions gathered contiguously:
//   states row b*(L+1) + t, t = 0..L;  actions row b*L + t, t = 0..L-1.
struct WindowBatch {
    int B = 0, L = 0, m = 0, d = 0;
    Matrix states;
    Matrix actions;
};

WindowBatch gather_windows(const WindowDataset& wd, std::size_t first, std::size_t count);
WindowBatch gather_windows(const TrajectorySet& ts, const std::vector<WindowRef>& refs, int L,
                           std::size_t first, std::size_t count);

struct LossGrads {
    MlpGrads enc, dec;
};

LossGrads zero_loss_grads(const EmbeddingModel& model);

// Forward loss: mean_, over batch and window, of the one-step prediction
// residual ||decode(z_hat_{t+1}) - s_{t+1}|| plus the autoencoder identity
// residual ||decode(encode(s_t)) - s_t|| over all L+1 states. The operators
// are treated as constants (stop-gradient); gradients flow through the
// encoder, the decoder, and z_t inside predict_flow.
double forward_loss(const EmbeddingModel& model, const LatentOperators& ops,
                    const WindowBatch& batch, LossGrads* grads = nullptr);

// Isometry loss: mean over transition pairs of
//   | ||z_{t+1} - z_t|| - ||s_{t+1} - s_t|| |   (encoded vs raw distances).
double isometry_loss(const EmbeddingModel& model, const WindowBatch& batch,
                     LossGrads* grads = nullptr);

struct TotalLoss {
    double value = 0.0, fwd = 0.0, met = 0.0;
};

// (1 - lambda_met) * forward + lambda_met * isometry, one fused pass.
TotalLoss total_loss(const EmbeddingModel& model, const LatentOperators& ops,
                     const WindowBatch& batch, LossGrads* grads = nullptr);

struct EmbedTrainConfig {
    int epochs = 100;
    int batch = 128;
    double lr = 1e-3;
    double lr_decay = 0.99;   // multiplied per epoch
    double lambda_met = 0.3;
    double eps = 1e-3;        // ridge regularizer
    int n = 8;                // latent dimension (even)
    double dt = 0.05;         // must equal the data-collection dt
    std::uint64_t seed = 0;
    double ema_momentum = 0.99;
    bool normalize = true;
    // Called once per epoch when set with the epoch index, the epoch mean
    // losses, the current model, and the running (EMA) operator estimate.
    std::function<void(int, const TotalLoss&, const EmbeddingModel&, const LatentOperators&)>
        on_epoch;
};

struct EmbedTrainResult {
    EmbeddingModel model;
    LatentOperators ops;      // plain average of last-epoch batch solutions
    LatentOperators ema_ops;  // exponential average maintained during training
    std::vector<TotalLoss> epoch_log;
};

// Algorithm-1-style joint training: per batch, encode, identify operators on
// the batch, evaluate the total loss with those operators held constant, and
// Adam-update encoder/decoder. Throws NumericError with diagnostics if the
// loss turns non-finite.
EmbedTrainResult train_embedding(const WindowDataset& wd, const EmbedTrainConfig& cfg);

}  // namespace keec
