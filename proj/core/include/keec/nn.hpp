#pragma once

#include <vector>

#include "keec/numkit.hpp"
#include "keec/rng.hpp"

namespace keec {

enum class Act { tanh_fn, relu, none };

// One affine layer: Y = act(X W^T + 1 b^T), W is out x in.
struct Layer {
    Matrix W;
    Vector b;
    Act act = Act::none;
};

struct MlpParams {
    std::vector<Layer> layers;

    int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
    int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
    std::size_t param_count() const;
};

// Pre- and post-activation values of one forward pass; consumed by
// mlp_backward, which needs them for the exact chain rule.
struct ForwardCache {
    Matrix input;               // batch x in
    std::vector<Matrix> pre;    // batch x out_l, before activation
    std::vector<Matrix> post;   // batch x out_l, after activation
};

struct LayerGrads {
    Matrix dW;
    Vector db;
};

struct MlpGrads {
    std::vector<LayerGrads> layers;
};

// Glorot-uniform weights (+/- sqrt(6/(fan_in+fan_out))), zero biases. Draw
// order is row-major per layer, front to back — fixed so that a seed pins the
// parameters bit-for-bit.
MlpParams init_params(const std::vector<int>& dims, const std::vector<Act>& acts, Rng& rng);

// Rows of X are samples. If cache is given it is filled for backprop.
Matrix mlp_forward(const MlpParams& params, const Matrix& x, ForwardCache* cache = nullptr);

// Reverse-mode gradients of sum_ij dY_ij * Y_ij. Returns dX; parameter
// gradients are accumulated into *grads when given (grads must be zeroed or
// shaped by zero_grads_like first).
Matrix mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& dy,
                    MlpGrads* grads = nullptr);

MlpGrads zero_grads_like(const MlpParams& params);

// dst += scale * src, layer by layer.
void axpy_grads(MlpGrads& dst, const MlpGrads& src, double scale);

struct AdamState {
    struct Slot {
        Matrix m_w, v_w;
        Vector m_b, v_b;
    };
    std::vector<Slot> slots;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState like(const MlpParams& params);
};

// Standard Adam with bias correction. The learning-rate schedule is owned by
// the caller. Throws NumericError on non-finite gradients.
void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state, double lr);

}  // namespace keec
