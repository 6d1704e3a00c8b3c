#include "keec/nn.hpp"

#include <cmath>

#include "keec/errors.hpp"

namespace keec {

namespace {

Matrix apply_act(Act act, const Matrix& z) {
    switch (act) {
        case Act::tanh_fn: return z.array().tanh();
        case Act::relu: return z.cwiseMax(0.0);
        case Act::none: return z;
    }
    throw ConfigError("unknown activation");
}

// Derivative of the activation expressed through pre/post values.
Matrix act_grad(Act act, const Matrix& pre, const Matrix& post) {
    switch (act) {
        case Act::tanh_fn: return 1.0 - post.array().square();
        case Act::relu: return (pre.array() > 0.0).cast<double>();
        case Act::none: return Matrix::Ones(pre.rows(), pre.cols());
    }
    throw ConfigError("unknown activation");
}

}  // namespace

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size()) + l.b.size();
    return n;
}

MlpParams init_params(const std::vector<int>& dims, const std::vector<Act>& acts, Rng& rng) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw ConfigError("init_params: need dims n+1 and acts n for n layers");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l], fan_out = dims[l + 1];
        if (fan_in <= 0 || fan_out <= 0) throw ConfigError("init_params: non-positive dim");
        const double r = std::sqrt(6.0 / (fan_in + fan_out));
        Layer layer;
        layer.W.resize(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) layer.W(i, j) = rng.uniform(-r, r);
        layer.b = Vector::Zero(fan_out);
        layer.act = acts[l];
        p.layers.push_back(std::move(layer));
    }
    return p;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& x, ForwardCache* cache) {
    if (params.layers.empty()) throw ConfigError("mlp_forward: empty network");
    if (x.cols() != params.in_dim())
        throw DimensionError("mlp_forward: input has " + std::to_string(x.cols()) +
                             " columns, network expects " + std::to_string(params.in_dim()));
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
    }
    Matrix h = x;
    for (const auto& layer : params.layers) {
        Matrix pre = (h * layer.W.transpose()).rowwise() + layer.b.transpose();
        Matrix post = apply_act(layer.act, pre);
        if (cache) {
            cache->pre.push_back(pre);
            cache->post.push_back(post);
        }
        h = std::move(post);
    }
    return h;
}

Matrix mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& dy,
                    MlpGrads* grads) {
    const std::size_t nl = params.layers.size();
    if (cache.pre.size() != nl || cache.post.size() != nl)
        throw DimensionError("mlp_backward: cache does not match network depth");
    if (dy.rows() != cache.input.rows() || dy.cols() != params.out_dim())
        throw DimensionError("mlp_backward: dY shape mismatch");
    if (grads && grads->layers.size() != nl)
        throw DimensionError("mlp_backward: grads shape mismatch");

    Matrix delta = dy;
    for (std::size_t l = nl; l-- > 0;) {
        const auto& layer = params.layers[l];
        delta = delta.cwiseProduct(act_grad(layer.act, cache.pre[l], cache.post[l]));
        const Matrix& in = (l == 0) ? cache.input : cache.post[l - 1];
        if (grads) {
            grads->layers[l].dW += delta.transpose() * in;
            grads->layers[l].db += delta.colwise().sum().transpose();
        }
        if (l > 0) delta = delta * layer.W;
    }
    return delta * params.layers[0].W;
}

MlpGrads zero_grads_like(const MlpParams& params) {
    MlpGrads g;
    for (const auto& l : params.layers) {
        g.layers.push_back({Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size())});
    }
    return g;
}

void axpy_grads(MlpGrads& dst, const MlpGrads& src, double scale) {
    if (dst.layers.size() != src.layers.size())
        throw DimensionError("axpy_grads: layer count mismatch");
    for (std::size_t l = 0; l < dst.layers.size(); ++l) {
        dst.layers[l].dW += scale * src.layers[l].dW;
        dst.layers[l].db += scale * src.layers[l].db;
    }
}

AdamState AdamState::like(const MlpParams& params) {
    AdamState s;
    for (const auto& l : params.layers) {
        s.slots.push_back({Matrix::Zero(l.W.rows(), l.W.cols()),
                           Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size()),
                           Vector::Zero(l.b.size())});
    }
    return s;
}

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state, double lr) {
    if (state.slots.size() != params.layers.size() || grads.layers.size() != params.layers.size())
        throw DimensionError("adam_step: shape mismatch");
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Matrix& gw = grads.layers[l].dW;
        const Vector& gb = grads.layers[l].db;
        if (!gw.allFinite() || !gb.allFinite())
            throw NumericError("adam_step: non-finite gradient at layer " + std::to_string(l));
        auto& slot = state.slots[l];
        slot.m_w = state.beta1 * slot.m_w + (1.0 - state.beta1) * gw;
        slot.v_w = state.beta2 * slot.v_w + (1.0 - state.beta2) * gw.cwiseProduct(gw);
        slot.m_b = state.beta1 * slot.m_b + (1.0 - state.beta1) * gb;
        slot.v_b = state.beta2 * slot.v_b + (1.0 - state.beta2) * gb.cwiseProduct(gb);
        params.layers[l].W -=
            lr * (slot.m_w / c1).cwiseQuotient((slot.v_w / c2).cwiseSqrt() +
                                               Matrix::Constant(gw.rows(), gw.cols(), state.eps));
        params.layers[l].b -=
            lr * (slot.m_b / c1).cwiseQuotient((slot.v_b / c2).cwiseSqrt() +
                                               Vector::Constant(gb.size(), state.eps));
    }
}

}  // namespace keec
