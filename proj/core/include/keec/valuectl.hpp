#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "keec/envs.hpp"
#include "keec/koopman.hpp"
#include "keec/nn.hpp"
#include "keec/numkit.hpp"
#include "keec/rng.hpp"

namespace keec {

enum class ValueVariant { mlp, quadratic };

// Latent value function. The mlp variant is out_scale * net(z) (the scale
// keeps network outputs O(1) when discounted returns are large). The
// quadratic variant is -(z - z*)^T W(z) (z - z*) + bias with
// W(z) = H(z)^T H(z) >= 0, where the net emits H(z) row-major as n^2 outputs;
// its scale lives in the net weights, so out_scale is ignored there.
struct ValueModel {
    ValueVariant variant = ValueVariant::mlp;
    MlpParams net;     // mlp: n -> n -> n/2 -> n/2 -> 1; quadratic: n -> n*n
    Vector z_star;     // quadratic center (encode of the goal state)
    double bias = 0.0; // quadratic constant b
    double out_scale = 1.0;
    double gamma = 0.99;
    int n = 0;
};

// Fresh model with the standard architecture for latent dimension n
// (mlp: relu, relu, relu, linear; quadratic: one linear layer).
ValueModel make_value_model(int n, ValueVariant variant, double gamma, double out_scale,
                            Rng& rng);

double value(const ValueModel& vm, const Vector& z);

// Exact input gradient: reverse mode through the net, plus the closed-form
// quadratic terms (including the W-net input Jacobian) for that variant.
Vector value_grad(const ValueModel& vm, const Vector& z);

struct PolicyConfig {
    double gamma = 0.99;
    Matrix r1;  // d x d SPD action cost
    double dt = 0.0;
    Vector action_low, action_high;
    bool use_quadratic = false;        // route through quadratic_greedy_action
    bool corrected_quadratic = false;  // (z - z*)^T W instead of z^T W (see below)
};

// Policy settings taken from the environment (R1, action box, dt). Throws
// ConfigError if R1 is not SPD.
PolicyConfig make_policy_config(const EnvSpec& env, double gamma);

// Analytic greedy maximizer of the instantaneous HJB trade-off with the
// quadratic action cost -a^T R1 a dt:
//   a* = (gamma/2) R1^{-1} (U z)^T grad V(z),   clipped to the action box.
Vector greedy_action(const LatentOperators& ops, const ValueModel& vm, const Vector& z,
                     const PolicyConfig& cfg);

// Closed form for the quadratic variant:
//   a* = -gamma R1^{-1} [z^T W(z) + (gamma/2) q^T (dW/dz) q] U(z),  q = z - z*,
// clipped to the box. The z^T W factor is kept as published even though the
// value definition centers on q; cfg.corrected_quadratic swaps in q^T W. Both
// modes agree with greedy_action for constant W when z* = 0.
Vector quadratic_greedy_action(const LatentOperators& ops, const ValueModel& vm,
                               const Vector& z, const PolicyConfig& cfg);

// Dispatches on cfg.use_quadratic.
Vector policy_action(const LatentOperators& ops, const ValueModel& vm, const Vector& z,
                     const PolicyConfig& cfg);

struct Transition {
    Vector z, a, z_next;
    double r = 0.0;
};

// Fixed-capacity FIFO ring: once full, each push overwrites the oldest entry.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return items_[i]; }

  private:
    std::vector<Transition> items_;
    std::size_t capacity_ = 0;
    std::size_t next_ = 0;
};

// Optimizer state for one value model (net slots plus the quadratic bias).
struct ValueOpt {
    AdamState net;
    double m_bias = 0.0, v_bias = 0.0;

    static ValueOpt like(const ValueModel& vm);
};

// One TD(0) minibatch step: sample `batch` transitions uniformly with
// replacement, minimize the mean squared residual (r + gamma V_target(z') -
// V(z))^2 with the target model frozen, Adam-update vm. Returns the
// minibatch loss before the update.
double td_update(ValueModel& vm, const ValueModel& target, const ReplayBuffer& buf, int batch,
                 double lr, ValueOpt& opt, Rng& rng);

struct ValueTrainConfig {
    int episodes = 200;
    int horizon = 100;            // latent rollout length
    int updates_per_episode = 50;
    int batch = 256;
    std::size_t buffer_capacity = 100000;
    double gamma = 0.99;
    double lr = 1e-3;
    double lr_decay = 1.0;        // multiplied per episode
    double out_scale = 1.0;
    int target_every = 100;       // gradient steps between target snapshots
    double explore_noise = 0.0;   // uniform [-e, e] added to actions, then re-clipped
    ValueVariant variant = ValueVariant::mlp;
    std::uint64_t seed = 0;
    std::function<void(int, double)> on_episode;  // (episode, mean TD loss)
};

struct ValueTrainResult {
    ValueModel vm;
    std::vector<double> episode_loss;
    int truncated = 0;  // episodes cut short by a non-finite latent state
};

// Model-based value learning: episodes roll out entirely in latent space
// (greedy actions, predict_flow transitions, rewards on decoded states) into
// the replay buffer; TD(0) minibatches run after each episode.
ValueTrainResult train_value(const EmbeddingModel& model, const LatentOperators& ops,
                             const EnvSpec& env, const ValueTrainConfig& cfg);

struct ControlResult {
    Matrix states;   // (T+1) x m, T = executed steps
    Matrix actions;  // T x d
    Vector rewards;  // length T
    double episodic = 0.0;
    bool diverged = false;
};

// Closed loop on the true environment: encode the observed state, act
// greedily, integrate with RK4, accumulate the undiscounted episodic reward.
// Divergence stops the episode, which is scored as-is.
ControlResult run_control(const EnvSpec& env, const EmbeddingModel& model,
                          const LatentOperators& ops, const ValueModel& vm,
                          const PolicyConfig& cfg, const Vector& s0, int t_max);

}  // namespace keec
