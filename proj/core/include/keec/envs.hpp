#pragma once

#include <string>

#include "keec/numkit.hpp"
#include "keec/rng.hpp"

namespace keec {

enum class EnvName { pendulum, lorenz63, wave };

std::string to_string(EnvName name);
EnvName env_from_string(const std::string& name);  // ConfigError on unknown

// Immutable description of a ground-truth environment: dimensions, action box,
// goal state, quadratic cost matrices, and physical parameters. Construct via
// EnvSpec::make and adjust fields before validate() if overrides are needed.
struct EnvSpec {
    EnvName name = EnvName::pendulum;
    int m = 0;            // state dimension
    int d = 0;            // action dimension
    double dt = 0.0;      // integration step, seconds
    Vector action_low, action_high;
    Vector goal;          // s*
    Matrix R1;            // d x d SPD action cost
    Matrix R2;            // m x m SPD state cost
    int horizon = 0;      // evaluation episode length, steps

    // pendulum
    double mass = 1.0, length = 1.0, gravity = 10.0, speed_limit = 8.0;
    // lorenz63
    double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
    // wave
    double wave_c = 0.1, wave_dx = 0.02;
    int wave_points = 50;       // grid points; state is [u; psi], m = 2*points
    int n_a = 10;               // number of forcing supports
    double init_noise_std = 0.1;  // std of N(0, 1e-2) initial-state noise
    bool init_noise = true;       // wave only; off gives the exact sech profile

    static EnvSpec make(EnvName name);
    static EnvSpec make(const std::string& name);

    // Throws ConfigError on violated invariants (R1/R2 not SPD, empty action
    // box, dt <= 0, inconsistent dimensions).
    void validate() const;
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

// Continuous-time dynamics f(s) + B(s)a.
Vector vector_field(const EnvSpec& env, const Vector& s, const Vector& a);

// One classical RK4 step of env.dt with zero-order-hold action. The pendulum
// state is wrapped/clamped after the step. Throws NumericError when the state
// leaves the finite range (Lorenz under extreme forcing).
Vector step_rk4(const EnvSpec& env, const Vector& s, const Vector& a);

// r(s, a) = -(||s - s*||^2_R2 + ||a||^2_R1); always <= 0.
double reward(const EnvSpec& env, const Vector& s, const Vector& a);

// Draws an initial state from the evaluation region (Table-style settings:
// pendulum bottom region, Lorenz start box, wave sech profile + noise).
Vector sample_initial(const EnvSpec& env, Rng& rng);

// Componentwise clip into the action box.
Vector clip_action(const EnvSpec& env, Vector a);

// Discrete energy of the wave field: sum_i (psi_i^2 + c^2 ((u_{i+1}-u_i)/dx)^2) dx.
// Exactly conserved by the semi-discrete system when unforced; RK4 drift is
// ~1e-4 relative over an episode. Only valid for the wave env.
double wave_energy(const EnvSpec& env, const Vector& s);

}  // namespace keec
