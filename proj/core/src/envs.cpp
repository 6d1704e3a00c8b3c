#include "keec/envs.hpp"

#include <cmath>
#include <numbers>

#include "keec/errors.hpp"

namespace keec {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::string to_string(EnvName name) {
    switch (name) {
        case EnvName::pendulum: return "pendulum";
        case EnvName::lorenz63: return "lorenz63";
        case EnvName::wave: return "wave";
    }
    throw ConfigError("unknown EnvName enum value");
}

EnvName env_from_string(const std::string& name) {
    if (name == "pendulum") return EnvName::pendulum;
    if (name == "lorenz63") return EnvName::lorenz63;
    if (name == "wave") return EnvName::wave;
    throw ConfigError("unknown environment '" + name +
                      "' (expected pendulum, lorenz63, or wave)");
}

EnvSpec EnvSpec::make(EnvName name) {
    EnvSpec e;
    e.name = name;
    switch (name) {
        case EnvName::pendulum: {
            e.m = 2;
            e.d = 1;
            e.dt = 0.05;
            e.horizon = 100;
            e.action_low = Vector::Constant(1, -2.0);
            e.action_high = Vector::Constant(1, 2.0);
            e.goal = Vector::Zero(2);
            e.R1 = Matrix::Constant(1, 1, 0.001);
            e.R2 = Matrix::Zero(2, 2);
            e.R2(0, 0) = 1.0;
            e.R2(1, 1) = 0.1;
            break;
        }
        case EnvName::lorenz63: {
            e.m = 3;
            e.d = 3;
            e.dt = 0.1;
            e.horizon = 500;
            e.action_low = Vector::Constant(3, -3.0);
            e.action_high = Vector::Constant(3, 3.0);
            e.goal = Vector(3);
            e.goal << -8.0, -8.0, 27.0;
            e.R1 = 0.01 * Matrix::Identity(3, 3);
            e.R2 = Matrix::Identity(3, 3);
            break;
        }
        case EnvName::wave: {
            e.m = 2 * e.wave_points;
            e.d = e.n_a;
            e.dt = 0.1;
            e.horizon = 200;
            e.action_low = Vector::Constant(e.d, -1.0);
            e.action_high = Vector::Constant(e.d, 1.0);
            e.goal = Vector::Zero(e.m);
            e.R1 = 0.01 * Matrix::Identity(e.d, e.d);
            e.R2 = e.wave_dx * Matrix::Identity(e.m, e.m);
            break;
        }
    }
    return e;
}

EnvSpec EnvSpec::make(const std::string& name) { return make(env_from_string(name)); }

void EnvSpec::validate() const {
    if (m <= 0 || d < 0) throw ConfigError("EnvSpec: non-positive dimensions");
    if (dt <= 0.0 || !std::isfinite(dt)) throw ConfigError("EnvSpec: dt must be > 0");
    if (action_low.size() != d || action_high.size() != d)
        throw ConfigError("EnvSpec: action box size must equal d");
    for (int i = 0; i < d; ++i) {
        if (!(action_low(i) < action_high(i)))
            throw ConfigError("EnvSpec: action_low must be < action_high elementwise");
    }
    if (goal.size() != m) throw ConfigError("EnvSpec: goal dimension must equal m");
    auto check_spd = [](const Matrix& a, const char* what) {
        if (a.rows() != a.cols()) throw ConfigError(std::string(what) + " must be square");
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw ConfigError(std::string(what) + " must be symmetric");
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success)
            throw ConfigError(std::string(what) + " must be positive definite");
    };
    check_spd(R1, "EnvSpec: R1");
    check_spd(R2, "EnvSpec: R2");
    if (R1.rows() != d) throw ConfigError("EnvSpec: R1 must be d x d");
    if (R2.rows() != m) throw ConfigError("EnvSpec: R2 must be m x m");
    if (name == EnvName::wave) {
        if (wave_points <= 0 || n_a <= 0 || wave_points % n_a != 0)
            throw ConfigError("EnvSpec: wave_points must be a positive multiple of n_a");
        if (m != 2 * wave_points) throw ConfigError("EnvSpec: wave m must be 2*wave_points");
    }
}

double wrap_angle(double theta) {
    double w = std::fmod(theta + kPi, 2.0 * kPi);
    if (w <= 0.0) w += 2.0 * kPi;
    return w - kPi;
}

Vector vector_field(const EnvSpec& env, const Vector& s, const Vector& a) {
    if (s.size() != env.m || a.size() != env.d)
        throw DimensionError("vector_field: state/action dimension mismatch");
    switch (env.name) {
        case EnvName::pendulum: {
            const double theta = s(0), thetadot = s(1);
            Vector ds(2);
            ds(0) = thetadot;
            ds(1) = (3.0 * env.gravity / (2.0 * env.length)) * std::sin(theta) +
                    (3.0 / (env.mass * env.length * env.length)) * a(0);
            return ds;
        }
        case EnvName::lorenz63: {
            const double x = s(0), y = s(1), z = s(2);
            Vector ds(3);
            ds(0) = env.sigma * (y - x) + a(0);
            ds(1) = x * (env.rho - z) - y + a(1);
            ds(2) = x * y - env.beta * z + a(2);
            return ds;
        }
        case EnvName::wave: {
            const int n = env.wave_points;
            const double c2 = env.wave_c * env.wave_c;
            const double dx2 = env.wave_dx * env.wave_dx;
            const int per_support = n / env.n_a;
            Vector ds(env.m);
            for (int i = 0; i < n; ++i) {
                ds(i) = s(n + i);  // u_dot = psi
                const int ip = (i + 1) % n, im = (i + n - 1) % n;
                double lap = (s(ip) - 2.0 * s(i) + s(im)) / dx2;
                ds(n + i) = c2 * lap + a(i / per_support);
            }
            return ds;
        }
    }
    throw ConfigError("vector_field: unknown env");
}

Vector step_rk4(const EnvSpec& env, const Vector& s, const Vector& a) {
    const double h = env.dt;
    Vector k1 = vector_field(env, s, a);
    Vector k2 = vector_field(env, s + 0.5 * h * k1, a);
    Vector k3 = vector_field(env, s + 0.5 * h * k2, a);
    Vector k4 = vector_field(env, s + h * k3, a);
    Vector out = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.allFinite())
        throw NumericError("step_rk4: state diverged (" + to_string(env.name) + ")");
    if (env.name == EnvName::pendulum) {
        out(0) = wrap_angle(out(0));
        out(1) = std::clamp(out(1), -env.speed_limit, env.speed_limit);
    }
    return out;
}

double reward(const EnvSpec& env, const Vector& s, const Vector& a) {
    Vector ds = s - env.goal;
    return -(ds.dot(env.R2 * ds) + a.dot(env.R1 * a));
}

Vector sample_initial(const EnvSpec& env, Rng& rng) {
    switch (env.name) {
        case EnvName::pendulum: {
            Vector s(2);
            s(0) = rng.uniform(-kPi, -2.9);
            s(1) = rng.uniform(-env.speed_limit, env.speed_limit);
            return s;
        }
        case EnvName::lorenz63: {
            Vector s(3);
            s(0) = rng.uniform(-2.0, 0.0);
            s(1) = rng.uniform(-18.0, -16.0);
            s(2) = rng.uniform(-21.0, -19.0);
            return s;
        }
        case EnvName::wave: {
            const int n = env.wave_points;
            Vector s = Vector::Zero(env.m);
            for (int i = 0; i < n; ++i) {
                double x = i * env.wave_dx;
                s(i) = 1.0 / std::cosh(10.0 * x - 5.0);
            }
            if (env.init_noise) {
                for (int i = 0; i < env.m; ++i) s(i) += env.init_noise_std * rng.normal();
            }
            return s;
        }
    }
    throw ConfigError("sample_initial: unknown env");
}

Vector clip_action(const EnvSpec& env, Vector a) {
    if (a.size() != env.d) throw DimensionError("clip_action: wrong action dimension");
    for (int i = 0; i < env.d; ++i)
        a(i) = std::clamp(a(i), env.action_low(i), env.action_high(i));
    return a;
}

double wave_energy(const EnvSpec& env, const Vector& s) {
    if (env.name != EnvName::wave) throw ConfigError("wave_energy: wave env only");
    const int n = env.wave_points;
    const double c2 = env.wave_c * env.wave_c;
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
        double du = (s((i + 1) % n) - s(i)) / env.wave_dx;
        e += (s(n + i) * s(n + i) + c2 * du * du) * env.wave_dx;
    }
    return e;
}

}  // namespace keec
