#include "keec/data.hpp"

#include <numbers>

#include "keec/errors.hpp"
#include "keec/io.hpp"
#include "keec/rng.hpp"

namespace keec {

namespace {

Vector collection_initial(const EnvSpec& env, Rng& rng) {
    if (env.name == EnvName::pendulum) {
        // widened relative to the evaluation region: uniform over the circle
        Vector s(2);
        s(0) = rng.uniform(-std::numbers::pi, std::numbers::pi);
        s(1) = rng.uniform(-env.speed_limit, env.speed_limit);
        return s;
    }
    return sample_initial(env, rng);
}

Vector random_action(const EnvSpec& env, Rng& rng) {
    Vector a(env.d);
    for (int i = 0; i < env.d; ++i) a(i) = rng.uniform(env.action_low(i), env.action_high(i));
    return a;
}

// One rollout; throws NumericError if the env diverges.
void rollout(const EnvSpec& env, int steps, Rng& rng, Matrix& states, Matrix& actions,
             Vector& rewards) {
    states.resize(steps + 1, env.m);
    actions.resize(steps, env.d);
    rewards.resize(steps);
    Vector s = collection_initial(env, rng);
    states.row(0) = s.transpose();
    for (int t = 0; t < steps; ++t) {
        Vector a = random_action(env, rng);
        rewards(t) = reward(env, s, a);
        s = step_rk4(env, s, a);
        actions.row(t) = a.transpose();
        states.row(t + 1) = s.transpose();
    }
}

void write_trajectory_payload(io::Writer& w, const TrajectorySet& ts) {
    w.str(ts.env_name);
    w.u64(ts.count());
    w.u64(static_cast<std::uint64_t>(ts.steps));
    w.u64(static_cast<std::uint64_t>(ts.m));
    w.u64(static_cast<std::uint64_t>(ts.d));
    w.u64(ts.seed);
    for (std::size_t j = 0; j < ts.count(); ++j) {
        w.matrix(ts.states[j]);
        w.matrix(ts.actions[j]);
        w.vector(ts.rewards[j]);
    }
}

TrajectorySet read_trajectory_payload(io::Reader& r) {
    TrajectorySet ts;
    ts.env_name = r.str();
    const std::uint64_t count = r.u64();
    ts.steps = static_cast<int>(r.u64());
    ts.m = static_cast<int>(r.u64());
    ts.d = static_cast<int>(r.u64());
    ts.seed = r.u64();
    if (ts.steps < 0 || ts.m <= 0 || ts.d < 0)
        throw IoError("trajectory header has invalid dimensions");
    ts.states.reserve(count);
    ts.actions.reserve(count);
    ts.rewards.reserve(count);
    for (std::uint64_t j = 0; j < count; ++j) {
        ts.states.push_back(r.matrix(ts.steps + 1, ts.m));
        ts.actions.push_back(r.matrix(ts.steps, ts.d));
        ts.rewards.push_back(r.vector(ts.steps));
    }
    return ts;
}

}  // namespace

TrajectorySet generate_random_trajectories(const EnvSpec& env, int count, int steps,
                                           std::uint64_t seed, GenLog* log) {
    if (count < 0 || steps <= 0)
        throw ConfigError("generate_random_trajectories: count >= 0 and steps > 0 required");
    env.validate();
    TrajectorySet ts;
    ts.env_name = to_string(env.name);
    ts.seed = seed;
    ts.steps = steps;
    ts.m = env.m;
    ts.d = env.d;
    for (int j = 0; j < count; ++j) {
        Matrix states, actions;
        Vector rewards;
        bool done = false;
        for (int attempt = 0; attempt < 64 && !done; ++attempt) {
            Rng rng = (attempt == 0)
                          ? Rng::split(seed, "traj", static_cast<std::uint64_t>(j))
                          : Rng::split(seed, "traj-retry",
                                       (static_cast<std::uint64_t>(j) << 16) +
                                           static_cast<std::uint64_t>(attempt));
            try {
                rollout(env, steps, rng, states, actions, rewards);
                done = true;
            } catch (const NumericError&) {
                if (log) log->regenerated += 1;
            }
        }
        if (!done)
            throw NumericError("generate_random_trajectories: trajectory " +
                               std::to_string(j) + " diverged repeatedly");
        ts.states.push_back(std::move(states));
        ts.actions.push_back(std::move(actions));
        ts.rewards.push_back(std::move(rewards));
    }
    return ts;
}

WindowDataset slice_windows(std::shared_ptr<const TrajectorySet> src, int L,
                            std::uint64_t shuffle_seed) {
    if (!src) throw ConfigError("slice_windows: null source");
    if (L <= 0) throw ConfigError("slice_windows: L must be positive");
    WindowDataset wd;
    wd.src = std::move(src);
    wd.L = L;
    wd.shuffle_seed = shuffle_seed;
    for (std::uint32_t j = 0; j < wd.src->count(); ++j) {
        const int steps = wd.src->steps;
        // a window needs L transitions: starts 0 .. steps - L
        for (int start = 0; start + L <= steps; ++start)
            wd.order.push_back({j, static_cast<std::uint32_t>(start)});
    }
    Rng rng = Rng::split(shuffle_seed, "window-shuffle", 0);
    for (std::size_t i = wd.order.size(); i > 1; --i) {
        std::size_t k = rng.index(i);
        std::swap(wd.order[i - 1], wd.order[k]);
    }
    return wd;
}

void save(const std::string& path, const TrajectorySet& ts) {
    io::Writer w;
    w.raw("KEECDAT1", 8);
    write_trajectory_payload(w, ts);
    w.commit(path);
}

TrajectorySet load_trajectories(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("KEECDAT1");
    TrajectorySet ts = read_trajectory_payload(r);
    if (!r.at_end()) throw IoError("'" + path + "' has trailing bytes");
    return ts;
}

void save(const std::string& path, const WindowDataset& wd) {
    if (!wd.src) throw ConfigError("save: window dataset has no source");
    io::Writer w;
    w.raw("KEECWIN1", 8);
    write_trajectory_payload(w, *wd.src);
    w.u64(static_cast<std::uint64_t>(wd.L));
    w.u64(wd.shuffle_seed);
    w.u64(wd.order.size());
    for (const auto& ref : wd.order) {
        w.u64(ref.traj);
        w.u64(ref.start);
    }
    w.commit(path);
}

WindowDataset load_windows(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("KEECWIN1");
    auto src = std::make_shared<TrajectorySet>(read_trajectory_payload(r));
    WindowDataset wd;
    wd.L = static_cast<int>(r.u64());
    wd.shuffle_seed = r.u64();
    const std::uint64_t count = r.u64();
    wd.order.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        WindowRef ref;
        ref.traj = static_cast<std::uint32_t>(r.u64());
        ref.start = static_cast<std::uint32_t>(r.u64());
        if (ref.traj >= src->count() ||
            static_cast<int>(ref.start) + wd.L > src->steps)
            throw IoError("'" + path + "' window reference out of range");
        wd.order.push_back(ref);
    }
    if (!r.at_end()) throw IoError("'" + path + "' has trailing bytes");
    wd.src = std::move(src);
    return wd;
}

}  // namespace keec
