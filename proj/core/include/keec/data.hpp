#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "keec/envs.hpp"
#include "keec/numkit.hpp"

namespace keec {

// A batch of rollouts collected under i.i.d. uniform random actions.
struct TrajectorySet {
    std::string env_name;
    std::uint64_t seed = 0;
    int steps = 0, m = 0, d = 0;
    std::vector<Matrix> states;   // each (steps+1) x m
    std::vector<Matrix> actions;  // each steps x d
    std::vector<Vector> rewards;  // each steps

    std::size_t count() const { return states.size(); }
    std::size_t transition_count() const { return count() * static_cast<std::size_t>(steps); }
};

struct GenLog {
    int regenerated = 0;  // trajectories that diverged and were redrawn
};

// Rolls out `count` trajectories of `steps` env steps each. Initial states
// come from the data-collection region (the evaluation region, widened for
// the pendulum to the full circle); actions are uniform over the action box.
// Each trajectory uses the derived stream (seed, "traj", j); a diverged
// rollout is regenerated from (seed, "traj-retry", ...) and counted in log.
TrajectorySet generate_random_trajectories(const EnvSpec& env, int count, int steps,
                                           std::uint64_t seed, GenLog* log = nullptr);

// A window is L consecutive transitions = L+1 states + L actions, referenced
// by (trajectory, start offset) into the shared source set.
struct WindowRef {
    std::uint32_t traj = 0, start = 0;
};

struct WindowDataset {
    std::shared_ptr<const TrajectorySet> src;
    int L = 0;
    std::uint64_t shuffle_seed = 0;
    std::vector<WindowRef> order;

    std::size_t size() const { return order.size(); }
};

// All stride-1 windows of L transitions, shuffled deterministically by
// (shuffle_seed, "window-shuffle"). Trajectories shorter than L transitions
// contribute nothing.
WindowDataset slice_windows(std::shared_ptr<const TrajectorySet> src, int L,
                            std::uint64_t shuffle_seed);

// KEECDAT1 binary format; round-trips bit-exactly.
void save(const std::string& path, const TrajectorySet& ts);
TrajectorySet load_trajectories(const std::string& path);

// KEECWIN1: the source trajectory payload plus (L, shuffle seed, order).
void save(const std::string& path, const WindowDataset& wd);
WindowDataset load_windows(const std::string& path);

}  // namespace keec
