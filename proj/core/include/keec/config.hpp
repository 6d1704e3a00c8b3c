#pragma once

#include <cstdint>
#include <string>

#include "keec/envs.hpp"

namespace keec {

// Flat key = value run configuration. One struct covers every command; each
// command reads the subset it needs. Unknown or duplicate keys are rejected so
// a typo cannot silently fall back to a default.
struct RunConfig {
    // Environment selection and overrides (0 / 1.0 means "use the env default").
    std::string env = "pendulum";
    double dt = 0.0;            // integration step override
    double action_bound = 0.0;  // symmetric box override: [-b, b]^d
    double r1_scale = 1.0;      // multiplies the action cost matrix
    double r2_scale = 1.0;      // multiplies the state cost matrix

    // Dataset generation / windowing.
    int traj_count = 1000;
    int traj_steps = 50;
    int window_l = 8;

    // Embedding training.
    int epochs = 100;
    int batch = 128;
    double lr = 1e-3;
    double lr_decay = 0.99;
    double lambda_met = 0.3;
    int latent_n = 8;
    double eps = 1e-3;
    double ema = 0.99;
    bool normalize = true;

    // Value training.
    int episodes = 200;
    int horizon = 100;
    int updates_per_episode = 50;
    int value_batch = 256;
    int buffer_capacity = 100000;
    double gamma = 0.99;
    double value_lr = 1e-3;
    double value_lr_decay = 1.0;
    double out_scale = 1.0;
    int target_every = 100;
    double explore_noise = 0.0;
    std::string value_variant = "mlp";  // mlp | quadratic

    // Policy / evaluation.
    bool use_quadratic_policy = false;
    bool corrected_quadratic = false;
    int eval_episodes = 100;
    int eval_horizon = 0;  // 0 = the env's Table horizon

    // Seed and file locations.
    std::uint64_t seed = 0;
    std::string data_path;
    std::string bundle_path;
    std::string out_path;
};

// Parses `key = value` lines ('#' starts a comment, blank lines ignored).
// Throws ConfigError on unknown keys, duplicate keys, or unparsable values.
RunConfig parse_config_text(const std::string& text);

// Reads the file (IoError if missing) and parses it.
RunConfig parse_config(const std::string& path);

// Fixed-order dump of every setting except the three path fields; feeding it
// back through parse_config_text reproduces the config.
std::string canonical_config(const RunConfig& cfg);

// CRC32 of canonical_config: identifies the experiment (env, overrides,
// hyperparameters, seed) independent of where its files live.
std::uint32_t config_hash(const RunConfig& cfg);

// EnvSpec::make(cfg.env) with the dt / action box / cost-scale overrides
// applied, validated. Throws ConfigError on an unknown env name or an
// override that violates the env invariants.
EnvSpec make_env(const RunConfig& cfg);

}  // namespace keec
