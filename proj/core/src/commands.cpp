#include "keec/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <utility>
#include <vector>

#include "keec/bundle.hpp"
#include "keec/data.hpp"
#include "keec/errors.hpp"
#include "keec/koopman.hpp"
#include "keec/valuectl.hpp"

namespace keec {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        f << text;
        if (!f) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

// Loads the dataset named by the config and checks it matches the configured
// environment; shared by the training commands.
std::shared_ptr<const TrajectorySet> load_dataset(const RunConfig& cfg) {
    if (cfg.data_path.empty())
        throw ConfigError("no dataset path: set data_path in the config");
    auto ts = std::make_shared<TrajectorySet>(load_trajectories(cfg.data_path));
    if (ts->env_name != cfg.env)
        throw ConfigError("dataset '" + cfg.data_path + "' was generated for env '" +
                          ts->env_name + "', config says '" + cfg.env + "'");
    return ts;
}

EmbedTrainConfig embed_config(const RunConfig& cfg, const EnvSpec& env) {
    EmbedTrainConfig ec;
    ec.epochs = cfg.epochs;
    ec.batch = cfg.batch;
    ec.lr = cfg.lr;
    ec.lr_decay = cfg.lr_decay;
    ec.lambda_met = cfg.lambda_met;
    ec.eps = cfg.eps;
    ec.n = cfg.latent_n;
    ec.dt = env.dt;
    ec.seed = cfg.seed;
    ec.ema_momentum = cfg.ema;
    ec.normalize = cfg.normalize;
    return ec;
}

ValueTrainConfig value_config(const RunConfig& cfg) {
    ValueTrainConfig vc;
    vc.episodes = cfg.episodes;
    vc.horizon = cfg.horizon;
    vc.updates_per_episode = cfg.updates_per_episode;
    vc.batch = cfg.value_batch;
    vc.buffer_capacity = cfg.buffer_capacity;
    vc.gamma = cfg.gamma;
    vc.lr = cfg.value_lr;
    vc.lr_decay = cfg.value_lr_decay;
    vc.out_scale = cfg.out_scale;
    vc.target_every = cfg.target_every;
    vc.explore_noise = cfg.explore_noise;
    vc.variant = cfg.value_variant == "quadratic" ? ValueVariant::quadratic : ValueVariant::mlp;
    vc.seed = cfg.seed;
    return vc;
}

struct EvalTiming {
    double wall_ms = 0.0;
    long steps = 0;
};

// Runs the closed-loop evaluation episodes for a complete in-memory bundle.
EvalReport evaluate_bundle(const Bundle& b, const RunConfig& cfg, const EnvSpec& env,
                           EvalTiming* timing) {
    if (cfg.eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
    const int horizon = cfg.eval_horizon > 0 ? cfg.eval_horizon : env.horizon;
    PolicyConfig pcfg = make_policy_config(env, b.vm.gamma);
    pcfg.use_quadratic = cfg.use_quadratic_policy;
    pcfg.corrected_quadratic = cfg.corrected_quadratic;

    EvalReport report;
    report.env_name = to_string(env.name);
    report.config_hash = config_hash(cfg);
    for (int i = 0; i < cfg.eval_episodes; ++i) {
        Rng rng = Rng::split(cfg.seed, "eval-episode", static_cast<std::uint64_t>(i));
        const Vector s0 = sample_initial(env, rng);
        const auto t0 = std::chrono::steady_clock::now();
        ControlResult res = run_control(env, b.model, b.ops, b.vm, pcfg, s0, horizon);
        const auto t1 = std::chrono::steady_clock::now();
        if (timing) {
            timing->wall_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
            timing->steps += res.actions.rows();
        }
        report.rewards.push_back(res.episodic);
        report.lengths.push_back(static_cast<int>(res.actions.rows()));
        if (res.diverged) ++report.diverged;
    }
    report.finalize();
    if (timing && timing->steps > 0)
        report.wall_ms_per_step = timing->wall_ms / static_cast<double>(timing->steps);
    return report;
}

}  // namespace

void cmd_generate(const RunConfig& cfg, const std::string& out_path) {
    if (out_path.empty())
        throw ConfigError("generate: no output path (use --out or set data_path)");
    const EnvSpec env = make_env(cfg);
    GenLog log;
    TrajectorySet ts =
        generate_random_trajectories(env, cfg.traj_count, cfg.traj_steps, cfg.seed, &log);
    save(out_path, ts);
    std::cout << "generate: " << ts.count() << " trajectories x " << ts.steps << " steps ("
              << ts.transition_count() << " transitions) of " << ts.env_name << " -> "
              << out_path;
    if (log.regenerated > 0) std::cout << " [" << log.regenerated << " rollouts regenerated]";
    std::cout << "\n";
}

void cmd_train_embedding(const RunConfig& cfg, const std::string& bundle_path) {
    if (bundle_path.empty())
        throw ConfigError("train-embedding: no bundle path (use --bundle or set bundle_path)");
    const EnvSpec env = make_env(cfg);
    auto ts = load_dataset(cfg);
    WindowDataset wd = slice_windows(ts, cfg.window_l, cfg.seed);

    EmbedTrainResult res = train_embedding(wd, embed_config(cfg, env));

    Bundle b;
    b.env_name = cfg.env;
    b.model = res.model;
    b.ops = res.ops;
    save_bundle(bundle_path, b);

    std::ostringstream csv;
    csv << "epoch,total,forward,isometry\n";
    for (std::size_t e = 0; e < res.epoch_log.size(); ++e)
        csv << e << "," << fmt(res.epoch_log[e].value) << "," << fmt(res.epoch_log[e].fwd)
            << "," << fmt(res.epoch_log[e].met) << "\n";
    write_text_atomic(bundle_path + ".embed_loss.csv", csv.str());

    std::cout << "train-embedding: " << res.epoch_log.size() << " epochs on " << wd.size()
              << " windows, final loss " << fmt(res.epoch_log.back().value) << " -> "
              << bundle_path << "\n";
}

void cmd_train_value(const RunConfig& cfg, const std::string& bundle_path) {
    if (bundle_path.empty())
        throw ConfigError("train-value: no bundle path (use --bundle or set bundle_path)");
    Bundle b = load_bundle(bundle_path);
    if (b.env_name != cfg.env)
        throw ConfigError("bundle '" + bundle_path + "' is for env '" + b.env_name +
                          "', config says '" + cfg.env + "'");
    const EnvSpec env = make_env(cfg);

    ValueTrainResult res = train_value(b.model, b.ops, env, value_config(cfg));
    b.has_value = true;
    b.vm = res.vm;
    save_bundle(bundle_path, b);

    std::ostringstream csv;
    csv << "episode,td_loss\n";
    for (std::size_t e = 0; e < res.episode_loss.size(); ++e)
        csv << e << "," << fmt(res.episode_loss[e]) << "\n";
    write_text_atomic(bundle_path + ".value_loss.csv", csv.str());

    std::cout << "train-value: " << res.episode_loss.size() << " episodes, final TD loss "
              << fmt(res.episode_loss.back());
    if (res.truncated > 0) std::cout << " [" << res.truncated << " rollouts truncated]";
    std::cout << " -> " << bundle_path << "\n";
}

EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& bundle_path,
                        const std::string& out_path) {
    if (bundle_path.empty())
        throw ConfigError("evaluate: no bundle path (use --bundle or set bundle_path)");
    if (out_path.empty())
        throw ConfigError("evaluate: no output path (use --out or set out_path)");
    Bundle b = load_bundle_with_value(bundle_path);
    if (b.env_name != cfg.env)
        throw ConfigError("bundle '" + bundle_path + "' is for env '" + b.env_name +
                          "', config says '" + cfg.env + "'");
    const EnvSpec env = make_env(cfg);

    EvalTiming timing;
    EvalReport report = evaluate_bundle(b, cfg, env, &timing);
    write_report_csv(out_path + ".csv", report);
    write_text_atomic(out_path + ".summary.txt", summary_text(report));
    std::cout << summary_text(report);
    return report;
}

void cmd_ablate(const RunConfig& cfg, const std::string& out_csv) {
    if (out_csv.empty())
        throw ConfigError("ablate: no output path (use --out or set out_path)");
    const EnvSpec env = make_env(cfg);
    auto ts = load_dataset(cfg);
    WindowDataset wd = slice_windows(ts, cfg.window_l, cfg.seed);

    std::vector<std::pair<double, int>> settings;
    auto add_setting = [&settings](double lam, int n) {
        for (const auto& s : settings)
            if (s.first == lam && s.second == n) {
                std::cerr << "ablate: duplicate setting (lambda_met=" << lam << ", n=" << n
                          << ") skipped\n";
                return;
            }
        settings.emplace_back(lam, n);
    };
    for (double lam : {0.0, 0.1, 0.2, 0.3, 0.5}) add_setting(lam, cfg.latent_n);
    for (int n : {cfg.latent_n / 2, cfg.latent_n, cfg.latent_n * 2})
        add_setting(cfg.lambda_met, n);

    std::ostringstream csv;
    csv << "lambda_met,latent_n,embed_loss,eval_mean,eval_std,status\n";
    for (const auto& [lam, n] : settings) {
        RunConfig sub = cfg;
        sub.lambda_met = lam;
        sub.latent_n = n;
        std::cout << "ablate: lambda_met=" << fmt(lam) << " n=" << n << std::flush;
        try {
            EmbedTrainConfig ec = embed_config(sub, env);
            EmbedTrainResult er = train_embedding(wd, ec);
            Bundle b;
            b.env_name = sub.env;
            b.model = er.model;
            b.ops = er.ops;
            ValueTrainResult vr = train_value(b.model, b.ops, env, value_config(sub));
            b.has_value = true;
            b.vm = vr.vm;
            EvalReport report = evaluate_bundle(b, sub, env, nullptr);
            csv << fmt(lam) << "," << n << "," << fmt(er.epoch_log.back().value) << ","
                << fmt(report.mean) << "," << fmt(report.stddev) << ",ok\n";
            std::cout << " mean " << fmt(report.mean) << "\n";
        } catch (const ConfigError&) {
            csv << fmt(lam) << "," << n << ",nan,nan,nan,error:ConfigError\n";
            std::cout << " failed (ConfigError)\n";
        } catch (const NumericError&) {
            csv << fmt(lam) << "," << n << ",nan,nan,nan,error:NumericError\n";
            std::cout << " failed (NumericError)\n";
        } catch (const Error&) {
            csv << fmt(lam) << "," << n << ",nan,nan,nan,error:Error\n";
            std::cout << " failed\n";
        }
    }
    write_text_atomic(out_csv, csv.str());
    std::cout << "ablate: " << settings.size() << " settings -> " << out_csv << "\n";
}

int cli_main(int argc, char** argv) {
    CLI::App app{"keec: control of unknown dynamics via equivariant latent embeddings"};
    app.require_subcommand(1);

    std::string config_path, out_path, bundle_path;
    long long seed_flag = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration file")->required();
        sub->add_option("--seed", seed_flag, "override the config seed");
        sub->add_option("--out", out_path, "output path");
        sub->add_option("--bundle", bundle_path, "bundle path");
    };
    CLI::App* gen = app.add_subcommand("generate", "roll out a random-action dataset");
    CLI::App* temb = app.add_subcommand("train-embedding", "learn the embedding and operators");
    CLI::App* tval = app.add_subcommand("train-value", "learn the value head for a bundle");
    CLI::App* eval = app.add_subcommand("evaluate", "closed-loop evaluation of a bundle");
    CLI::App* abl = app.add_subcommand("ablate", "lambda_met and latent-n sweeps");
    for (CLI::App* sub : {gen, temb, tval, eval, abl}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = parse_config(config_path);
        if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
        const std::string out = !out_path.empty() ? out_path : cfg.out_path;
        const std::string bundle = !bundle_path.empty() ? bundle_path : cfg.bundle_path;

        if (gen->parsed()) {
            // The dataset is the artifact here: an explicit --out wins,
            // otherwise write where the training commands will look for it.
            cmd_generate(cfg, !out_path.empty() ? out_path : cfg.data_path);
        } else if (temb->parsed()) {
            cmd_train_embedding(cfg, bundle);
        } else if (tval->parsed()) {
            cmd_train_value(cfg, bundle);
        } else if (eval->parsed()) {
            cmd_evaluate(cfg, bundle, out);
        } else if (abl->parsed()) {
            cmd_ablate(cfg, out);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const StateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const RankError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace keec
