#pragma once

#include <string>

#include "keec/config.hpp"
#include "keec/report.hpp"

namespace keec {

// Command bodies, callable directly from tests. Each is a pure function of
// its config, seed, and input files; outputs are written atomically so a
// failed run leaves no partial artifact. Errors propagate as the exception
// taxonomy in errors.hpp; cli_main converts them into exit codes.

// Rolls out random trajectories for cfg.env and writes a KEECDAT1 file.
void cmd_generate(const RunConfig& cfg, const std::string& out_path);

// Trains the embedding + operators on cfg.data_path and writes the bundle,
// plus `<bundle>.embed_loss.csv` (epoch,total,forward,isometry).
void cmd_train_embedding(const RunConfig& cfg, const std::string& bundle_path);

// Adds a value head to an existing bundle (rewrites it in place), plus
// `<bundle>.value_loss.csv` (episode,td_loss).
void cmd_train_value(const RunConfig& cfg, const std::string& bundle_path);

// Closed-loop evaluation of a complete bundle over cfg.eval_episodes
// episodes; writes `<out>.csv` and `<out>.summary.txt`, returns the report.
EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& bundle_path,
                        const std::string& out_path);

// One-dimensional sweeps around the base config: lambda_met over
// {0, 0.1, 0.2, 0.3, 0.5} and latent n over {n/2, n, 2n}, full
// train-embedding + train-value + evaluate per setting. Writes one CSV row
// per distinct setting; failures are recorded in the row and the sweep
// continues.
void cmd_ablate(const RunConfig& cfg, const std::string& out_csv);

// Argument parsing + dispatch. Exit codes: 0 success, 2 bad input
// (ConfigError/IoError/DimensionError), 3 missing state, 4 numeric failure.
int cli_main(int argc, char** argv);

}  // namespace keec
