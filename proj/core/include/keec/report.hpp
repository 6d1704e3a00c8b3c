#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "keec/numkit.hpp"

namespace keec {

// Result of a batch evaluation run. The CSV artifact is a pure function of
// (bundle, config, seed): it carries everything except the wall-clock timing,
// which lives only in summary_text so re-runs stay byte-identical.
struct EvalReport {
    std::string env_name;
    std::uint32_t config_hash = 0;
    std::vector<double> rewards;  // episodic reward per episode
    std::vector<int> lengths;     // executed steps per episode
    int diverged = 0;             // episodes cut short by numeric failure
    double mean = 0.0;
    double stddev = 0.0;          // population std over episodes
    double wall_ms_per_step = 0.0;

    // Recomputes mean/stddev from the rewards list.
    void finalize();
};

// Deterministic CSV: a `key,value` header block (env, config_hash, episodes,
// mean, std, diverged) followed by `episode,reward,length` rows. All doubles
// printed with %.17g.
void write_report_csv(const std::string& path, const EvalReport& report);

// JSON-like single-object text including the wall-clock rate; intended for
// humans and logs, not for hashing.
std::string summary_text(const EvalReport& report);

}  // namespace keec
