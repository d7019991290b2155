#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qvl/config.hpp"
#include "qvl/env.hpp"
#include "qvl/learners.hpp"

namespace qvl {

// One visited state of a greedy rollout: what the value pathway claims the
// state is worth versus the discounted return actually collected from there.
struct BiasSample {
    int episode = 0;
    int step = 0;
    double estimated = 0.0;
    double empirical = 0.0;
};

struct BiasSummary {
    std::vector<BiasSample> samples;
    double mean_bias = 0.0;  // mean(estimated - empirical)
    double std_bias = 0.0;   // population std of the same differences
};

// Greedy rollouts (episode i resets with seed + i). Estimated value is the
// mixed Q at the greedy joint action for CTDE kinds and the per-agent greedy
// Q mean for fully decentralised kinds; empirical is the exact reward tail.
BiasSummary estimate_bias(const LearnerState& learner, Env& env, int n_episodes, double gamma,
                          std::uint64_t seed);

// bias.csv schema: episode,step,estimated,empirical
void write_bias_csv(const std::filesystem::path& path, const BiasSummary& summary);

struct LoadedRun {
    RunConfig config;
    LearnerState learner;
};

// Rebuilds the learner a run directory's manifest describes and restores the
// given checkpoint into it. Dimension mismatches raise ValidationError.
LoadedRun load_run_checkpoint(const std::filesystem::path& run_dir,
                              const std::filesystem::path& checkpoint);

struct CurvePoint {
    std::string algorithm;
    std::string env;
    std::int64_t step = 0;
    double mean = 0.0;
    double variance = 0.0;
    double stddev = 0.0;
    int n_seeds = 0;
};

struct ComparisonRow {
    std::string algorithm;
    std::string env;
    int n_seeds = 0;
    double final_win_rate = 0.0;
    std::int64_t steps_to_threshold = -1;  // -1 when the mean curve never reaches it
    double mean_bias = 0.0;
    bool has_bias = false;  // true when bias.csv files were found for this group
};

struct AggregateResult {
    std::vector<ComparisonRow> table;
    std::vector<CurvePoint> curves;
};

// Collects per-seed metrics.csv files (each dir either is a run dir or holds
// run dirs one level down), groups them by (algorithm, env) from the
// manifests, and reduces win-rate curves to mean/variance/std per grid step.
// All curves sharing an env must sit on the same step grid.
AggregateResult aggregate_runs(const std::vector<std::filesystem::path>& run_dirs,
                               double threshold = 0.8);

// curves.csv: algorithm,env,step,mean_win_rate,var_win_rate,std_win_rate,n_seeds
// table.csv:  algorithm,env,n_seeds,final_win_rate,steps_to_threshold,mean_bias
void write_aggregate_csvs(const AggregateResult& result, const std::filesystem::path& out_dir);

// Renders deterministic SVGs: one win-rate figure per env from curves.csv
// (mean line per algorithm, std band shaded) and one calibration figure from
// bias_<algorithm>.csv files (solid estimated, dash-dotted empirical, both
// averaged per within-episode step). Returns the written file paths.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& in_dir,
                                                const std::filesystem::path& out_dir);

}  // namespace qvl
