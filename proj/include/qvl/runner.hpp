#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qvl/env.hpp"
#include "qvl/learners.hpp"
#include "qvl/micro_combat.hpp"

namespace qvl {

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    std::int64_t anneal_steps = 50000;
};

// Linear interpolation from start to end over anneal_steps, clamped after.
double epsilon_at(std::int64_t step, const EpsilonSchedule& schedule);

struct RunConfig {
    std::string env_name = "combat";  // "combat" or "matrix"
    MicroCombatConfig combat;
    std::vector<double> payoff;  // row-major square; empty selects the default game
    AlgorithmKind algorithm = AlgorithmKind::QMIX;
    std::int64_t total_steps = 200000;
    std::int64_t eval_period = 20000;
    int eval_episodes = 24;
    std::int64_t checkpoint_period = 0;  // env steps between checkpoints; 0 keeps final only
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double gamma = 0.99;
    int buffer_capacity = 5000;
    EpsilonSchedule epsilon;
    LearnerConfig learn;
    std::string out_dir = "runs";
};

// Throws ValidationError: needs at least one seed, eval_period in [1, total_steps],
// gamma in [0,1), positive step counts and a known env name.
void validate_run_config(const RunConfig& config);

std::unique_ptr<Env> make_env(const RunConfig& config);

struct MetricRow {
    std::int64_t step = 0;
    double win_rate = 0.0;
    double mean_return = 0.0;
    double mean_length = 0.0;
    double loss_q = 0.0;
    std::optional<double> loss_v;  // empty for the pure Q kinds
    double epsilon = 0.0;
    double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,win_rate,mean_return,mean_length,loss_q,loss_v,epsilon,wall_ms";

std::string format_metric_row(const MetricRow& row);

struct EvalResult {
    double win_rate = 0.0;
    double mean_return = 0.0;
    double mean_length = 0.0;
};

// Greedy decentralised rollouts; episode i resets the env with seed + i.
// Touches neither the learner nor any training rng stream.
EvalResult evaluate(const LearnerState& learner, Env& env, int n_episodes, std::uint64_t seed);

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool completed = false;  // false when the seed aborted on divergence
    std::filesystem::path dir;
    std::filesystem::path final_checkpoint;
    EvalResult final_eval;
};

// One full training run: collect an episode epsilon-greedily, push it into
// replay, take one gradient step once the buffer holds a batch, refresh
// targets on schedule. Evaluation rows land on the fixed grid
// {0, eval_period, 2*eval_period, ...} below total_steps plus one final row
// at total_steps. Fully deterministic given (config, seed).
SeedOutcome train_seed(const RunConfig& config, std::uint64_t seed,
                       const std::filesystem::path& seed_dir);

// Runs every configured seed (in parallel up to QVL_THREADS workers), writing
// <out_dir>/<algorithm>_seed<seed>/{manifest.cfg,metrics.csv,ckpt_*.qvl}.
// A diverged seed records a failure row and does not stop the others.
std::vector<SeedOutcome> train(const RunConfig& config);

}  // namespace qvl
