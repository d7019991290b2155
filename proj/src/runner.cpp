#include "qvl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "qvl/config.hpp"
#include "qvl/errors.hpp"
#include "qvl/matrix_game.hpp"
#include "qvl/replay.hpp"

namespace qvl {

namespace {

std::string fmt_g17(double v) {
    char buf[64];  // shortest form that parses back to the same double
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<float> to_f32(const Tensor& t) {
    std::vector<float> out(static_cast<size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        out[static_cast<size_t>(i)] = static_cast<float>(t.data()[i]);
    return out;
}

std::vector<std::vector<float>> to_f32_rows(const std::vector<Tensor>& ts) {
    std::vector<std::vector<float>> out;
    out.reserve(ts.size());
    for (const Tensor& t : ts) out.push_back(to_f32(t));
    return out;
}

// Rng state limbs stored as two exact u32 halves per u64 (doubles hold 53
// bits; a raw u64 would not survive the round-trip).
Tensor rng_state_tensor(const Rng& rng) {
    const std::array<std::uint64_t, 4> s = rng.state();
    Tensor t = Tensor::zeros({8});
    for (int i = 0; i < 4; ++i) {
        t.data()[2 * i] = static_cast<double>(s[static_cast<size_t>(i)] >> 32);
        t.data()[2 * i + 1] = static_cast<double>(s[static_cast<size_t>(i)] & 0xffffffffu);
    }
    return t;
}

void write_checkpoint(const std::filesystem::path& path, const LearnerState& learner,
                      std::int64_t step, const Rng& env_rng, const Rng& explore_rng,
                      const Rng& sample_rng) {
    ParameterSet flat = checkpoint_params(learner);
    flat.add("meta/step", Tensor::from_data({1}, {static_cast<double>(step)}));
    flat.add("rng/env", rng_state_tensor(env_rng));
    flat.add("rng/exploration", rng_state_tensor(explore_rng));
    flat.add("rng/sampling", rng_state_tensor(sample_rng));
    std::vector<std::uint8_t> bytes = serialize_params(flat);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open checkpoint file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

int worker_count(size_t n_jobs) {
    unsigned n = std::thread::hardware_concurrency();
    if (const char* cap = std::getenv("QVL_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(cap, &end, 10);
        if (end != cap && v >= 1) n = static_cast<unsigned>(v);
    }
    if (n < 1) n = 1;
    return static_cast<int>(std::min<size_t>(n, n_jobs));
}

}  // namespace

double epsilon_at(std::int64_t step, const EpsilonSchedule& schedule) {
    if (step < 0) throw ValidationError("epsilon_at: negative step");
    if (schedule.anneal_steps < 1) throw ValidationError("epsilon schedule needs anneal_steps >= 1");
    if (step >= schedule.anneal_steps) return schedule.end;
    double frac = static_cast<double>(step) / static_cast<double>(schedule.anneal_steps);
    return schedule.start + (schedule.end - schedule.start) * frac;
}

void validate_run_config(const RunConfig& config) {
    if (config.env_name != "combat" && config.env_name != "matrix")
        throw ValidationError("unknown environment '" + config.env_name + "'");
    if (config.seeds.empty()) throw ValidationError("run needs at least one seed");
    if (config.total_steps < 1) throw ValidationError("total_steps must be >= 1");
    if (config.eval_period < 1) throw ValidationError("eval_period must be >= 1");
    if (config.eval_episodes < 1) throw ValidationError("eval_episodes must be >= 1");
    if (config.checkpoint_period < 0) throw ValidationError("checkpoint_period must be >= 0");
    if (!(config.gamma >= 0.0 && config.gamma < 1.0))
        throw ValidationError("gamma must be in [0,1)");
    if (config.buffer_capacity < 1) throw ValidationError("buffer_capacity must be >= 1");
    if (config.learn.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (config.learn.batch_size > config.buffer_capacity)
        throw ValidationError("batch_size cannot exceed buffer_capacity");
    if (config.learn.lr <= 0.0) throw ValidationError("lr must be > 0");
    if (config.learn.target_period < 1) throw ValidationError("target_period must be >= 1");
    if (config.epsilon.anneal_steps < 1)
        throw ValidationError("epsilon schedule needs anneal_steps >= 1");
    if (!config.payoff.empty()) {
        size_t n = 0;
        while (n * n < config.payoff.size()) ++n;
        if (n * n != config.payoff.size())
            throw ValidationError("payoff list must have a square number of entries");
    }
}

std::unique_ptr<Env> make_env(const RunConfig& config) {
    if (config.env_name == "matrix") {
        Tensor payoff = MatrixGame::default_payoff();
        if (!config.payoff.empty()) {
            size_t n = 0;
            while (n * n < config.payoff.size()) ++n;
            if (n * n != config.payoff.size())
                throw ValidationError("payoff list must have a square number of entries");
            payoff = Tensor::from_data(
                {static_cast<std::int64_t>(n), static_cast<std::int64_t>(n)}, config.payoff);
        }
        return std::make_unique<MatrixGame>(payoff, config.gamma);
    }
    if (config.env_name == "combat") {
        MicroCombatConfig c = config.combat;
        c.gamma = config.gamma;
        return std::make_unique<MicroCombat>(c);
    }
    throw ValidationError("unknown environment '" + config.env_name + "'");
}

std::string format_metric_row(const MetricRow& row) {
    std::string line = std::to_string(row.step);
    line += ',';
    line += fmt_g17(row.win_rate);
    line += ',';
    line += fmt_g17(row.mean_return);
    line += ',';
    line += fmt_g17(row.mean_length);
    line += ',';
    line += fmt_g17(row.loss_q);
    line += ',';
    if (row.loss_v) line += fmt_g17(*row.loss_v);
    line += ',';
    line += fmt_g17(row.epsilon);
    line += ',';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", row.wall_ms);
    line += buf;
    return line;
}

EvalResult evaluate(const LearnerState& learner, Env& env, int n_episodes, std::uint64_t seed) {
    if (n_episodes < 1) throw ValidationError("evaluate needs n_episodes >= 1");
    const DecPomdpSpec& spec = env.spec();
    Rng greedy_rng(0);  // epsilon 0 never explores; draws are discarded
    double wins = 0.0, returns = 0.0, lengths = 0.0;
    for (int i = 0; i < n_episodes; ++i) {
        ResetResult rr = env.reset(seed + static_cast<std::uint64_t>(i));
        std::vector<Tensor> obs = rr.obs;
        std::vector<ActionMask> masks = rr.masks;
        std::vector<RecurrentState> hidden;
        for (int a = 0; a < spec.n_agents; ++a) hidden.push_back(initial_state(learner.q_spec));
        bool done = false;
        while (!done) {
            ActionSelection sel = select_actions(learner, obs, masks, hidden, 0.0, greedy_rng);
            StepResult sr = env.step(sel.actions);
            returns += sr.reward;
            lengths += 1.0;
            if (sr.win) wins += 1.0;
            done = sr.terminated || sr.truncated;
            obs = sr.next_obs;
            masks = sr.next_masks;
            hidden = std::move(sel.next_hidden);
        }
    }
    EvalResult out;
    out.win_rate = wins / n_episodes;
    out.mean_return = returns / n_episodes;
    out.mean_length = lengths / n_episodes;
    return out;
}

SeedOutcome train_seed(const RunConfig& config, std::uint64_t seed,
                       const std::filesystem::path& seed_dir) {
    validate_run_config(config);
    std::filesystem::create_directories(seed_dir);

    std::unique_ptr<Env> env = make_env(config);
    std::unique_ptr<Env> eval_env = make_env(config);
    const DecPomdpSpec& spec = env->spec();

    Rng env_rng = make_stream(seed, Stream::env);
    Rng explore_rng = make_stream(seed, Stream::exploration);
    Rng sample_rng = make_stream(seed, Stream::sampling);
    Rng init_rng = make_stream(seed, Stream::init);
    const std::uint64_t eval_base = make_stream(seed, Stream::eval).next_u64();

    LearnerState learner = init_learner(config.algorithm, spec, config.learn, init_rng);
    ReplayBuffer buffer(config.buffer_capacity, spec.episode_limit);

    std::ofstream metrics(seed_dir / "metrics.csv");
    if (!metrics) throw ValidationError("cannot open " + (seed_dir / "metrics.csv").string());
    metrics << kMetricsHeader << '\n';

    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    double last_loss_q = 0.0, last_loss_v = 0.0;
    auto emit_row = [&](std::int64_t grid_step) {
        EvalResult ev = evaluate(learner, *eval_env, config.eval_episodes, eval_base);
        MetricRow row;
        row.step = grid_step;
        row.win_rate = ev.win_rate;
        row.mean_return = ev.mean_return;
        row.mean_length = ev.mean_length;
        row.loss_q = last_loss_q;
        if (has_v_stream(config.algorithm)) row.loss_v = last_loss_v;
        row.epsilon = epsilon_at(grid_step, config.epsilon);
        row.wall_ms = wall_ms();
        metrics << format_metric_row(row) << '\n';
        metrics.flush();
        return ev;
    };

    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.dir = seed_dir;

    const std::int64_t n_eval = config.total_steps / config.eval_period;   // grid rows below total
    const std::int64_t n_ckpt =
        config.checkpoint_period > 0 ? config.total_steps / config.checkpoint_period : 0;
    std::int64_t eval_idx = 0, ckpt_idx = 1;  // no step-0 checkpoint: that is just the init
    std::int64_t steps = 0;

    auto flush_boundaries = [&] {
        while (eval_idx < n_eval && eval_idx * config.eval_period <= steps) {
            emit_row(eval_idx * config.eval_period);
            ++eval_idx;
        }
        while (ckpt_idx <= n_ckpt && ckpt_idx * config.checkpoint_period <= steps) {
            const std::int64_t at = ckpt_idx * config.checkpoint_period;
            if (at < config.total_steps)
                write_checkpoint(seed_dir / ("ckpt_" + std::to_string(at) + ".qvl"), learner, at,
                                 env_rng, explore_rng, sample_rng);
            ++ckpt_idx;
        }
    };

    try {
        while (steps < config.total_steps) {
            flush_boundaries();

            ResetResult rr = env->reset(env_rng.next_u64());
            std::vector<Tensor> obs = rr.obs;
            std::vector<ActionMask> masks = rr.masks;
            Tensor state = rr.state;
            std::vector<RecurrentState> hidden;
            for (int a = 0; a < spec.n_agents; ++a)
                hidden.push_back(initial_state(learner.q_spec));

            EpisodeRecord ep;
            bool done = false;
            while (!done) {
                const double eps = epsilon_at(steps, config.epsilon);
                ActionSelection sel = select_actions(learner, obs, masks, hidden, eps, explore_rng);
                StepResult sr = env->step(sel.actions);

                EpisodeStep step;
                step.state = to_f32(state);
                step.obs = to_f32_rows(obs);
                step.masks = masks;
                step.actions = sel.actions;
                step.reward = static_cast<float>(sr.reward);
                step.terminated = sr.terminated;
                step.truncated = sr.truncated;
                step.next_masks = sr.next_masks;
                ep.steps.push_back(std::move(step));

                ++steps;
                done = sr.terminated || sr.truncated;
                if (done) {
                    ep.final_state = to_f32(sr.next_state);
                    ep.final_obs = to_f32_rows(sr.next_obs);
                }
                state = sr.next_state;
                obs = sr.next_obs;
                masks = sr.next_masks;
                hidden = std::move(sel.next_hidden);
            }
            buffer.push_episode(std::move(ep));

            if (buffer.size() >= config.learn.batch_size) {
                PaddedBatch batch = buffer.sample(config.learn.batch_size, sample_rng);
                LossReport report = compute_losses(learner, batch, config.gamma);
                optimizer_step(learner, report.grads, config.learn.lr);
                maybe_update_targets(learner, config.learn.target_period);
                last_loss_q = report.loss_q;
                last_loss_v = report.loss_v;
            }
        }
        flush_boundaries();

        outcome.final_eval = emit_row(config.total_steps);
        outcome.final_checkpoint =
            seed_dir / ("ckpt_" + std::to_string(config.total_steps) + ".qvl");
        write_checkpoint(outcome.final_checkpoint, learner, config.total_steps, env_rng,
                         explore_rng, sample_rng);
        outcome.completed = true;
    } catch (const DivergenceError& e) {
        // Record the failure as a row on the actual step and keep the seed's
        // partial artifacts; the caller moves on to the other seeds.
        MetricRow row;
        row.step = steps;
        row.loss_q = std::numeric_limits<double>::quiet_NaN();
        if (has_v_stream(config.algorithm))
            row.loss_v = std::numeric_limits<double>::quiet_NaN();
        row.epsilon = epsilon_at(steps, config.epsilon);
        row.wall_ms = wall_ms();
        metrics << format_metric_row(row) << '\n';
        std::ofstream marker(seed_dir / "DIVERGED.txt");
        marker << e.what() << '\n';
        outcome.completed = false;
    }
    return outcome;
}

std::vector<SeedOutcome> train(const RunConfig& config) {
    validate_run_config(config);
    const std::filesystem::path root(config.out_dir);
    std::filesystem::create_directories(root);

    struct Job {
        std::uint64_t seed;
        std::filesystem::path dir;
    };
    std::vector<Job> jobs;
    for (std::uint64_t seed : config.seeds) {
        Job j;
        j.seed = seed;
        j.dir = root / (std::string(algorithm_name(config.algorithm)) + "_seed" +
                        std::to_string(seed));
        jobs.push_back(std::move(j));
    }
    const std::string manifest = format_config(config);
    for (const Job& j : jobs) {
        std::filesystem::create_directories(j.dir);
        std::ofstream out(j.dir / "manifest.cfg");
        out << manifest;
    }

    std::vector<SeedOutcome> outcomes(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<size_t> next{0};
    auto work = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                outcomes[i] = train_seed(config, jobs[i].seed, jobs[i].dir);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int workers = worker_count(jobs.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
    return outcomes;
}

}  // namespace qvl
