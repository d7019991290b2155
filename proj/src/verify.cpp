#include "qvl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qvl/analysis.hpp"
#include "qvl/errors.hpp"
#include "qvl/grad_check.hpp"
#include "qvl/learners.hpp"
#include "qvl/networks.hpp"
#include "qvl/replay.hpp"
#include "qvl/rng.hpp"
#include "qvl/runner.hpp"

namespace qvl {

namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kMonotonicityFloor = -1e-9;

void finalize(VerifyReport& report) {
    for (const CheckResult& c : report.checks) report.passed = report.passed && c.passed;
}

struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in.good()) throw IoError("cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Drops the trailing wall-clock column, the one cell that may differ
// between reruns of an identical configuration.
std::string mask_wall_column(const std::string& csv) {
    std::istringstream in(csv);
    std::string out, line;
    while (std::getline(in, line)) {
        size_t cut = line.rfind(',');
        out += line.substr(0, cut == std::string::npos ? line.size() : cut);
        out += '\n';
    }
    return out;
}

Tensor random_tensor(const Shape& shape, double lo, double hi, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform_range(lo, hi);
    return t;
}

// ---- grad suite ------------------------------------------------------------

CheckResult grad_result(const std::string& name, double max_rel_error,
                        const std::string& detail) {
    return {name, max_rel_error < kGradTol, max_rel_error, kGradTol, detail};
}

CheckResult grad_linear() {
    Rng rng(101);
    ParameterSet ps;
    ps.add("w", random_tensor({5, 3}, -1.0, 1.0, rng));
    ps.add("b", random_tensor({3}, -1.0, 1.0, rng));
    Tensor x = random_tensor({4, 5}, -1.0, 1.0, rng);
    GraphBuilder build = [x](Tape& tape, const NodeMap& nodes) {
        NodeId out = tape.add(tape.matmul(tape.constant(x), nodes.at("w")), nodes.at("b"));
        return tape.mean(tape.square(out));
    };
    GradCheckReport rep = grad_check(ps, build, kGradEps);
    return grad_result("grad/linear", rep.max_rel_error, "worst entry " + rep.worst_entry);
}

CheckResult grad_recurrent_cell() {
    AgentNetSpec spec;
    spec.obs_dim = 5;
    spec.n_actions = 3;
    spec.n_agents = 2;
    spec.hidden_dim = 6;
    Rng rng(102);
    ParameterSet ps = init_agent_net(spec, rng);
    Tensor x0 = random_tensor({4, spec.input_dim()}, -1.0, 1.0, rng);
    Tensor x1 = random_tensor({4, spec.input_dim()}, -1.0, 1.0, rng);
    GraphBuilder build = [spec, x0, x1](Tape& tape, const NodeMap& nodes) {
        NodeId h = tape.constant(Tensor::zeros({4, spec.hidden_dim}));
        AgentStepNodes s0 = agent_cell_graph(tape, nodes, spec, tape.constant(x0), h);
        AgentStepNodes s1 = agent_cell_graph(tape, nodes, spec, tape.constant(x1), s0.hidden);
        return tape.mean(tape.square(tape.concat({s0.head, s1.head}, 0)));
    };
    GradCheckReport rep = grad_check(ps, build, kGradEps);
    return grad_result("grad/recurrent_cell", rep.max_rel_error, "worst entry " + rep.worst_entry);
}

CheckResult grad_hypernetwork() {
    MixerSpec spec;
    spec.n_agents = 3;
    spec.state_dim = 7;
    spec.embed_dim = 4;
    spec.hypernet_hidden = 5;
    Rng rng(103);
    ParameterSet ps = init_mixer(spec, rng);
    Tensor values = random_tensor({5, spec.n_agents}, -2.0, 2.0, rng);
    Tensor state = random_tensor({5, spec.state_dim}, -1.0, 1.0, rng);
    GraphBuilder build = [spec, values, state](Tape& tape, const NodeMap& nodes) {
        NodeId out =
            mixer_graph(tape, nodes, spec, tape.constant(values), tape.constant(state));
        return tape.mean(tape.square(out));
    };
    GradCheckReport rep = grad_check(ps, build, kGradEps);
    return grad_result("grad/hypernetwork", rep.max_rel_error, "worst entry " + rep.worst_entry);
}

EpisodeRecord random_episode(Env& env, Rng& rng) {
    auto f32 = [](const Tensor& t) {
        std::vector<float> out(static_cast<size_t>(t.numel()));
        for (std::int64_t i = 0; i < t.numel(); ++i)
            out[static_cast<size_t>(i)] = static_cast<float>(t.data()[i]);
        return out;
    };
    auto f32_rows = [&](const std::vector<Tensor>& rows) {
        std::vector<std::vector<float>> out;
        for (const Tensor& r : rows) out.push_back(f32(r));
        return out;
    };
    ResetResult reset = env.reset(rng.next_u64());
    Tensor state = reset.state;
    std::vector<Tensor> obs = reset.obs;
    std::vector<ActionMask> masks = reset.masks;
    EpisodeRecord rec;
    while (true) {
        std::vector<int> actions;
        for (const ActionMask& mask : masks) {
            std::vector<int> allowed;
            for (size_t a = 0; a < mask.size(); ++a)
                if (mask[a]) allowed.push_back(static_cast<int>(a));
            actions.push_back(allowed[static_cast<size_t>(
                rng.uniform_int(static_cast<std::uint64_t>(allowed.size())))]);
        }
        StepResult sr = env.step(actions);
        EpisodeStep step;
        step.state = f32(state);
        step.obs = f32_rows(obs);
        step.masks = masks;
        step.actions = actions;
        step.reward = static_cast<float>(sr.reward);
        step.terminated = sr.terminated;
        step.truncated = sr.truncated;
        step.next_masks = sr.next_masks;
        rec.steps.push_back(std::move(step));
        if (sr.terminated || sr.truncated) {
            rec.final_state = f32(sr.next_state);
            rec.final_obs = f32_rows(sr.next_obs);
            return rec;
        }
        state = sr.next_state;
        obs = sr.next_obs;
        masks = sr.next_masks;
    }
}

// Central differences on the training loss itself, against the gradients
// compute_losses reports. The Q and V streams read disjoint online
// parameters, so the summed loss differentiates both at once.
CheckResult grad_full_loss(AlgorithmKind kind) {
    RunConfig rc;
    rc.env_name = "combat";
    rc.combat.width = 5;
    rc.combat.height = 3;
    rc.combat.n_allies = 2;
    rc.combat.n_enemies = 1;
    rc.combat.episode_limit = 4;
    std::unique_ptr<Env> env = make_env(rc);

    Rng rng(200 + static_cast<int>(kind));
    LearnerConfig lc;
    lc.hidden_dim = 6;
    lc.embed_dim = 3;
    lc.hypernet_hidden = 4;
    LearnerState learner = init_learner(kind, env->spec(), lc, rng);

    ReplayBuffer buffer(16, rc.combat.episode_limit);
    for (int e = 0; e < 6; ++e) buffer.push_episode(random_episode(*env, rng));
    PaddedBatch batch = buffer.sample(4, rng);

    const double gamma = 0.9;
    LossReport base = compute_losses(learner, batch, gamma);
    // Central differences at eps 1e-5 land within ~2e-12 of the true slope
    // at best, so the denominator floor grants an absolute allowance of
    // 1e-11 at the 1e-4 threshold; disagreements above it still register.
    auto rel_error = [](double a, double n) {
        return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-7});
    };

    double max_err = 0.0;
    std::string worst = "none";
    for (auto stream : learner.streams()) {
        // Deep copies: set() swaps the stored tensor, so references into
        // entries() would otherwise follow the perturbation.
        const std::vector<std::pair<std::string, Tensor>> originals = stream.online->entries();
        for (const auto& [pname, value] : originals) {
            const std::string key = std::string(stream.name) + "/" + pname;
            const Tensor& analytic = base.grads.at(key);
            auto numeric_at = [&](std::int64_t i, double eps) {
                Tensor bumped = value;
                bumped.data()[i] = value.data()[i] + eps;
                stream.online->set(pname, bumped);
                LossReport up = compute_losses(learner, batch, gamma);
                bumped.data()[i] = value.data()[i] - eps;
                stream.online->set(pname, bumped);
                LossReport down = compute_losses(learner, batch, gamma);
                stream.online->set(pname, value);
                return ((up.loss_q + up.loss_v) - (down.loss_q + down.loss_v)) / (2.0 * eps);
            };
            for (std::int64_t i = 0; i < value.numel(); ++i) {
                double rel = rel_error(analytic.data()[i], numeric_at(i, kGradEps));
                if (rel > max_err) {
                    max_err = rel;
                    worst = key + "[" + std::to_string(i) + "]";
                }
            }
        }
    }
    return grad_result(std::string("grad/loss_") + algorithm_name(kind), max_err,
                       "worst entry " + worst);
}

// ---- igm suite -------------------------------------------------------------

CheckResult igm_grid(int n_agents, int n_actions) {
    MixerSpec spec;
    spec.n_agents = n_agents;
    spec.state_dim = 6;
    spec.embed_dim = 4;
    spec.hypernet_hidden = 5;
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(static_cast<std::uint64_t>(1000 * n_agents + trial));
        ParameterSet mixer = init_mixer(spec, rng);
        Tensor q = random_tensor({n_agents, n_actions}, -5.0, 5.0, rng);
        Tensor state = random_tensor({spec.state_dim}, -1.0, 1.0, rng);
        if (!check_igm(mixer, spec, q, state)) ++failures;
    }
    std::string name = "igm/" + std::to_string(n_agents) + "x" + std::to_string(n_actions);
    return {name, failures == 0, static_cast<double>(failures), 0.0,
            "failures over 100 random mixers"};
}

RunConfig quick_matrix_run(const std::string& out_dir) {
    RunConfig c;
    c.env_name = "matrix";
    c.algorithm = AlgorithmKind::QMIX;
    c.total_steps = 2000;
    c.eval_period = 1000;
    c.eval_episodes = 4;
    c.seeds = {1};
    c.buffer_capacity = 256;
    c.epsilon.anneal_steps = 1200;
    c.learn.lr = 2e-3;
    c.learn.target_period = 50;
    c.learn.batch_size = 16;
    c.learn.hidden_dim = 8;
    c.learn.embed_dim = 2;
    c.learn.hypernet_hidden = 4;
    c.out_dir = out_dir;
    return c;
}

}  // namespace

CheckResult mixer_check(const std::string& name, double worst_violation) {
    return {name, worst_violation >= kMonotonicityFloor, worst_violation, kMonotonicityFloor,
            "worst probed violation"};
}

VerifyReport verify_grad() {
    VerifyReport report{"grad", true, {}};
    report.checks.push_back(grad_linear());
    report.checks.push_back(grad_recurrent_cell());
    report.checks.push_back(grad_hypernetwork());
    for (AlgorithmKind kind : {AlgorithmKind::IQL, AlgorithmKind::QMIX, AlgorithmKind::QVMIX,
                               AlgorithmKind::IQV_MAX})
        report.checks.push_back(grad_full_loss(kind));
    finalize(report);
    return report;
}

VerifyReport verify_mixer() {
    VerifyReport report{"mixer", true, {}};
    {
        Rng rng(11);
        MixerSpec two{2, 5, 8, 8};
        report.checks.push_back(
            mixer_check("mixer/fresh_2agents",
                        check_monotonicity(init_mixer(two, rng), two, 1000, 1.0, 21)));
        MixerSpec three{3, 12, 8, 8};
        report.checks.push_back(
            mixer_check("mixer/fresh_3agents",
                        check_monotonicity(init_mixer(three, rng), three, 1000, 1.0, 22)));
    }
    ScratchDir scratch("qvl_verify_mixer");
    std::vector<SeedOutcome> outcomes = train(quick_matrix_run(scratch.path.string()));
    LoadedRun run = load_run_checkpoint(outcomes[0].dir, outcomes[0].final_checkpoint);
    report.checks.push_back(
        mixer_check("mixer/trained_qmix",
                    check_monotonicity(run.learner.q_mixer, run.learner.mixer_spec, 1000, 1.0,
                                       23)));
    finalize(report);
    return report;
}

VerifyReport verify_igm() {
    VerifyReport report{"igm", true, {}};
    report.checks.push_back(igm_grid(2, 3));
    report.checks.push_back(igm_grid(3, 5));
    finalize(report);
    return report;
}

VerifyReport verify_determinism() {
    VerifyReport report{"determinism", true, {}};
    ScratchDir scratch("qvl_verify_determinism");
    RunConfig c = quick_matrix_run((scratch.path / "a").string());
    c.total_steps = 300;
    c.eval_period = 100;
    std::vector<SeedOutcome> first = train(c);
    c.out_dir = (scratch.path / "b").string();
    std::vector<SeedOutcome> second = train(c);

    const std::string metrics_a = read_file(first[0].dir / "metrics.csv");
    const std::string metrics_b = read_file(second[0].dir / "metrics.csv");
    const bool metrics_same = mask_wall_column(metrics_a) == mask_wall_column(metrics_b);
    report.checks.push_back({"determinism/metrics_rerun", metrics_same,
                             metrics_same ? 0.0 : 1.0, 0.0,
                             "identical config and seed, wall clock column excluded"});

    const bool ckpt_same =
        read_file(first[0].final_checkpoint) == read_file(second[0].final_checkpoint);
    report.checks.push_back({"determinism/checkpoint_rerun", ckpt_same, ckpt_same ? 0.0 : 1.0,
                             0.0, "byte-identical final checkpoints"});

    LoadedRun run = load_run_checkpoint(first[0].dir, first[0].final_checkpoint);
    std::unique_ptr<Env> env = make_env(run.config);
    const std::uint64_t eval_base = make_stream(run.config.seeds[0], Stream::eval).next_u64();
    EvalResult replay = evaluate(run.learner, *env, run.config.eval_episodes, eval_base);
    const bool roundtrip = replay.win_rate == first[0].final_eval.win_rate &&
                           replay.mean_return == first[0].final_eval.mean_return &&
                           replay.mean_length == first[0].final_eval.mean_length;
    report.checks.push_back({"determinism/checkpoint_roundtrip", roundtrip,
                             roundtrip ? 0.0 : 1.0, 0.0,
                             "reloaded checkpoint reproduces the final evaluation exactly"});
    finalize(report);
    return report;
}

VerifyReport run_verify(const std::string& suite) {
    if (suite == "grad") return verify_grad();
    if (suite == "mixer") return verify_mixer();
    if (suite == "igm") return verify_igm();
    if (suite == "determinism") return verify_determinism();
    if (suite == "all") {
        VerifyReport all{"all", true, {}};
        for (const auto* name : {"grad", "mixer", "igm", "determinism"}) {
            VerifyReport part = run_verify(name);
            all.passed = all.passed && part.passed;
            all.checks.insert(all.checks.end(), part.checks.begin(), part.checks.end());
        }
        return all;
    }
    throw ValidationError("unknown verify suite '" + suite +
                          "', expected grad|mixer|igm|determinism|all");
}

}  // namespace qvl
