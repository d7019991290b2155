#include "qvl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "qvl/errors.hpp"
#include "qvl/grad_check.hpp"
#include "qvl/tape.hpp"

namespace qvl {

bool is_ctde(AlgorithmKind kind) {
    return kind == AlgorithmKind::QMIX || kind == AlgorithmKind::QVMIX ||
           kind == AlgorithmKind::QVMIX_MAX;
}

bool has_v_stream(AlgorithmKind kind) {
    return kind == AlgorithmKind::IQV || kind == AlgorithmKind::IQV_MAX ||
           kind == AlgorithmKind::QVMIX || kind == AlgorithmKind::QVMIX_MAX;
}

const char* algorithm_name(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::IQL: return "iql";
        case AlgorithmKind::IQV: return "iqv";
        case AlgorithmKind::IQV_MAX: return "iqv-max";
        case AlgorithmKind::QMIX: return "qmix";
        case AlgorithmKind::QVMIX: return "qvmix";
        case AlgorithmKind::QVMIX_MAX: return "qvmix-max";
    }
    return "?";
}

AlgorithmKind parse_algorithm(const std::string& name) {
    for (AlgorithmKind kind :
         {AlgorithmKind::IQL, AlgorithmKind::IQV, AlgorithmKind::IQV_MAX, AlgorithmKind::QMIX,
          AlgorithmKind::QVMIX, AlgorithmKind::QVMIX_MAX})
        if (name == algorithm_name(kind)) return kind;
    throw ConfigError("unknown algorithm '" + name + "' (expected iql, iqv, iqv-max, qmix, qvmix or qvmix-max)");
}

std::vector<LearnerState::StreamRef> LearnerState::streams() {
    std::vector<StreamRef> out;
    out.push_back({"q_net", &q_net, &q_net_target});
    if (has_v_stream(kind)) out.push_back({"v_net", &v_net, &v_net_target});
    if (is_ctde(kind)) {
        out.push_back({"q_mixer", &q_mixer, &q_mixer_target});
        if (has_v_stream(kind)) out.push_back({"v_mixer", &v_mixer, &v_mixer_target});
    }
    return out;
}

LearnerState init_learner(AlgorithmKind kind, const DecPomdpSpec& env_spec,
                          const LearnerConfig& config, Rng& rng) {
    validate_spec(env_spec);
    if (config.hidden_dim < 1 || config.embed_dim < 1 || config.hypernet_hidden < 1)
        throw ValidationError("learner net widths must be positive");
    LearnerState ls;
    ls.kind = kind;
    ls.q_spec = AgentNetSpec{env_spec.obs_dim, env_spec.n_actions, env_spec.n_agents,
                             config.hidden_dim, HeadKind::q};
    ls.v_spec = ls.q_spec;
    ls.v_spec.head = HeadKind::v;
    ls.mixer_spec =
        MixerSpec{env_spec.n_agents, env_spec.state_dim, config.embed_dim, config.hypernet_hidden};

    ls.q_net = init_agent_net(ls.q_spec, rng);
    if (has_v_stream(kind)) ls.v_net = init_agent_net(ls.v_spec, rng);
    if (is_ctde(kind)) {
        ls.q_mixer = init_mixer(ls.mixer_spec, rng);
        if (has_v_stream(kind)) ls.v_mixer = init_mixer(ls.mixer_spec, rng);
    }
    ls.q_net_target = ls.q_net;
    ls.v_net_target = ls.v_net;
    ls.q_mixer_target = ls.q_mixer;
    ls.v_mixer_target = ls.v_mixer;
    return ls;
}

namespace {

// Per-batch tensors shared by target and loss assembly. Time-major
// convention throughout: scalar row = t * B + b; agent-major within a
// timestep: net row = b * n + a.
struct AssembledBatch {
    int B = 0, T = 0, n = 0, A = 0;
    std::vector<Tensor> x;       // t = 0..T, {B*n, obs+A+n}
    std::vector<Tensor> state;   // t = 0..T, {B, S}
    std::vector<std::vector<std::uint8_t>> next_mask;  // t = 0..T-1, B*n*A flat
    std::vector<std::vector<std::int32_t>> chosen;     // t = 0..T-1, B*n
    std::vector<double> reward;        // T*B
    std::vector<std::uint8_t> terminated;  // T*B
    std::vector<std::uint8_t> valid;       // T*B
    std::int64_t valid_count = 0;
};

AssembledBatch assemble(const PaddedBatch& batch, const AgentNetSpec& spec, int state_dim) {
    AssembledBatch ab;
    ab.B = batch.batch_size;
    ab.T = batch.max_len;
    ab.n = spec.n_agents;
    ab.A = spec.n_actions;
    const int in = spec.input_dim();
    if (ab.B < 1 || ab.T < 1) throw ValidationError("empty batch");

    for (int t = 0; t <= ab.T; ++t) {
        Tensor x = Tensor::zeros({ab.B * ab.n, in});
        Tensor st = Tensor::zeros({ab.B, state_dim});
        for (int b = 0; b < ab.B; ++b) {
            const EpisodeRecord& e = batch.episodes[static_cast<size_t>(b)];
            const int len = e.length();
            if (t > len) continue;
            const std::vector<float>* state_src =
                t < len ? &e.steps[static_cast<size_t>(t)].state : &e.final_state;
            if (static_cast<int>(state_src->size()) < state_dim)
                throw ValidationError("episode state narrower than the mixer's state input");
            for (int s = 0; s < state_dim; ++s)
                st.at(b, s) = static_cast<double>((*state_src)[static_cast<size_t>(s)]);
            for (int a = 0; a < ab.n; ++a) {
                const std::vector<float>& obs =
                    t < len ? e.steps[static_cast<size_t>(t)].obs[static_cast<size_t>(a)]
                            : e.final_obs[static_cast<size_t>(a)];
                double* row = x.data() + (static_cast<std::int64_t>(b) * ab.n + a) * in;
                for (int z = 0; z < spec.obs_dim; ++z)
                    row[z] = static_cast<double>(obs[static_cast<size_t>(z)]);
                if (t > 0) {
                    int prev = e.steps[static_cast<size_t>(t - 1)].actions[static_cast<size_t>(a)];
                    row[spec.obs_dim + prev] = 1.0;
                }
                row[spec.obs_dim + ab.A + a] = 1.0;
            }
        }
        ab.x.push_back(std::move(x));
        ab.state.push_back(std::move(st));
    }

    if (static_cast<int>(batch.valid.size()) != ab.B)
        throw ValidationError("batch validity rows mismatch the batch size");

    ab.reward.assign(static_cast<size_t>(ab.T) * static_cast<size_t>(ab.B), 0.0);
    ab.terminated.assign(ab.reward.size(), 0);
    ab.valid.assign(ab.reward.size(), 0);
    for (int t = 0; t < ab.T; ++t) {
        std::vector<std::uint8_t> mask(static_cast<size_t>(ab.B) * ab.n * ab.A, 0);
        std::vector<std::int32_t> chosen(static_cast<size_t>(ab.B) * ab.n, 0);
        for (int b = 0; b < ab.B; ++b) {
            const EpisodeRecord& e = batch.episodes[static_cast<size_t>(b)];
            const auto& valid_row = batch.valid[static_cast<size_t>(b)];
            const bool live = t < e.length() && t < static_cast<int>(valid_row.size()) &&
                              valid_row[static_cast<size_t>(t)];
            if (!live) {
                // Padded: keep noop unmasked so reductions stay well formed.
                for (int a = 0; a < ab.n; ++a) mask[(static_cast<size_t>(b) * ab.n + a) * ab.A] = 1;
                continue;
            }
            const EpisodeStep& step = e.steps[static_cast<size_t>(t)];
            const size_t row = static_cast<size_t>(t) * ab.B + b;
            ab.reward[row] = static_cast<double>(step.reward);
            ab.terminated[row] = step.terminated ? 1 : 0;
            ab.valid[row] = 1;
            ++ab.valid_count;
            for (int a = 0; a < ab.n; ++a) {
                chosen[static_cast<size_t>(b) * ab.n + a] =
                    static_cast<std::int32_t>(step.actions[static_cast<size_t>(a)]);
                const ActionMask& m = step.next_masks[static_cast<size_t>(a)];
                if (static_cast<int>(m.size()) != ab.A)
                    throw ValidationError("episode mask width mismatches the action space");
                bool any = false;
                for (int u = 0; u < ab.A; ++u) {
                    mask[(static_cast<size_t>(b) * ab.n + a) * ab.A + u] = m[static_cast<size_t>(u)];
                    any = any || m[static_cast<size_t>(u)];
                }
                if (!any)
                    throw EmptyReductionError("agent " + std::to_string(a) +
                                              " has an all-masked next step");
            }
        }
        ab.next_mask.push_back(std::move(mask));
        ab.chosen.push_back(std::move(chosen));
    }
    return ab;
}

// Forward-only unroll of one shared net over t = 0..T inclusive.
std::vector<Tensor> unroll_values(const AssembledBatch& ab, const ParameterSet& params,
                                  const AgentNetSpec& spec) {
    Tape tape;
    NodeMap nodes = bind_params(tape, params, /*requires_grad=*/false);
    NodeId h = tape.constant(Tensor::zeros({ab.B * ab.n, spec.hidden_dim}));
    std::vector<Tensor> heads;
    for (int t = 0; t <= ab.T; ++t) {
        AgentStepNodes step = agent_cell_graph(tape, nodes, spec, tape.constant(ab.x[static_cast<size_t>(t)]), h);
        h = step.hidden;
        heads.push_back(tape.value(step.head));
    }
    return heads;
}

// Per-agent masked max of next-step values; padded rows give zero.
Tensor greedy_next_values(const AssembledBatch& ab, const std::vector<Tensor>& heads, int t) {
    const Tensor& head = heads[static_cast<size_t>(t + 1)];  // values at s_{t+1}
    Tensor out = Tensor::zeros({ab.B * ab.n});
    const std::vector<std::uint8_t>& mask = ab.next_mask[static_cast<size_t>(t)];
    for (int r = 0; r < ab.B * ab.n; ++r) {
        double best = 0.0;
        bool found = false;
        for (int u = 0; u < ab.A; ++u) {
            if (!mask[static_cast<size_t>(r) * ab.A + u]) continue;
            double v = head.at(r, u);
            if (!found || v > best) {
                best = v;
                found = true;
            }
        }
        out.data()[r] = found ? best : 0.0;
    }
    return out;
}

// Mixes {B, n} per-agent values through a monotonic mixer, forward only.
Tensor mix_values(const Tensor& values, const Tensor& state, const ParameterSet& mixer,
                  const MixerSpec& spec) {
    Tape tape;
    NodeMap nodes = bind_params(tape, mixer, /*requires_grad=*/false);
    return tape.value(mixer_graph(tape, nodes, spec, tape.constant(values), tape.constant(state)));
}

Tensor assemble_targets(const AssembledBatch& ab, double gamma, bool mixed,
                        const std::function<Tensor(int)>& bootstrap_at) {
    const int w = mixed ? 1 : ab.n;
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(ab.T) * ab.B, w});
    for (int t = 0; t < ab.T; ++t) {
        Tensor boot = bootstrap_at(t);  // {B, w}
        for (int b = 0; b < ab.B; ++b) {
            const size_t row = static_cast<size_t>(t) * ab.B + b;
            if (!ab.valid[row]) continue;
            const double base = ab.reward[row];
            const double keep = ab.terminated[row] ? 0.0 : gamma;
            for (int c = 0; c < w; ++c)
                out.at(static_cast<std::int64_t>(row), c) = base + keep * boot.at(b, c);
        }
    }
    return out;
}

}  // namespace

Tensor td_target_q_max(const PaddedBatch& batch, const ParameterSet& target_q,
                       const AgentNetSpec& q_spec, const ParameterSet* target_q_mixer,
                       const MixerSpec* mixer_spec, double gamma) {
    if ((target_q_mixer == nullptr) != (mixer_spec == nullptr))
        throw ValidationError("mixer parameters and mixer spec must come together");
    const int state_dim = mixer_spec ? mixer_spec->state_dim : 1;
    AssembledBatch ab = assemble(batch, q_spec, state_dim);
    std::vector<Tensor> heads = unroll_values(ab, target_q, q_spec);
    auto bootstrap = [&](int t) {
        Tensor greedy = greedy_next_values(ab, heads, t).reshaped({ab.B, ab.n});
        if (!target_q_mixer) return greedy;
        return mix_values(greedy, ab.state[static_cast<size_t>(t + 1)], *target_q_mixer,
                          *mixer_spec);
    };
    return assemble_targets(ab, gamma, target_q_mixer != nullptr, bootstrap);
}

Tensor td_target_v(const PaddedBatch& batch, const ParameterSet& target_v,
                   const AgentNetSpec& v_spec, const ParameterSet* target_v_mixer,
                   const MixerSpec* mixer_spec, double gamma) {
    if ((target_v_mixer == nullptr) != (mixer_spec == nullptr))
        throw ValidationError("mixer parameters and mixer spec must come together");
    if (v_spec.head != HeadKind::v) throw ValidationError("td_target_v needs a v-head spec");
    const int state_dim = mixer_spec ? mixer_spec->state_dim : 1;
    AssembledBatch ab = assemble(batch, v_spec, state_dim);
    std::vector<Tensor> heads = unroll_values(ab, target_v, v_spec);
    auto bootstrap = [&](int t) {
        Tensor v = heads[static_cast<size_t>(t + 1)].reshaped({ab.B, ab.n});
        if (!target_v_mixer) return v;
        return mix_values(v, ab.state[static_cast<size_t>(t + 1)], *target_v_mixer, *mixer_spec);
    };
    return assemble_targets(ab, gamma, target_v_mixer != nullptr, bootstrap);
}

Tensor td_target_dqv_max_v(const PaddedBatch& batch, const ParameterSet& target_q,
                           const AgentNetSpec& q_spec, const ParameterSet* target_q_mixer,
                           const MixerSpec* mixer_spec, double gamma) {
    return td_target_q_max(batch, target_q, q_spec, target_q_mixer, mixer_spec, gamma);
}

namespace {

// Builds one stream's MSE loss graph and pulls out value + gradients.
struct StreamLoss {
    double value = 0.0;
    GradStore grads;
};

StreamLoss stream_loss(const AssembledBatch& ab, const Tensor& targets, bool gather_q,
                       const ParameterSet& net, const AgentNetSpec& net_spec,
                       const ParameterSet* mixer, const MixerSpec* mixer_spec,
                       const char* net_name, const char* mixer_name) {
    Tape tape;
    NodeMap net_nodes = bind_params(tape, net, /*requires_grad=*/true);
    NodeMap mixer_nodes;
    if (mixer) mixer_nodes = bind_params(tape, *mixer, /*requires_grad=*/true);

    const int w = mixer ? 1 : ab.n;
    NodeId h = tape.constant(Tensor::zeros({ab.B * ab.n, net_spec.hidden_dim}));
    std::vector<NodeId> per_step;
    for (int t = 0; t < ab.T; ++t) {
        AgentStepNodes step =
            agent_cell_graph(tape, net_nodes, net_spec, tape.constant(ab.x[static_cast<size_t>(t)]), h);
        h = step.hidden;
        NodeId vals = gather_q ? tape.gather_index(step.head, ab.chosen[static_cast<size_t>(t)])
                               : tape.reshape(step.head, {static_cast<std::int64_t>(ab.B) * ab.n});
        NodeId grid = tape.reshape(vals, {ab.B, ab.n});
        if (mixer)
            grid = mixer_graph(tape, mixer_nodes, *mixer_spec, grid,
                               tape.constant(ab.state[static_cast<size_t>(t)]));
        per_step.push_back(grid);  // {B, w}
    }
    NodeId pred = tape.concat(per_step, 0);  // {T*B, w}

    Tensor validity = Tensor::zeros({static_cast<std::int64_t>(ab.T) * ab.B, w});
    for (size_t row = 0; row < ab.valid.size(); ++row)
        for (int c = 0; c < w; ++c)
            validity.at(static_cast<std::int64_t>(row), c) = ab.valid[row] ? 1.0 : 0.0;

    const double denom = static_cast<double>(ab.valid_count) * w;
    NodeId err = tape.square(tape.sub(pred, tape.constant(targets)));
    NodeId masked = tape.multiply(err, tape.constant(validity));
    NodeId loss = tape.multiply(tape.sum(masked), tape.constant(Tensor::full({1}, 1.0 / denom)));

    GradientMap gm = tape.backward(loss);
    StreamLoss out;
    out.value = tape.value(loss).item();
    for (const auto& [name, id] : net_nodes)
        out.grads.emplace(std::string(net_name) + "/" + name, gm.at(id));
    if (mixer)
        for (const auto& [name, id] : mixer_nodes)
            out.grads.emplace(std::string(mixer_name) + "/" + name, gm.at(id));
    return out;
}

GradStore zero_grads(LearnerState& learner) {
    GradStore grads;
    for (auto stream : learner.streams())
        for (const auto& [name, value] : stream.online->entries())
            grads.emplace(std::string(stream.name) + "/" + name, Tensor::zeros(value.shape()));
    return grads;
}

}  // namespace

LossReport compute_losses(const LearnerState& learner, const PaddedBatch& batch, double gamma) {
    LearnerState& ls = const_cast<LearnerState&>(learner);  // streams() is logically const
    const bool ctde = is_ctde(learner.kind);
    const ParameterSet* q_mix_t = ctde ? &learner.q_mixer_target : nullptr;
    const ParameterSet* v_mix_t = ctde ? &learner.v_mixer_target : nullptr;
    const MixerSpec* mspec = ctde ? &learner.mixer_spec : nullptr;

    LossReport report;
    report.has_v = has_v_stream(learner.kind);

    const int state_dim = ctde ? learner.mixer_spec.state_dim : 1;
    AssembledBatch ab = assemble(batch, learner.q_spec, state_dim);
    if (ab.valid_count == 0) {
        report.grads = zero_grads(ls);
        return report;
    }

    Tensor q_targets, v_targets;
    switch (learner.kind) {
        case AlgorithmKind::IQL:
        case AlgorithmKind::QMIX:
            q_targets = td_target_q_max(batch, learner.q_net_target, learner.q_spec, q_mix_t,
                                        mspec, gamma);
            break;
        case AlgorithmKind::IQV:
        case AlgorithmKind::QVMIX:
            // One shared array: the Q loss regresses onto the V-stream target.
            v_targets = td_target_v(batch, learner.v_net_target, learner.v_spec, v_mix_t, mspec,
                                    gamma);
            q_targets = v_targets;
            break;
        case AlgorithmKind::IQV_MAX:
        case AlgorithmKind::QVMIX_MAX:
            q_targets = td_target_v(batch, learner.v_net_target, learner.v_spec, v_mix_t, mspec,
                                    gamma);
            v_targets = td_target_dqv_max_v(batch, learner.q_net_target, learner.q_spec, q_mix_t,
                                            mspec, gamma);
            break;
    }

    StreamLoss q = stream_loss(ab, q_targets, /*gather_q=*/true, learner.q_net, learner.q_spec,
                               ctde ? &learner.q_mixer : nullptr, mspec, "q_net", "q_mixer");
    report.loss_q = q.value;
    report.grads = std::move(q.grads);

    if (report.has_v) {
        StreamLoss v = stream_loss(ab, v_targets, /*gather_q=*/false, learner.v_net,
                                   learner.v_spec, ctde ? &learner.v_mixer : nullptr, mspec,
                                   "v_net", "v_mixer");
        report.loss_v = v.value;
        report.grads.merge(v.grads);
    }
    return report;
}

void optimizer_step(LearnerState& learner, const GradStore& grads, double lr) {
    for (auto stream : learner.streams()) {
        for (const auto& [name, value] : stream.online->entries()) {
            const std::string key = std::string(stream.name) + "/" + name;
            auto it = grads.find(key);
            if (it == grads.end())
                throw ValidationError("gradient missing for " + key);
            const Tensor& g = it->second;
            if (!g.same_shape(value)) throw ShapeError("gradient shape mismatch for " + key);
            if (!g.all_finite())
                throw DivergenceError("non-finite gradient in " + key +
                                      "; aborting before corrupting parameters");
            Tensor& s = learner.opt_ms.try_emplace(key, Tensor::zeros(value.shape())).first->second;
            Tensor next = value;
            for (std::int64_t i = 0; i < next.numel(); ++i) {
                const double gi = g.data()[i];
                s.data()[i] = 0.99 * s.data()[i] + 0.01 * gi * gi;
                next.data()[i] -= lr * gi / (std::sqrt(s.data()[i]) + 1e-5);
            }
            stream.online->set(name, std::move(next));
        }
    }
    ++learner.updates;
}

void maybe_update_targets(LearnerState& learner, int period) {
    if (period < 1) throw ValidationError("target update period must be >= 1");
    if (learner.updates % period != 0) return;
    for (auto stream : learner.streams()) *stream.target = *stream.online;
}

ActionSelection select_actions(const LearnerState& learner, const std::vector<Tensor>& obs,
                               const std::vector<ActionMask>& masks,
                               const std::vector<RecurrentState>& hidden, double epsilon,
                               Rng& rng) {
    const int n = learner.q_spec.n_agents;
    if (static_cast<int>(obs.size()) != n || static_cast<int>(masks.size()) != n ||
        static_cast<int>(hidden.size()) != n)
        throw ValidationError("select_actions needs obs, masks and hidden for every agent");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must be in [0,1]");

    ActionSelection out;
    for (int a = 0; a < n; ++a) {
        const ActionMask& mask = masks[static_cast<size_t>(a)];
        if (static_cast<int>(mask.size()) != learner.q_spec.n_actions)
            throw ValidationError("mask width mismatches the action space");
        AgentStepResult step = agent_step(learner.q_net, learner.q_spec, obs[static_cast<size_t>(a)],
                                          hidden[static_cast<size_t>(a)].prev_action, a,
                                          hidden[static_cast<size_t>(a)]);
        int action = -1;
        if (rng.uniform() < epsilon) {
            std::vector<int> open;
            for (size_t u = 0; u < mask.size(); ++u)
                if (mask[u]) open.push_back(static_cast<int>(u));
            if (open.empty()) throw EmptyReductionError("agent has no unmasked action");
            action = open[static_cast<size_t>(rng.uniform_int(open.size()))];
        } else {
            double best = 0.0;
            for (size_t u = 0; u < mask.size(); ++u) {
                if (!mask[u]) continue;
                const double v = step.head_values.data()[u];
                if (action < 0 || v > best) {
                    action = static_cast<int>(u);
                    best = v;
                }
            }
            if (action < 0) throw EmptyReductionError("agent has no unmasked action");
        }
        step.next.prev_action = action;  // feeds the next step's input one-hot
        out.actions.push_back(action);
        out.next_hidden.push_back(std::move(step.next));
    }
    return out;
}

ParameterSet checkpoint_params(const LearnerState& learner) {
    LearnerState& ls = const_cast<LearnerState&>(learner);
    ParameterSet flat;
    for (auto stream : ls.streams()) {
        for (const auto& [name, value] : stream.online->entries())
            flat.add(std::string(stream.name) + "/" + name, value);
        for (const auto& [name, value] : stream.target->entries())
            flat.add(std::string(stream.name) + ".target/" + name, value);
    }
    std::vector<std::string> opt_keys;
    for (const auto& [key, value] : learner.opt_ms) opt_keys.push_back(key);
    std::sort(opt_keys.begin(), opt_keys.end());
    for (const std::string& key : opt_keys) flat.add("opt/" + key, learner.opt_ms.at(key));
    flat.add("meta/updates", Tensor::full({1}, static_cast<double>(learner.updates)));
    return flat;
}

void load_learner_params(LearnerState& learner, const ParameterSet& flat) {
    auto pull = [&](ParameterSet& into, const std::string& name, const std::string& key) {
        if (!flat.has(key)) throw ValidationError("checkpoint misses " + key);
        if (flat.at(key).shape() != into.at(name).shape())
            throw ValidationError("checkpoint entry " + key +
                                  " does not match the learner's dimensions");
        into.set(name, flat.at(key));
    };
    for (auto stream : learner.streams()) {
        for (const auto& [name, value] : stream.online->entries())
            pull(*stream.online, name, std::string(stream.name) + "/" + name);
        for (const auto& [name, value] : stream.target->entries())
            pull(*stream.target, name, std::string(stream.name) + ".target/" + name);
    }
    learner.opt_ms.clear();
    for (const auto& [name, value] : flat.entries())
        if (name.rfind("opt/", 0) == 0) learner.opt_ms.emplace(name.substr(4), value);
    if (!flat.has("meta/updates")) throw ValidationError("checkpoint misses meta/updates");
    learner.updates = static_cast<std::int64_t>(flat.at("meta/updates").item());
}

}  // namespace qvl
