#include "qvl/networks.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qvl/errors.hpp"

namespace qvl {
namespace {

Tensor uniform_tensor(Rng& rng, const Shape& shape, double bound) {
    Tensor t = Tensor::zeros(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform_range(-bound, bound);
    return t;
}

// One linear layer, torch-style uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
void add_linear(ParameterSet& ps, Rng& rng, const std::string& name, int fan_in, int fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    ps.add(name + ".w", uniform_tensor(rng, {fan_in, fan_out}, bound));
    ps.add(name + ".b", uniform_tensor(rng, {fan_out}, bound));
}

void check_agent_spec(const AgentNetSpec& spec) {
    if (spec.obs_dim <= 0 || spec.n_actions <= 0 || spec.n_agents <= 0 || spec.hidden_dim <= 0)
        throw ValidationError("agent net spec has non-positive dimensions");
}

void check_mixer_spec(const MixerSpec& spec) {
    if (spec.n_agents <= 0 || spec.state_dim <= 0 || spec.embed_dim <= 0 ||
        spec.hypernet_hidden <= 0)
        throw ValidationError("mixer spec has non-positive dimensions");
}

// state {B, S} -> {B, out}, relu hidden in between.
NodeId hyper_out(Tape& tape, const NodeMap& params, const std::string& prefix, NodeId state) {
    NodeId h = tape.relu(tape.add(tape.matmul(state, params.at(prefix + ".l1.w")),
                                  params.at(prefix + ".l1.b")));
    return tape.add(tape.matmul(h, params.at(prefix + ".l2.w")), params.at(prefix + ".l2.b"));
}

}  // namespace

RecurrentState initial_state(const AgentNetSpec& spec) {
    check_agent_spec(spec);
    return RecurrentState{Tensor::zeros({spec.hidden_dim}), -1};
}

ParameterSet init_agent_net(const AgentNetSpec& spec, Rng& rng) {
    check_agent_spec(spec);
    const int in = spec.input_dim();
    const int H = spec.hidden_dim;
    ParameterSet ps;
    add_linear(ps, rng, "fc_in", in, H);
    const double gb = 1.0 / std::sqrt(static_cast<double>(H));
    ps.add("gru.wx", uniform_tensor(rng, {H, 3 * H}, gb));
    ps.add("gru.wh", uniform_tensor(rng, {H, 3 * H}, gb));
    ps.add("gru.b", uniform_tensor(rng, {3 * H}, gb));
    add_linear(ps, rng, "head", H, spec.out_dim());
    return ps;
}

ParameterSet init_mixer(const MixerSpec& spec, Rng& rng) {
    check_mixer_spec(spec);
    const int S = spec.state_dim;
    const int hh = spec.hypernet_hidden;
    ParameterSet ps;
    add_linear(ps, rng, "hyp_w1.l1", S, hh);
    add_linear(ps, rng, "hyp_w1.l2", hh, spec.n_agents * spec.embed_dim);
    add_linear(ps, rng, "hyp_b1.l1", S, hh);
    add_linear(ps, rng, "hyp_b1.l2", hh, spec.embed_dim);
    add_linear(ps, rng, "hyp_w2.l1", S, hh);
    add_linear(ps, rng, "hyp_w2.l2", hh, spec.embed_dim);
    add_linear(ps, rng, "hyp_b2.l1", S, hh);
    add_linear(ps, rng, "hyp_b2.l2", hh, 1);
    return ps;
}

AgentStepNodes agent_cell_graph(Tape& tape, const NodeMap& params, const AgentNetSpec& spec,
                                NodeId x, NodeId h) {
    const int H = spec.hidden_dim;
    NodeId a1 = tape.relu(tape.add(tape.matmul(x, params.at("fc_in.w")), params.at("fc_in.b")));
    NodeId xg = tape.add(tape.matmul(a1, params.at("gru.wx")), params.at("gru.b"));
    NodeId hg = tape.matmul(h, params.at("gru.wh"));
    NodeId z = tape.sigmoid(tape.add(tape.slice(xg, 0, H), tape.slice(hg, 0, H)));
    NodeId r = tape.sigmoid(tape.add(tape.slice(xg, H, H), tape.slice(hg, H, H)));
    NodeId c = tape.tanh(tape.add(tape.slice(xg, 2 * H, H),
                                  tape.multiply(r, tape.slice(hg, 2 * H, H))));
    NodeId h_next = tape.add(h, tape.multiply(z, tape.sub(c, h)));
    NodeId head = tape.add(tape.matmul(h_next, params.at("head.w")), params.at("head.b"));
    return AgentStepNodes{head, h_next};
}

NodeId mixer_graph(Tape& tape, const NodeMap& params, const MixerSpec& spec, NodeId values,
                   NodeId state) {
    const int n = spec.n_agents;
    const int E = spec.embed_dim;

    NodeId w1 = tape.abs(hyper_out(tape, params, "hyp_w1", state));  // {B, n*E}
    NodeId b1 = hyper_out(tape, params, "hyp_b1", state);            // {B, E}
    NodeId w2 = tape.abs(hyper_out(tape, params, "hyp_w2", state));  // {B, E}
    NodeId b2 = hyper_out(tape, params, "hyp_b2", state);            // {B, 1}

    // Replicate each agent value E times, scale by its mixing weights, then
    // segment-sum back to embed width. Both helper matrices are constants,
    // so the whole thing stays a chain of matmul/multiply/add.
    Tensor rep = Tensor::zeros({n, n * E});
    Tensor seg = Tensor::zeros({n * E, E});
    for (int a = 0; a < n; ++a)
        for (int e = 0; e < E; ++e) {
            rep.at(a, a * E + e) = 1.0;
            seg.at(a * E + e, e) = 1.0;
        }
    NodeId v_rep = tape.matmul(values, tape.constant(rep));            // {B, n*E}
    NodeId hidden_pre = tape.add(tape.matmul(tape.multiply(v_rep, w1), tape.constant(seg)), b1);
    NodeId hidden = tape.relu(hidden_pre);                             // {B, E}
    NodeId dot = tape.matmul(tape.multiply(hidden, w2),
                             tape.constant(Tensor::full({E, 1}, 1.0)));  // {B, 1}
    return tape.add(dot, b2);
}

AgentStepResult agent_step(const ParameterSet& params, const AgentNetSpec& spec, const Tensor& obs,
                           int prev_action, int agent_id, const RecurrentState& hidden) {
    check_agent_spec(spec);
    if (obs.shape() != Shape{spec.obs_dim})
        throw ShapeError("agent_step: obs must be {" + std::to_string(spec.obs_dim) + "}, got " +
                         shape_str(obs.shape()));
    if (hidden.hidden.shape() != Shape{spec.hidden_dim})
        throw ShapeError("agent_step: hidden has wrong shape " + shape_str(hidden.hidden.shape()));
    if (prev_action < -1 || prev_action >= spec.n_actions)
        throw ValidationError("agent_step: prev_action " + std::to_string(prev_action) +
                              " out of range");
    if (agent_id < 0 || agent_id >= spec.n_agents)
        throw ValidationError("agent_step: agent_id " + std::to_string(agent_id) + " out of range");

    Tensor x = Tensor::zeros({1, spec.input_dim()});
    for (int i = 0; i < spec.obs_dim; ++i) x.data()[i] = obs.data()[i];
    if (prev_action >= 0) x.data()[spec.obs_dim + prev_action] = 1.0;
    x.data()[spec.obs_dim + spec.n_actions + agent_id] = 1.0;

    Tape tape;
    NodeMap nodes = bind_params(tape, params, /*requires_grad=*/false);
    AgentStepNodes out = agent_cell_graph(tape, nodes, spec, tape.constant(x),
                                          tape.constant(hidden.hidden.reshaped({1, spec.hidden_dim})));
    AgentStepResult res{tape.value(out.head).reshaped({spec.out_dim()}),
                        RecurrentState{tape.value(out.hidden).reshaped({spec.hidden_dim}),
                                       prev_action}};
    return res;
}

double mixer_forward(const ParameterSet& params, const MixerSpec& spec,
                     const Tensor& per_agent_values, const Tensor& state) {
    check_mixer_spec(spec);
    if (per_agent_values.shape() != Shape{spec.n_agents})
        throw ShapeError("mixer_forward: values must be {" + std::to_string(spec.n_agents) +
                         "}, got " + shape_str(per_agent_values.shape()));
    if (state.shape() != Shape{spec.state_dim})
        throw ShapeError("mixer_forward: state must be {" + std::to_string(spec.state_dim) +
                         "}, got " + shape_str(state.shape()));
    Tape tape;
    NodeMap nodes = bind_params(tape, params, /*requires_grad=*/false);
    NodeId out = mixer_graph(tape, nodes, spec, tape.constant(per_agent_values.reshaped({1, spec.n_agents})),
                             tape.constant(state.reshaped({1, spec.state_dim})));
    return tape.value(out).item();
}

double check_monotonicity(const ParameterSet& params, const MixerSpec& spec, int n_trials,
                          double delta, std::uint64_t seed) {
    check_mixer_spec(spec);
    if (n_trials <= 0) throw ValidationError("check_monotonicity: n_trials must be positive");
    const int n = spec.n_agents;
    Rng rng(seed);
    double worst = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < n_trials; ++trial) {
        Tensor state_row = Tensor::zeros({spec.state_dim});
        for (std::int64_t i = 0; i < state_row.numel(); ++i)
            state_row.data()[i] = rng.uniform_range(-1.0, 1.0);
        Tensor base = Tensor::zeros({n});
        for (int a = 0; a < n; ++a) base.data()[a] = rng.uniform_range(-2.0, 2.0);

        // One batched eval per trial: row 0 is the base point, row a+1 bumps
        // agent a's value by delta.
        Tensor values = Tensor::zeros({n + 1, n});
        Tensor state = Tensor::zeros({n + 1, spec.state_dim});
        for (int row = 0; row < n + 1; ++row) {
            for (int a = 0; a < n; ++a) values.at(row, a) = base.data()[a];
            if (row > 0) values.at(row, row - 1) += delta;
            for (int s = 0; s < spec.state_dim; ++s) state.at(row, s) = state_row.data()[s];
        }
        Tape tape;
        NodeMap nodes = bind_params(tape, params, /*requires_grad=*/false);
        NodeId out = mixer_graph(tape, nodes, spec, tape.constant(values), tape.constant(state));
        const Tensor& mixed = tape.value(out);
        for (int a = 0; a < n; ++a) {
            double diff = mixed.data()[a + 1] - mixed.data()[0];
            if (diff < worst) worst = diff;
        }
    }
    return worst;
}

bool check_igm(const ParameterSet& params, const MixerSpec& spec, const Tensor& q_values_per_agent,
               const Tensor& state) {
    check_mixer_spec(spec);
    const int n = spec.n_agents;
    if (q_values_per_agent.rank() != 2 || q_values_per_agent.dim(0) != n)
        throw ShapeError("check_igm: q values must be {n_agents, n_actions}, got " +
                         shape_str(q_values_per_agent.shape()));
    if (state.shape() != Shape{spec.state_dim})
        throw ShapeError("check_igm: state must be {" + std::to_string(spec.state_dim) + "}");
    const std::int64_t A = q_values_per_agent.dim(1);
    double joint_count = std::pow(static_cast<double>(A), static_cast<double>(n));
    if (joint_count > 1e6)
        throw TooLargeError("check_igm: " + std::to_string(A) + "^" + std::to_string(n) +
                            " joint actions exceed the 1e6 enumeration cap");
    const std::int64_t total = static_cast<std::int64_t>(joint_count + 0.5);

    // Per-agent greedy actions, first index on ties.
    std::vector<std::int64_t> greedy(static_cast<size_t>(n), 0);
    for (int a = 0; a < n; ++a) {
        double best = q_values_per_agent.at(a, 0);
        for (std::int64_t u = 1; u < A; ++u)
            if (q_values_per_agent.at(a, u) > best) {
                best = q_values_per_agent.at(a, u);
                greedy[static_cast<size_t>(a)] = u;
            }
    }

    std::int64_t greedy_index = 0;
    for (int a = 0; a < n; ++a) greedy_index = greedy_index * A + greedy[static_cast<size_t>(a)];

    // Joint argmax by brute force, evaluated in chunks so the tape for huge
    // action spaces stays bounded. Enumeration order is lexicographic with
    // agent 0 as the most significant digit, so the first strict max matches
    // the lowest-index tie rule.
    std::int64_t best_joint = 0;
    double best_value = 0.0;
    double greedy_value = 0.0;
    bool have_best = false;
    const std::int64_t chunk = 8192;
    std::vector<std::int64_t> digits(static_cast<size_t>(n), 0);
    for (std::int64_t begin = 0; begin < total; begin += chunk) {
        const std::int64_t rows = std::min(chunk, total - begin);
        Tensor values = Tensor::zeros({rows, n});
        Tensor states = Tensor::zeros({rows, spec.state_dim});
        for (std::int64_t row = 0; row < rows; ++row) {
            std::int64_t j = begin + row;
            for (int a = n - 1; a >= 0; --a) {
                digits[static_cast<size_t>(a)] = j % A;
                j /= A;
            }
            for (int a = 0; a < n; ++a)
                values.at(row, a) = q_values_per_agent.at(a, digits[static_cast<size_t>(a)]);
            for (std::int64_t s = 0; s < spec.state_dim; ++s)
                states.at(row, s) = state.data()[s];
        }
        Tape tape;
        NodeMap nodes = bind_params(tape, params, /*requires_grad=*/false);
        NodeId out = mixer_graph(tape, nodes, spec, tape.constant(values), tape.constant(states));
        const Tensor& mixed = tape.value(out);
        for (std::int64_t row = 0; row < rows; ++row) {
            if (!have_best || mixed.data()[row] > best_value) {
                best_value = mixed.data()[row];
                best_joint = begin + row;
                have_best = true;
            }
            if (begin + row == greedy_index) greedy_value = mixed.data()[row];
        }
    }

    for (int a = n - 1; a >= 0; --a) {
        digits[static_cast<size_t>(a)] = best_joint % A;
        best_joint /= A;
    }
    bool same_tuple = true;
    for (int a = 0; a < n; ++a)
        if (digits[static_cast<size_t>(a)] != greedy[static_cast<size_t>(a)]) same_tuple = false;
    // A relu-flat mixer ties every joint exactly; the greedy tuple then loses
    // the lexicographic race but still attains the maximum, which is all the
    // greedy-into-mixer max computation relies on.
    return same_tuple || greedy_value == best_value;
}

}  // namespace qvl
