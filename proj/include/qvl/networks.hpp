#pragma once

#include <cstdint>

#include "qvl/grad_check.hpp"
#include "qvl/params.hpp"
#include "qvl/rng.hpp"
#include "qvl/tape.hpp"

namespace qvl {

enum class HeadKind { q, v };

// One shared network per stream; agents are told apart only by the one-hot
// id (and one-hot previous action) appended to their observation.
struct AgentNetSpec {
    int obs_dim = 0;
    int n_actions = 0;
    int n_agents = 0;
    int hidden_dim = 64;
    HeadKind head = HeadKind::q;

    int input_dim() const { return obs_dim + n_actions + n_agents; }
    int out_dim() const { return head == HeadKind::q ? n_actions : 1; }
};

// Hidden state of one agent's recurrent torso plus the action it took last
// step (-1 before the first step, encoding the all-zero one-hot).
struct RecurrentState {
    Tensor hidden;        // {hidden_dim}
    int prev_action = -1;
};

RecurrentState initial_state(const AgentNetSpec& spec);

struct MixerSpec {
    int n_agents = 0;
    int state_dim = 0;
    int embed_dim = 32;
    int hypernet_hidden = 64;
};

// Layer layout (names are the ParameterSet entry keys):
//   agent net: fc_in.{w,b} -> relu -> gru.{wx,wh,b} -> head.{w,b}
//   mixer: four hypernetworks hyp_w1, hyp_b1, hyp_w2, hyp_b2, each
//   state -> relu hidden (hypernet_hidden wide) -> linear out.
//   hyp_w1/hyp_w2 outputs pass through abs to keep mixing weights >= 0;
//   the final offset hyp_b2 is unconstrained.
ParameterSet init_agent_net(const AgentNetSpec& spec, Rng& rng);
ParameterSet init_mixer(const MixerSpec& spec, Rng& rng);

// Batched graph builders. Rows may pack (episode, agent) pairs; each builder
// appends to the tape and returns output node ids.
struct AgentStepNodes {
    NodeId head;    // {rows, out_dim}
    NodeId hidden;  // {rows, hidden_dim}
};
AgentStepNodes agent_cell_graph(Tape& tape, const NodeMap& params, const AgentNetSpec& spec,
                                NodeId x, NodeId h);

// values {B, n_agents} + state {B, state_dim} -> {B, 1}
NodeId mixer_graph(Tape& tape, const NodeMap& params, const MixerSpec& spec,
                   NodeId values, NodeId state);

// Single-sample evaluation used during rollouts.
struct AgentStepResult {
    Tensor head_values;  // {out_dim}
    RecurrentState next;
};
AgentStepResult agent_step(const ParameterSet& params, const AgentNetSpec& spec, const Tensor& obs,
                           int prev_action, int agent_id, const RecurrentState& hidden);

double mixer_forward(const ParameterSet& params, const MixerSpec& spec,
                     const Tensor& per_agent_values, const Tensor& state);

// Samples n_trials random (state, values) pairs and returns the worst
// observed mix(values + delta*e_a) - mix(values) over all agents. Anything
// below -1e-9 means the positivity construction is broken.
double check_monotonicity(const ParameterSet& params, const MixerSpec& spec, int n_trials,
                          double delta, std::uint64_t seed);

// Brute-force IGM check: the per-agent greedy tuple (first index on ties)
// must be the lexicographically-first argmax over all joint actions of the
// mixed value, or tie its maximum exactly. The tie branch covers relu-flat
// mixers, where every joint mixes to the same number.
bool check_igm(const ParameterSet& params, const MixerSpec& spec, const Tensor& q_values_per_agent,
               const Tensor& state);

}  // namespace qvl
