#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "qvl/env.hpp"
#include "qvl/networks.hpp"
#include "qvl/params.hpp"
#include "qvl/replay.hpp"
#include "qvl/rng.hpp"

namespace qvl {

enum class AlgorithmKind { IQL, IQV, IQV_MAX, QMIX, QVMIX, QVMIX_MAX };

// CTDE kinds mix per-agent values through state-conditioned monotonic
// mixers during training; FD kinds train on raw per-agent values.
bool is_ctde(AlgorithmKind kind);
// Kinds with a separate V network (trained per the DQV family rules).
bool has_v_stream(AlgorithmKind kind);
const char* algorithm_name(AlgorithmKind kind);
AlgorithmKind parse_algorithm(const std::string& name);  // ConfigError on unknown names

struct LearnerConfig {
    int hidden_dim = 64;
    int embed_dim = 32;
    int hypernet_hidden = 64;
    double lr = 5e-4;
    int target_period = 200;
    int batch_size = 32;
};

struct LearnerState {
    AlgorithmKind kind = AlgorithmKind::IQL;
    AgentNetSpec q_spec;
    AgentNetSpec v_spec;    // head = v; only meaningful when has_v_stream
    MixerSpec mixer_spec;   // only meaningful when is_ctde

    ParameterSet q_net, q_net_target;
    ParameterSet v_net, v_net_target;
    ParameterSet q_mixer, q_mixer_target;
    ParameterSet v_mixer, v_mixer_target;

    std::int64_t updates = 0;
    // RMS accumulators keyed "stream/entry", created lazily on first step.
    std::unordered_map<std::string, Tensor> opt_ms;

    // Online streams this kind maintains, as (name, online, target) rows.
    struct StreamRef {
        const char* name;
        ParameterSet* online;
        ParameterSet* target;
    };
    std::vector<StreamRef> streams();
};

LearnerState init_learner(AlgorithmKind kind, const DecPomdpSpec& env_spec,
                          const LearnerConfig& config, Rng& rng);

// ---- TD targets ------------------------------------------------------------
// All per-step arrays are time-major: row = t * batch_size + episode, one
// column per agent for FD kinds and a single mixed column for CTDE kinds.
// Terminal steps drop the bootstrap; truncated-at-limit steps keep it.
// Rows of padded steps are zero. A living agent whose next-step mask is all
// false raises EmptyReductionError.

// r_t + gamma * max_u Q(s_{t+1}, u; target). CTDE: mixer value at per-agent
// greedy actions (exact under the monotonic-mixer argmax consistency).
Tensor td_target_q_max(const PaddedBatch& batch, const ParameterSet& target_q,
                       const AgentNetSpec& q_spec, const ParameterSet* target_q_mixer,
                       const MixerSpec* mixer_spec, double gamma);

// r_t + gamma * V(s_{t+1}; target). Feeds both the V-loss and the Q-loss of
// the DQV-style kinds, which regress different predictions onto one array.
Tensor td_target_v(const PaddedBatch& batch, const ParameterSet& target_v,
                   const AgentNetSpec& v_spec, const ParameterSet* target_v_mixer,
                   const MixerSpec* mixer_spec, double gamma);

// Same array as td_target_q_max; regressed onto V(s_t) by the *_MAX kinds.
Tensor td_target_dqv_max_v(const PaddedBatch& batch, const ParameterSet& target_q,
                           const AgentNetSpec& q_spec, const ParameterSet* target_q_mixer,
                           const MixerSpec* mixer_spec, double gamma);

// ---- Loss assembly ---------------------------------------------------------
using GradStore = std::unordered_map<std::string, Tensor>;  // "stream/entry" keys

struct LossReport {
    double loss_q = 0.0;
    double loss_v = 0.0;
    bool has_v = false;
    GradStore grads;
};

// Unrolls online nets from zero hidden state over the padded batch, gathers
// chosen-action values, mixes them for CTDE kinds, and regresses onto the
// detached targets. Mean squared error over valid (step, agent) terms;
// an all-padded batch yields zero loss and zero gradients.
LossReport compute_losses(const LearnerState& learner, const PaddedBatch& batch, double gamma);

// RMS-style update: s <- 0.99 s + 0.01 g^2; x <- x - lr * g / (sqrt(s)+1e-5).
// Increments learner.updates. Missing entries in `grads` -> ValidationError;
// non-finite gradients -> DivergenceError.
void optimizer_step(LearnerState& learner, const GradStore& grads, double lr);

// Hard-copies online -> target for every stream when updates is a multiple
// of period. Call right after optimizer_step.
void maybe_update_targets(LearnerState& learner, int period);

// ---- Execution -------------------------------------------------------------
struct ActionSelection {
    std::vector<int> actions;
    std::vector<RecurrentState> next_hidden;
};

// Per agent, independently: with probability epsilon a uniform draw over
// unmasked actions, otherwise the masked argmax of the online Q head
// (lowest index on ties). Mixers and V nets never participate.
ActionSelection select_actions(const LearnerState& learner, const std::vector<Tensor>& obs,
                               const std::vector<ActionMask>& masks,
                               const std::vector<RecurrentState>& hidden, double epsilon,
                               Rng& rng);

// Checkpoint payload: every stream's online+target entries, the RMS
// accumulators, and the update counter, flattened into one ParameterSet
// with path-style names. load_learner_params restores in place and
// validates against the learner's architecture.
ParameterSet checkpoint_params(const LearnerState& learner);
void load_learner_params(LearnerState& learner, const ParameterSet& flat);

}  // namespace qvl
