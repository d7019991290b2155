#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "qvl/tensor.hpp"

namespace qvl {

struct DecPomdpSpec {
    int n_agents = 0;
    int state_dim = 0;
    int obs_dim = 0;
    int n_actions = 0;
    double gamma = 0.99;
    int episode_limit = 0;
};

// Throws ValidationError unless all dims are positive and gamma is in [0,1).
void validate_spec(const DecPomdpSpec& spec);

using ActionMask = std::vector<std::uint8_t>;

struct ResetResult {
    Tensor state;
    std::vector<Tensor> obs;
    std::vector<ActionMask> masks;
};

struct StepResult {
    double reward = 0.0;  // shared team reward, always >= 0
    Tensor next_state;
    std::vector<Tensor> next_obs;
    std::vector<ActionMask> next_masks;
    bool terminated = false;
    bool truncated = false;  // episode limit hit without a terminal state
    bool win = false;
};

class Env {
  public:
    virtual ~Env() = default;
    virtual const DecPomdpSpec& spec() const = 0;
    virtual ResetResult reset(std::uint64_t seed) = 0;
    // pre: every action unmasked for its agent, episode not finished.
    virtual StepResult step(const std::vector<int>& joint_action) = 0;
};

// One JSON object per line: {"t":..,"state":[..],"actions":[..],"reward":..,"masks":[[..]]}.
void append_trace_line(std::ostream& out, int t, const Tensor& state,
                       const std::vector<int>& actions, double reward,
                       const std::vector<ActionMask>& masks);

}  // namespace qvl
