#include "qvl/matrix_game.hpp"

#include <string>

#include "qvl/errors.hpp"

namespace qvl {
namespace {

ResetResult constant_outputs(const DecPomdpSpec& spec) {
    ResetResult r;
    r.state = Tensor::full({1}, 1.0);
    r.obs.assign(2, Tensor::full({1}, 1.0));
    r.masks.assign(2, ActionMask(static_cast<size_t>(spec.n_actions), 1));
    return r;
}

}  // namespace

MatrixGame::MatrixGame(const Tensor& payoff, double gamma) : payoff_(payoff) {
    if (payoff.rank() != 2 || payoff.dim(0) != payoff.dim(1) || payoff.dim(0) < 1)
        throw ShapeError("matrix game payoff must be a square table, got " +
                         shape_str(payoff.shape()));
    double lo = payoff_.data()[0];
    for (std::int64_t i = 0; i < payoff_.numel(); ++i) lo = std::min(lo, payoff_.data()[i]);
    if (lo < 0.0)
        for (std::int64_t i = 0; i < payoff_.numel(); ++i) payoff_.data()[i] -= lo;
    max_payoff_ = payoff_.data()[0];
    for (std::int64_t i = 0; i < payoff_.numel(); ++i)
        max_payoff_ = std::max(max_payoff_, payoff_.data()[i]);

    spec_.n_agents = 2;
    spec_.state_dim = 1;
    spec_.obs_dim = 1;
    spec_.n_actions = static_cast<int>(payoff.dim(0));
    spec_.gamma = gamma;
    spec_.episode_limit = 1;
    validate_spec(spec_);
}

Tensor MatrixGame::default_payoff() {
    return Tensor::from_data({3, 3}, {8, 0, 0, 0, 6, 6, 0, 6, 6});
}

ResetResult MatrixGame::reset(std::uint64_t) {
    done_ = false;
    return constant_outputs(spec_);
}

StepResult MatrixGame::step(const std::vector<int>& joint_action) {
    if (done_) throw ValidationError("matrix game stepped after the episode ended");
    if (joint_action.size() != 2)
        throw ValidationError("matrix game expects 2 actions, got " +
                              std::to_string(joint_action.size()));
    for (int u : joint_action)
        if (u < 0 || u >= spec_.n_actions)
            throw IllegalActionError("action " + std::to_string(u) + " out of range");
    done_ = true;

    ResetResult c = constant_outputs(spec_);
    StepResult r;
    r.reward = payoff_.at(joint_action[0], joint_action[1]);
    r.next_state = std::move(c.state);
    r.next_obs = std::move(c.obs);
    r.next_masks = std::move(c.masks);
    r.terminated = true;
    r.truncated = false;
    r.win = r.reward == max_payoff_;
    return r;
}

ExactJointQ exact_joint_q(const Tensor& payoff, double /*gamma: single step, no bootstrap*/) {
    if (payoff.rank() != 2 || payoff.dim(0) != payoff.dim(1) || payoff.dim(0) < 1)
        throw ShapeError("payoff must be a square table, got " + shape_str(payoff.shape()));
    ExactJointQ out;
    const std::int64_t A = payoff.dim(0);
    out.value = payoff.at(0, 0);
    for (std::int64_t u0 = 0; u0 < A; ++u0)
        for (std::int64_t u1 = 0; u1 < A; ++u1) out.value = std::max(out.value, payoff.at(u0, u1));
    for (std::int64_t u0 = 0; u0 < A; ++u0)
        for (std::int64_t u1 = 0; u1 < A; ++u1)
            if (payoff.at(u0, u1) == out.value)
                out.argmax.emplace_back(static_cast<int>(u0), static_cast<int>(u1));
    return out;
}

}  // namespace qvl
