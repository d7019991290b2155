#pragma once

#include <utility>
#include <vector>

#include "qvl/env.hpp"

namespace qvl {

// Two agents pick one action each, collect payoff[u0][u1], episode over.
// Tables with negative entries are shifted up so the minimum is zero. State
// and observations are the constant vector {1.0}; every action is always
// available. The win flag marks joint actions achieving the table maximum.
class MatrixGame : public Env {
  public:
    explicit MatrixGame(const Tensor& payoff, double gamma = 0.99);

    const DecPomdpSpec& spec() const override { return spec_; }
    ResetResult reset(std::uint64_t seed) override;
    StepResult step(const std::vector<int>& joint_action) override;

    const Tensor& payoff() const { return payoff_; }

    // [[8,0,0],[0,6,6],[0,6,6]]: one high payoff in a narrow corner, a wide
    // basin of medium payoffs elsewhere.
    static Tensor default_payoff();

  private:
    DecPomdpSpec spec_;
    Tensor payoff_;
    double max_payoff_ = 0.0;
    bool done_ = true;
};

struct ExactJointQ {
    double value = 0.0;
    std::vector<std::pair<int, int>> argmax;  // lexicographic order
};

// Brute-force oracle over all joint actions of a single-step matrix game.
ExactJointQ exact_joint_q(const Tensor& payoff, double gamma);

}  // namespace qvl
