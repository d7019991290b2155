#pragma once

#include <functional>
#include <string>
#include <unordered_map>

#include "qvl/params.hpp"
#include "qvl/tape.hpp"

namespace qvl {

// Map from parameter entry name to its leaf node on a tape.
using NodeMap = std::unordered_map<std::string, NodeId>;

// Binds every entry of ps as a leaf on the tape.
NodeMap bind_params(Tape& tape, const ParameterSet& ps, bool requires_grad);

// A graph builder receives a fresh tape plus the bound parameter leaves and
// returns the scalar loss node.
using GraphBuilder = std::function<NodeId(Tape&, const NodeMap&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_entry;   // "name[i]" of the worst element
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central finite differences against the tape's backward pass. Every element
// of every entry is perturbed by +/-epsilon with the graph rebuilt from
// scratch, so the check also exercises graph construction determinism: if two
// unperturbed builds disagree bitwise, NondeterminismError is thrown.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckReport grad_check(const ParameterSet& params, const GraphBuilder& build, double epsilon = 1e-5);

}  // namespace qvl
