#include "qvl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "qvl/errors.hpp"

namespace qvl {

NodeMap bind_params(Tape& tape, const ParameterSet& ps, bool requires_grad) {
    NodeMap m;
    m.reserve(ps.size());
    for (const auto& [name, t] : ps.entries()) m.emplace(name, tape.leaf(t, requires_grad));
    return m;
}

namespace {

double eval_loss(const ParameterSet& params, const GraphBuilder& build) {
    Tape tape;
    NodeMap ids = bind_params(tape, params, false);
    NodeId loss = build(tape, ids);
    return tape.value(loss).item();
}

}  // namespace

GradCheckReport grad_check(const ParameterSet& params, const GraphBuilder& build, double epsilon) {
    // Deterministic construction check: same params, two fresh builds.
    Tape tape;
    NodeMap ids = bind_params(tape, params, true);
    NodeId loss = build(tape, ids);
    const double base = tape.value(loss).item();
    const double base2 = eval_loss(params, build);
    if (std::memcmp(&base, &base2, sizeof(double)) != 0) {
        throw NondeterminismError("graph builder produced different losses on identical inputs");
    }

    GradientMap gm = tape.backward(loss);

    GradCheckReport report;
    ParameterSet work;
    for (const auto& [name, t] : params.entries()) work.add(name, t);

    for (const auto& [name, t] : params.entries()) {
        const NodeId leaf = ids.at(name);
        const Tensor& analytic = gm.at(leaf);
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            Tensor bumped = t;
            bumped.at(i) = t.at(i) + epsilon;
            work.set(name, bumped);
            const double up = eval_loss(work, build);
            bumped.at(i) = t.at(i) - epsilon;
            work.set(name, bumped);
            const double down = eval_loss(work, build);
            work.set(name, t);

            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic.at(i);
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_entry = name + "[" + std::to_string(i) + "]";
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace qvl
