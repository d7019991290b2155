#include "qvl/env.hpp"

#include "json.hpp"
#include "qvl/errors.hpp"

namespace qvl {

void validate_spec(const DecPomdpSpec& spec) {
    if (spec.n_agents <= 0 || spec.state_dim <= 0 || spec.obs_dim <= 0 || spec.n_actions <= 0 ||
        spec.episode_limit <= 0)
        throw ValidationError("environment spec has non-positive dimensions");
    if (!(spec.gamma >= 0.0 && spec.gamma < 1.0))
        throw ValidationError("gamma must lie in [0,1)");
}

void append_trace_line(std::ostream& out, int t, const Tensor& state,
                       const std::vector<int>& actions, double reward,
                       const std::vector<ActionMask>& masks) {
    nlohmann::json line;
    line["t"] = t;
    line["state"] = std::vector<double>(state.data(), state.data() + state.numel());
    line["actions"] = actions;
    line["reward"] = reward;
    nlohmann::json mask_rows = nlohmann::json::array();
    for (const ActionMask& m : masks) mask_rows.push_back(std::vector<int>(m.begin(), m.end()));
    line["masks"] = std::move(mask_rows);
    out << line.dump() << "\n";
}

}  // namespace qvl
