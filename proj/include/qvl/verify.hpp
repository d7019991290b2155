#pragma once

#include <string>
#include <vector>

namespace qvl {

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;      // the measured quantity
    double threshold = 0.0;  // the bound it was held against
    std::string detail;
};

struct VerifyReport {
    std::string suite;
    bool passed = true;
    std::vector<CheckResult> checks;
};

// Applies the monotonicity rule (worst probed violation must stay above
// -1e-9) to a measured value; exposed so tests can feed it broken mixers.
CheckResult mixer_check(const std::string& name, double worst_violation);

// Finite-difference gradient fidelity over linear, recurrent-cell,
// hypernetwork, and full per-algorithm loss graphs.
VerifyReport verify_grad();
// Monotonicity probes on freshly initialised mixers and on a mixer taken
// from the final checkpoint of a short matrix-game training run.
VerifyReport verify_mixer();
// Brute-force joint argmax vs per-agent argmaxes on random mixers over
// 2-agent/3-action and 3-agent/5-action grids.
VerifyReport verify_igm();
// Repeats a small training run and compares metrics, checkpoints, and a
// checkpoint-reload evaluation for exact equality.
VerifyReport verify_determinism();

// suite in {grad, mixer, igm, determinism, all}; anything else is a
// ValidationError.
VerifyReport run_verify(const std::string& suite);

}  // namespace qvl
