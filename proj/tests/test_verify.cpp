#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "qvl/errors.hpp"
#include "qvl/rng.hpp"
#include "qvl/tensor.hpp"
#include "qvl/verify.hpp"

using namespace qvl;

namespace {

bool has_check(const VerifyReport& r, const std::string& name) {
    return std::any_of(r.checks.begin(), r.checks.end(),
                       [&](const CheckResult& c) { return c.name == name; });
}

}  // namespace

TEST_CASE("mixer_check applies the violation floor") {
    CHECK(mixer_check("x", 0.5).passed);
    CHECK(mixer_check("x", 0.0).passed);
    CHECK(mixer_check("x", -1e-10).passed);  // inside numerical slack
    CHECK_FALSE(mixer_check("x", -1e-8).passed);
    CHECK_FALSE(mixer_check("x", -0.5).passed);
    CheckResult c = mixer_check("mixer/example", -2.0);
    CHECK(c.name == "mixer/example");
    CHECK(c.value == -2.0);
    CHECK(c.threshold == -1e-9);
}

TEST_CASE("a sign-flipped mixer is flagged by the monotonicity rule") {
    // Raw two-layer mixing with the first-layer weights sign-flipped and the
    // abs guard bypassed: strictly decreasing in every agent value wherever
    // the hidden unit is active.
    auto flipped_mix = [](const Tensor& values) {
        double pre = 5.0;
        for (std::int64_t i = 0; i < values.numel(); ++i) pre -= values.data()[i];
        return std::max(0.0, pre);
    };
    Rng rng(9);
    const int n = 3;
    const double delta = 0.5;
    double worst = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 200; ++trial) {
        Tensor base = Tensor::zeros({n});
        for (int a = 0; a < n; ++a) base.data()[a] = rng.uniform_range(-2.0, 2.0);
        const double center = flipped_mix(base);
        for (int a = 0; a < n; ++a) {
            Tensor bumped = base;
            bumped.data()[a] += delta;
            worst = std::min(worst, flipped_mix(bumped) - center);
        }
    }
    CHECK(worst <= -delta + 1e-12);
    CHECK_FALSE(mixer_check("mixer/sign_flipped", worst).passed);
}

TEST_CASE("igm suite enumerates both grids cleanly") {
    VerifyReport r = verify_igm();
    CHECK(r.suite == "igm");
    CHECK(r.passed);
    REQUIRE(r.checks.size() == 2);
    CHECK(has_check(r, "igm/2x3"));
    CHECK(has_check(r, "igm/3x5"));
    for (const CheckResult& c : r.checks) CHECK(c.value == 0.0);
}

TEST_CASE("determinism suite replays a run exactly") {
    VerifyReport r = verify_determinism();
    CHECK(r.suite == "determinism");
    CHECK(r.passed);
    REQUIRE(r.checks.size() == 3);
    CHECK(has_check(r, "determinism/metrics_rerun"));
    CHECK(has_check(r, "determinism/checkpoint_rerun"));
    CHECK(has_check(r, "determinism/checkpoint_roundtrip"));
}

TEST_CASE("unknown suites are rejected") {
    CHECK_THROWS_AS(run_verify("everything"), ValidationError);
    CHECK_THROWS_AS(run_verify(""), ValidationError);
}

TEST_CASE("a fresh checkout passes the whole verify battery") {
    VerifyReport all = run_verify("all");
    CHECK(all.suite == "all");
    CHECK(all.passed);
    CHECK(all.checks.size() == 15);  // 7 grad + 3 mixer + 2 igm + 3 determinism
    for (const CheckResult& c : all.checks) {
        INFO(c.name, " value=", c.value);
        CHECK(c.passed);
    }
}
