#include <cstdint>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "qvl/errors.hpp"
#include "qvl/matrix_game.hpp"
#include "qvl/micro_combat.hpp"
#include "qvl/rng.hpp"

using namespace qvl;

namespace {

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

// Picks an arbitrary unmasked action, biased toward attacks so fights
// actually happen in the randomised soak tests.
int pick_unmasked(Rng& rng, const ActionMask& mask) {
    std::vector<int> attacks, others;
    for (size_t u = 0; u < mask.size(); ++u) {
        if (!mask[u]) continue;
        (u >= 5 ? attacks : others).push_back(static_cast<int>(u));
    }
    const std::vector<int>& pool =
        (!attacks.empty() && rng.uniform() < 0.7) ? attacks : others;
    return pool[static_cast<size_t>(rng.uniform_int(pool.size()))];
}

MicroCombatConfig duel_config() {
    // One ally facing one enemy across one cell; deterministic damage.
    MicroCombatConfig cfg;
    cfg.width = 6;
    cfg.height = 4;
    cfg.n_allies = 1;
    cfg.n_enemies = 1;
    cfg.health = 5;
    cfg.damage = 2;
    cfg.ally_spawns = {{2, 1}};
    cfg.enemy_spawns = {{3, 1}};
    return cfg;
}

}  // namespace

TEST_CASE("matrix game pays the table entry and flags maximal joint actions") {
    MatrixGame env(MatrixGame::default_payoff());
    CHECK(env.spec().n_agents == 2);
    CHECK(env.spec().n_actions == 3);
    CHECK(env.spec().episode_limit == 1);

    env.reset(0);
    StepResult r = env.step({0, 0});
    CHECK(r.reward == 8.0);
    CHECK(r.terminated);
    CHECK_FALSE(r.truncated);
    CHECK(r.win);

    env.reset(1);
    r = env.step({1, 2});
    CHECK(r.reward == 6.0);
    CHECK_FALSE(r.win);

    SUBCASE("constant state and obs, all actions legal") {
        ResetResult init = env.reset(7);
        CHECK(init.state.shape() == Shape{1});
        CHECK(init.state.data()[0] == 1.0);
        REQUIRE(init.obs.size() == 2);
        for (const Tensor& o : init.obs) CHECK(o.data()[0] == 1.0);
        for (const ActionMask& m : init.masks)
            for (std::uint8_t bit : m) CHECK(bit == 1);
    }
    SUBCASE("stepping a finished episode or an out-of-range action throws") {
        env.reset(2);
        env.step({2, 2});
        CHECK_THROWS_AS(env.step({0, 0}), ValidationError);
        env.reset(3);
        CHECK_THROWS_AS(env.step({0, 3}), IllegalActionError);
    }
    SUBCASE("symmetric table is agent-swap invariant") {
        Rng rng(17);
        Tensor table = Tensor::zeros({3, 3});
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                table.at(i, j) = rng.uniform_range(0.0, 5.0);
                table.at(j, i) = table.at(i, j);
            }
        MatrixGame sym(table);
        for (int u0 = 0; u0 < 3; ++u0)
            for (int u1 = 0; u1 < 3; ++u1) {
                sym.reset(0);
                double a = sym.step({u0, u1}).reward;
                sym.reset(0);
                double b = sym.step({u1, u0}).reward;
                CHECK(a == b);
            }
    }
    SUBCASE("negative tables are shifted to be non-negative") {
        MatrixGame shifted(Tensor::from_data({2, 2}, {-3.0, 1.0, 0.0, -1.0}));
        shifted.reset(0);
        CHECK(shifted.step({0, 0}).reward == 0.0);
        shifted.reset(0);
        CHECK(shifted.step({0, 1}).reward == 4.0);
    }
}

TEST_CASE("exact_joint_q enumerates the payoff table") {
    ExactJointQ best = exact_joint_q(MatrixGame::default_payoff(), 0.99);
    CHECK(best.value == 8.0);
    REQUIRE(best.argmax.size() == 1);
    CHECK(best.argmax[0] == std::pair<int, int>{0, 0});

    ExactJointQ zero = exact_joint_q(Tensor::zeros({3, 3}), 0.99);
    CHECK(zero.value == 0.0);
    CHECK(zero.argmax.size() == 9);

    Tensor tied = Tensor::from_data({2, 2}, {5.0, 1.0, 2.0, 5.0});
    ExactJointQ two = exact_joint_q(tied, 0.99);
    CHECK(two.value == 5.0);
    REQUIRE(two.argmax.size() == 2);
    CHECK(two.argmax[0] == std::pair<int, int>{0, 0});
    CHECK(two.argmax[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("micro combat reset is deterministic and well shaped") {
    MicroCombatConfig cfg;  // defaults: 8x8, 3 allies, 2 enemies
    MicroCombat env(cfg);
    CHECK(env.spec().n_agents == 3);
    CHECK(env.spec().n_actions == 7);
    CHECK(env.spec().obs_dim == (6 + 7) + 4 * 2 + (3 + 7) * 2);
    CHECK(env.spec().state_dim == 15);

    ResetResult a = env.reset(42);
    ResetResult b = env.reset(42);
    CHECK(tensors_equal(a.state, b.state));
    REQUIRE(a.obs.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(a.obs[i].shape() == Shape{env.spec().obs_dim});
        CHECK(tensors_equal(a.obs[i], b.obs[i]));
        CHECK(a.masks[i] == b.masks[i]);
    }
    ResetResult c = env.reset(43);
    bool any_diff = !tensors_equal(a.state, c.state);
    for (size_t i = 0; i < 3 && !any_diff; ++i) any_diff = !tensors_equal(a.obs[i], c.obs[i]);
    CHECK(any_diff);
}

TEST_CASE("attack reward equals health removed over total enemy health") {
    MicroCombat env(duel_config());
    ResetResult init = env.reset(0);
    // Adjacent enemy: attack action 5 must be unmasked.
    REQUIRE(init.masks[0][5] == 1);
    StepResult r = env.step({5});
    // 2 damage off a 5-health enemy, total enemy health 5.
    CHECK(r.reward == 2.0 / 5.0);
    CHECK_FALSE(r.terminated);
    CHECK_FALSE(r.win);

    SUBCASE("noop out of everyone's range gives zero reward") {
        MicroCombatConfig far = duel_config();
        far.ally_spawns = {{0, 0}};
        far.enemy_spawns = {{5, 3}};
        MicroCombat calm(far);
        calm.reset(0);
        StepResult s = calm.step({0});
        CHECK(s.reward == 0.0);
    }
}

TEST_CASE("killing the last enemy pays the final blow plus the win bonus") {
    MicroCombat env(duel_config());
    env.reset(0);
    double total = 0.0;
    StepResult r;
    // 5 health, 2 damage: three attacks finish it; the last removes only 1.
    for (int hit = 0; hit < 3; ++hit) {
        r = env.step({5});
        total += r.reward;
    }
    CHECK(r.terminated);
    CHECK(r.win);
    CHECK(r.reward == 1.0 / 5.0 + 1.0);
    // Conservation: normalised damage sums to exactly 1 on a full clear.
    CHECK(total == 5.0 / 5.0 + 1.0);
    CHECK_THROWS_AS(env.step({0}), ValidationError);
}

TEST_CASE("enemy script closes the gap x-first and then trades blows") {
    MicroCombatConfig cfg = duel_config();
    cfg.ally_spawns = {{1, 1}};
    cfg.enemy_spawns = {{4, 3}};
    MicroCombat env(cfg);
    env.reset(0);

    // Ally waits; enemy walks x-first: (4,3)->(3,3)->(2,3)->(2,2)? No:
    // dx=-2 first two steps, then dx=-1 still nonzero -> (1,3)? From (2,3)
    // dx = 1-2 = -1 so it moves to (1,3)... adjacent? dist((1,1),(1,3))=2.
    // Then dx=0, dy=-2 -> (1,2), now adjacent, attacks next step.
    StepResult r = env.step({0});
    Tensor s = r.next_state;
    // state layout: ally [h,x,y] then enemy [h,x,y], normalised by (dim-1)
    CHECK(s.data()[3 + 1] == 3.0 / 5.0);
    CHECK(s.data()[3 + 2] == 3.0 / 3.0);
    env.step({0});  // enemy to (2,3)
    env.step({0});  // enemy to (1,3), dx exhausted
    r = env.step({0});  // enemy to (1,2)
    CHECK(r.next_state.data()[3 + 1] == 1.0 / 5.0);
    CHECK(r.next_state.data()[3 + 2] == 2.0 / 3.0);
    // Now adjacent: the next step it attacks for 2.
    r = env.step({0});
    CHECK(r.next_state.data()[0] == 3.0 / 5.0);  // ally health 3/5
    CHECK(r.reward == 0.0);  // ally damage never pays reward
}

TEST_CASE("episodes truncate at the limit without a terminal flag") {
    MicroCombatConfig cfg = duel_config();
    cfg.ally_spawns = {{0, 0}};
    cfg.enemy_spawns = {{5, 3}};
    cfg.episode_limit = 4;
    MicroCombat env(cfg);
    env.reset(0);
    StepResult r;
    // Hold the left wall so the enemy can never quite arrive in 4 steps.
    for (int t = 0; t < 4; ++t) r = env.step({0});
    CHECK(r.truncated);
    CHECK_FALSE(r.terminated);
    CHECK_FALSE(r.win);
}

TEST_CASE("losing the whole team terminates without a win") {
    MicroCombatConfig cfg = duel_config();
    cfg.health = 2;  // one enemy hit kills
    cfg.damage = 2;
    MicroCombat env(cfg);
    env.reset(0);
    StepResult r = env.step({0});
    int guard = 0;
    while (!r.terminated && !r.truncated && guard++ < 10) r = env.step({0});
    CHECK(r.terminated);
    CHECK_FALSE(r.win);
    // Dead agent: zero obs, noop-only mask.
    for (std::int64_t i = 0; i < r.next_obs[0].numel(); ++i) CHECK(r.next_obs[0].data()[i] == 0.0);
    CHECK(r.next_masks[0][0] == 1);
    for (size_t u = 1; u < r.next_masks[0].size(); ++u) CHECK(r.next_masks[0][u] == 0);
}

TEST_CASE("masked and malformed actions are rejected") {
    MicroCombatConfig cfg = duel_config();
    cfg.ally_spawns = {{0, 0}};
    cfg.enemy_spawns = {{5, 3}};
    MicroCombat env(cfg);
    ResetResult init = env.reset(0);
    CHECK(init.masks[0][5] == 0);  // enemy far out of range
    CHECK(init.masks[0][1] == 0);  // up from y=0 is off-grid
    CHECK(init.masks[0][3] == 0);  // left from x=0 is off-grid
    CHECK_THROWS_AS(env.step({5}), IllegalActionError);
    CHECK_THROWS_AS(env.step({1}), IllegalActionError);
    CHECK_THROWS_AS(env.step({7}), IllegalActionError);
    CHECK_THROWS_AS(env.step({-1}), IllegalActionError);
    CHECK_THROWS_AS(env.step({0, 0}), ValidationError);
    // A masked-action throw must not corrupt the episode.
    StepResult r = env.step({4});
    CHECK(r.next_state.data()[1] == 1.0 / 5.0);
}

TEST_CASE("movement collisions resolve in favour of the lower agent id") {
    MicroCombatConfig cfg;
    cfg.width = 6;
    cfg.height = 4;
    cfg.n_allies = 2;
    cfg.n_enemies = 1;
    cfg.ally_spawns = {{1, 1}, {1, 3}};
    cfg.enemy_spawns = {{5, 0}};
    MicroCombat env(cfg);
    env.reset(0);
    // Both allies try to enter (1,2): agent 0 moves down, agent 1 moves up.
    StepResult r = env.step({2, 1});
    CHECK(r.next_state.data()[1] == 1.0 / 5.0);  // ally 0 x
    CHECK(r.next_state.data()[2] == 2.0 / 3.0);  // ally 0 took the cell
    CHECK(r.next_state.data()[4] == 1.0 / 5.0);  // ally 1 x
    CHECK(r.next_state.data()[5] == 3.0 / 3.0);  // ally 1 blocked, stays
}

TEST_CASE("observation features stay in [0,1] and dead enemies vanish from view") {
    MicroCombatConfig cfg;
    cfg.stochastic_damage = true;
    MicroCombat env(cfg);
    Rng rng(99);
    for (int episode = 0; episode < 8; ++episode) {
        ResetResult init = env.reset(1000 + static_cast<std::uint64_t>(episode));
        std::vector<ActionMask> masks = init.masks;
        bool done = false;
        while (!done) {
            std::vector<int> actions;
            for (int i = 0; i < env.spec().n_agents; ++i)
                actions.push_back(pick_unmasked(rng, masks[static_cast<size_t>(i)]));
            StepResult r = env.step(actions);
            CHECK(r.reward >= 0.0);
            for (const Tensor& o : r.next_obs)
                for (std::int64_t k = 0; k < o.numel(); ++k) {
                    CHECK(o.data()[k] >= 0.0);
                    CHECK(o.data()[k] <= 1.0);
                }
            for (const ActionMask& m : r.next_masks) {
                bool any = false;
                for (std::uint8_t bit : m) any = any || bit;
                CHECK(any);
            }
            masks = r.next_masks;
            done = r.terminated || r.truncated;
        }
    }
}

TEST_CASE("episode damage rewards sum to at most one, exactly one on a clear") {
    MicroCombatConfig cfg;
    cfg.stochastic_damage = true;
    cfg.episode_limit = 40;
    MicroCombat env(cfg);
    Rng rng(7);
    int clears = 0;
    for (int episode = 0; episode < 12; ++episode) {
        ResetResult init = env.reset(static_cast<std::uint64_t>(episode) * 31 + 5);
        std::vector<ActionMask> masks = init.masks;
        double damage_total = 0.0;
        bool done = false, won = false;
        while (!done) {
            std::vector<int> actions;
            for (int i = 0; i < env.spec().n_agents; ++i)
                actions.push_back(pick_unmasked(rng, masks[static_cast<size_t>(i)]));
            StepResult r = env.step(actions);
            damage_total += r.reward - (r.win ? cfg.win_bonus : 0.0);
            masks = r.next_masks;
            done = r.terminated || r.truncated;
            won = won || r.win;
        }
        if (won) {
            CHECK(damage_total == doctest::Approx(1.0).epsilon(1e-12));
            ++clears;
        } else {
            CHECK(damage_total <= 1.0 + 1e-12);
        }
    }
    CHECK(clears > 0);  // the soak must actually exercise the win path
}

TEST_CASE("replaying a recorded action sequence reproduces every step bit for bit") {
    MicroCombatConfig cfg;
    cfg.stochastic_damage = true;
    MicroCombat env(cfg);
    Rng rng(123);

    ResetResult first = env.reset(77);
    std::vector<std::vector<int>> script;
    std::vector<StepResult> recorded;
    std::vector<ActionMask> masks = first.masks;
    bool done = false;
    while (!done) {
        std::vector<int> actions;
        for (int i = 0; i < env.spec().n_agents; ++i)
            actions.push_back(pick_unmasked(rng, masks[static_cast<size_t>(i)]));
        script.push_back(actions);
        recorded.push_back(env.step(actions));
        masks = recorded.back().next_masks;
        done = recorded.back().terminated || recorded.back().truncated;
    }

    ResetResult again = env.reset(77);
    CHECK(tensors_equal(first.state, again.state));
    for (size_t t = 0; t < script.size(); ++t) {
        StepResult r = env.step(script[t]);
        CHECK(r.reward == recorded[t].reward);
        CHECK(tensors_equal(r.next_state, recorded[t].next_state));
        for (int i = 0; i < env.spec().n_agents; ++i) {
            CHECK(tensors_equal(r.next_obs[static_cast<size_t>(i)],
                                recorded[t].next_obs[static_cast<size_t>(i)]));
            CHECK(r.next_masks[static_cast<size_t>(i)] ==
                  recorded[t].next_masks[static_cast<size_t>(i)]);
        }
        CHECK(r.terminated == recorded[t].terminated);
        CHECK(r.truncated == recorded[t].truncated);
        CHECK(r.win == recorded[t].win);
    }
}

TEST_CASE("config validation rejects broken setups") {
    MicroCombatConfig cfg;
    cfg.attack_range = 4;
    cfg.sight_range = 3;
    CHECK_THROWS_AS(MicroCombat{cfg}, ValidationError);
    cfg = MicroCombatConfig{};
    cfg.width = 3;
    CHECK_THROWS_AS(MicroCombat{cfg}, ValidationError);
    cfg = MicroCombatConfig{};
    cfg.ally_spawns = {{0, 0}};
    CHECK_THROWS_AS(MicroCombat{cfg}, ValidationError);  // 3 allies, 1 spawn
    cfg = MicroCombatConfig{};
    cfg.n_allies = 2;
    cfg.ally_spawns = {{0, 0}, {0, 0}};
    CHECK_THROWS_AS(MicroCombat{cfg}, ValidationError);
    cfg = MicroCombatConfig{};
    cfg.n_enemies = 17;  // two 8-cell columns cannot hold 17 units
    CHECK_THROWS_AS(MicroCombat{cfg}, ValidationError);
}

TEST_CASE("trace lines are valid single-line json records") {
    std::ostringstream out;
    append_trace_line(out, 3, Tensor::from_data({2}, {0.5, 1.0}), {1, 0}, 0.25,
                      {{1, 0, 1}, {1, 1, 0}});
    std::string line = out.str();
    CHECK(line.back() == '\n');
    CHECK(line.find("\"t\":3") != std::string::npos);
    CHECK(line.find("\"reward\":0.25") != std::string::npos);
    CHECK(std::count(line.begin(), line.end(), '\n') == 1);
}
