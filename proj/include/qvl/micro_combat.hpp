#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "qvl/env.hpp"
#include "qvl/rng.hpp"

namespace qvl {

// Grid skirmish: a learner-controlled ally team against scripted enemies.
// Actions: 0 noop, 1..4 move up/down/left/right, 5+j attack enemy j.
struct MicroCombatConfig {
    int width = 8;
    int height = 8;
    int n_allies = 3;
    int n_enemies = 2;
    int health = 5;        // start health, both archetypes
    int damage = 2;        // base damage per hit, both archetypes
    int attack_range = 1;
    int sight_range = 3;
    bool stochastic_damage = false;  // hits deal 0 or 2*damage, even odds
    double win_bonus = 1.0;
    int episode_limit = 60;
    double gamma = 0.99;
    // When non-empty these override the random spawn bands (allies in the
    // two left columns, enemies in the two right columns). Used by tests
    // that need scripted positions.
    std::vector<std::pair<int, int>> ally_spawns;
    std::vector<std::pair<int, int>> enemy_spawns;
};

// Step order: ally moves (id order, lower id claims a contested cell), ally
// attacks (damage capped at remaining health so the normalised kill reward
// sums to exactly 1), then each surviving enemy attacks the nearest living
// ally in range or walks one cell toward it (x-axis first; equidistant
// allies resolved toward the lower x, then lower y). Reward is damage dealt
// over total enemy start health, plus win_bonus on the step the last enemy
// dies.
//
// Observations per agent, all features boolean or in [0,1], zeroed for
// anything out of sight and for dead observers:
//   own: health, type flag, one-hot last action, 4 move-legality bits
//   each enemy: in-attack-range bit, distance/sight, health, type flag
//   each other ally: distance/sight, health, type flag, one-hot last action
// Global state: per unit (allies then enemies) health, x, y, normalised.
class MicroCombat : public Env {
  public:
    explicit MicroCombat(const MicroCombatConfig& config);

    const DecPomdpSpec& spec() const override { return spec_; }
    ResetResult reset(std::uint64_t seed) override;
    StepResult step(const std::vector<int>& joint_action) override;

    const MicroCombatConfig& config() const { return config_; }

  private:
    struct Unit {
        int x = 0;
        int y = 0;
        int health = 0;
        int last_action = -1;
        bool alive() const { return health > 0; }
    };

    Tensor make_state() const;
    Tensor make_obs(int agent) const;
    ActionMask make_mask(int agent) const;
    bool cell_occupied(int x, int y) const;
    int roll_damage();

    MicroCombatConfig config_;
    DecPomdpSpec spec_;
    Rng rng_{0};
    std::vector<Unit> allies_;
    std::vector<Unit> enemies_;
    int t_ = 0;
    bool done_ = true;
};

}  // namespace qvl
