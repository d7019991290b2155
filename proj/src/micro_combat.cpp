#include "qvl/micro_combat.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "qvl/errors.hpp"

namespace qvl {
namespace {

constexpr int kNoop = 0;
// up, down, left, right
constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

int manhattan(int ax, int ay, int bx, int by) { return std::abs(ax - bx) + std::abs(ay - by); }

int sign(int v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

}  // namespace

MicroCombat::MicroCombat(const MicroCombatConfig& config) : config_(config) {
    if (config.width < 4 || config.height < 2)
        throw ValidationError("grid must be at least 4x2 so the spawn bands stay disjoint");
    if (config.n_allies < 1 || config.n_enemies < 1)
        throw ValidationError("both teams need at least one unit");
    if (config.health < 1 || config.damage < 1)
        throw ValidationError("health and damage must be positive");
    if (config.attack_range < 1 || config.attack_range > config.sight_range)
        throw ValidationError("need 1 <= attack_range <= sight_range");
    if (config.win_bonus < 0.0) throw ValidationError("win bonus must be >= 0");
    if (2 * config.height < config.n_allies || 2 * config.height < config.n_enemies)
        throw ValidationError("spawn bands are two columns wide and cannot fit the team");
    auto check_spawns = [&](const std::vector<std::pair<int, int>>& spawns, int expected,
                            const char* team) {
        if (spawns.empty()) return;
        if (static_cast<int>(spawns.size()) != expected)
            throw ValidationError(std::string(team) + " spawn list does not match the unit count");
        for (auto [x, y] : spawns)
            if (x < 0 || x >= config.width || y < 0 || y >= config.height)
                throw ValidationError(std::string(team) + " spawn off-grid");
    };
    check_spawns(config.ally_spawns, config.n_allies, "ally");
    check_spawns(config.enemy_spawns, config.n_enemies, "enemy");
    std::vector<std::pair<int, int>> all_spawns = config.ally_spawns;
    all_spawns.insert(all_spawns.end(), config.enemy_spawns.begin(), config.enemy_spawns.end());
    for (size_t i = 0; i < all_spawns.size(); ++i)
        for (size_t j = i + 1; j < all_spawns.size(); ++j)
            if (all_spawns[i] == all_spawns[j])
                throw ValidationError("fixed spawns place two units on one cell");

    const int A = 5 + config.n_enemies;
    spec_.n_agents = config.n_allies;
    spec_.n_actions = A;
    spec_.obs_dim = (6 + A) + 4 * config.n_enemies + (3 + A) * (config.n_allies - 1);
    spec_.state_dim = 3 * (config.n_allies + config.n_enemies);
    spec_.gamma = config.gamma;
    spec_.episode_limit = config.episode_limit;
    validate_spec(spec_);
}

bool MicroCombat::cell_occupied(int x, int y) const {
    for (const Unit& u : allies_)
        if (u.alive() && u.x == x && u.y == y) return true;
    for (const Unit& u : enemies_)
        if (u.alive() && u.x == x && u.y == y) return true;
    return false;
}

int MicroCombat::roll_damage() {
    if (!config_.stochastic_damage) return config_.damage;
    return rng_.uniform() < 0.5 ? 0 : 2 * config_.damage;
}

ResetResult MicroCombat::reset(std::uint64_t seed) {
    rng_ = make_stream(seed, Stream::env);
    t_ = 0;
    done_ = false;
    allies_.assign(static_cast<size_t>(config_.n_allies), Unit{});
    enemies_.assign(static_cast<size_t>(config_.n_enemies), Unit{});

    // Fixed spawns were validated in the constructor and are placed first so
    // random placement rejection-samples against them too.
    auto place_team = [&](std::vector<Unit>& team, const std::vector<std::pair<int, int>>& fixed,
                          int band_x0) {
        for (size_t i = 0; i < team.size(); ++i) {
            team[i].health = config_.health;
            team[i].last_action = -1;
            if (!fixed.empty()) {
                team[i].x = fixed[i].first;
                team[i].y = fixed[i].second;
                continue;
            }
            int attempts = 0;
            do {
                if (++attempts > 10000)
                    throw ValidationError("spawn band too crowded to place all units");
                team[i].x = band_x0 + static_cast<int>(rng_.uniform_int(2));
                team[i].y =
                    static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(config_.height)));
            } while ([&] {
                int count = 0;
                for (const Unit& u : allies_)
                    if (u.alive() && u.x == team[i].x && u.y == team[i].y) ++count;
                for (const Unit& u : enemies_)
                    if (u.alive() && u.x == team[i].x && u.y == team[i].y) ++count;
                return count > 1;
            }());
        }
    };
    if (config_.ally_spawns.empty()) {
        place_team(enemies_, config_.enemy_spawns, config_.width - 2);
        place_team(allies_, config_.ally_spawns, 0);
    } else {
        place_team(allies_, config_.ally_spawns, 0);
        place_team(enemies_, config_.enemy_spawns, config_.width - 2);
    }

    ResetResult r;
    r.state = make_state();
    for (int i = 0; i < config_.n_allies; ++i) {
        r.obs.push_back(make_obs(i));
        r.masks.push_back(make_mask(i));
    }
    return r;
}

Tensor MicroCombat::make_state() const {
    Tensor s = Tensor::zeros({spec_.state_dim});
    const double H = config_.health;
    std::int64_t k = 0;
    auto emit = [&](const Unit& u) {
        if (u.alive()) {
            s.data()[k] = u.health / H;
            s.data()[k + 1] = u.x / static_cast<double>(config_.width - 1);
            s.data()[k + 2] = u.y / static_cast<double>(config_.height - 1);
        }
        k += 3;
    };
    for (const Unit& u : allies_) emit(u);
    for (const Unit& u : enemies_) emit(u);
    return s;
}

ActionMask MicroCombat::make_mask(int agent) const {
    ActionMask m(static_cast<size_t>(spec_.n_actions), 0);
    m[0] = 1;  // noop is always legal, and all a dead agent may do
    const Unit& self = allies_[static_cast<size_t>(agent)];
    if (!self.alive()) return m;
    for (int d = 0; d < 4; ++d) {
        int nx = self.x + kDx[d];
        int ny = self.y + kDy[d];
        if (nx >= 0 && nx < config_.width && ny >= 0 && ny < config_.height)
            m[static_cast<size_t>(1 + d)] = 1;
    }
    for (int j = 0; j < config_.n_enemies; ++j) {
        const Unit& e = enemies_[static_cast<size_t>(j)];
        if (e.alive() && manhattan(self.x, self.y, e.x, e.y) <= config_.attack_range)
            m[static_cast<size_t>(5 + j)] = 1;
    }
    return m;
}

Tensor MicroCombat::make_obs(int agent) const {
    Tensor o = Tensor::zeros({spec_.obs_dim});
    const Unit& self = allies_[static_cast<size_t>(agent)];
    if (!self.alive()) return o;

    const double H = config_.health;
    const double R = config_.sight_range;
    const int A = spec_.n_actions;
    double* p = o.data();

    *p++ = self.health / H;
    *p++ = 1.0;  // type flag, single ally archetype
    for (int u = 0; u < A; ++u) *p++ = (self.last_action == u) ? 1.0 : 0.0;
    for (int d = 0; d < 4; ++d) {
        int nx = self.x + kDx[d];
        int ny = self.y + kDy[d];
        *p++ = (nx >= 0 && nx < config_.width && ny >= 0 && ny < config_.height) ? 1.0 : 0.0;
    }
    for (const Unit& e : enemies_) {
        int dist = manhattan(self.x, self.y, e.x, e.y);
        if (e.alive() && dist <= config_.sight_range) {
            *p++ = dist <= config_.attack_range ? 1.0 : 0.0;
            *p++ = dist / R;
            *p++ = e.health / H;
            *p++ = 1.0;
        } else {
            p += 4;
        }
    }
    for (int k = 0; k < config_.n_allies; ++k) {
        if (k == agent) continue;
        const Unit& a = allies_[static_cast<size_t>(k)];
        int dist = manhattan(self.x, self.y, a.x, a.y);
        if (a.alive() && dist <= config_.sight_range) {
            *p++ = dist / R;
            *p++ = a.health / H;
            *p++ = 1.0;
            for (int u = 0; u < A; ++u) *p++ = (a.last_action == u) ? 1.0 : 0.0;
        } else {
            p += 3 + A;
        }
    }
    return o;
}

StepResult MicroCombat::step(const std::vector<int>& joint_action) {
    if (done_) throw ValidationError("micro combat stepped after the episode ended");
    if (static_cast<int>(joint_action.size()) != config_.n_allies)
        throw ValidationError("expected " + std::to_string(config_.n_allies) + " actions, got " +
                              std::to_string(joint_action.size()));
    std::vector<bool> alive_at_start(static_cast<size_t>(config_.n_allies));
    for (int i = 0; i < config_.n_allies; ++i) {
        alive_at_start[static_cast<size_t>(i)] = allies_[static_cast<size_t>(i)].alive();
        int u = joint_action[static_cast<size_t>(i)];
        if (u < 0 || u >= spec_.n_actions)
            throw IllegalActionError("agent " + std::to_string(i) + " action " + std::to_string(u) +
                                     " out of range");
        if (!make_mask(i)[static_cast<size_t>(u)])
            throw IllegalActionError("agent " + std::to_string(i) + " submitted masked action " +
                                     std::to_string(u));
    }

    // Ally moves, id order: the lower id claims a contested cell and a
    // freshly vacated cell is immediately reusable.
    for (int i = 0; i < config_.n_allies; ++i) {
        Unit& self = allies_[static_cast<size_t>(i)];
        int u = joint_action[static_cast<size_t>(i)];
        if (!self.alive() || u < 1 || u > 4) continue;
        int nx = self.x + kDx[u - 1];
        int ny = self.y + kDy[u - 1];
        if (!cell_occupied(nx, ny)) {
            self.x = nx;
            self.y = ny;
        }
    }

    // Ally attacks. Overkill is capped so the episode's damage rewards sum
    // to at most 1 (exactly 1 on a full clear).
    const double total_enemy_health = static_cast<double>(config_.n_enemies * config_.health);
    int removed_total = 0;
    for (int i = 0; i < config_.n_allies; ++i) {
        const Unit& self = allies_[static_cast<size_t>(i)];
        int u = joint_action[static_cast<size_t>(i)];
        if (!self.alive() || u < 5) continue;
        Unit& target = enemies_[static_cast<size_t>(u - 5)];
        int removed = std::min(roll_damage(), target.health);
        target.health -= removed;
        removed_total += removed;
    }

    StepResult r;
    r.reward = removed_total / total_enemy_health;
    bool enemies_wiped = std::none_of(enemies_.begin(), enemies_.end(),
                                      [](const Unit& u) { return u.alive(); });
    if (enemies_wiped) {
        r.reward += config_.win_bonus;
        r.win = true;
        r.terminated = true;
    }

    if (!enemies_wiped) {
        for (Unit& e : enemies_) {
            if (!e.alive()) continue;
            int target = -1;
            int best = 0;
            for (size_t a = 0; a < allies_.size(); ++a) {
                const Unit& cand = allies_[a];
                if (!cand.alive()) continue;
                int dist = manhattan(e.x, e.y, cand.x, cand.y);
                // Equidistant allies: lower x, then lower y.
                bool closer = target < 0 || dist < best;
                if (!closer && dist == best) {
                    const Unit& cur = allies_[static_cast<size_t>(target)];
                    closer = cand.x < cur.x || (cand.x == cur.x && cand.y < cur.y);
                }
                if (closer) {
                    target = static_cast<int>(a);
                    best = dist;
                }
            }
            if (target < 0) break;
            Unit& ally = allies_[static_cast<size_t>(target)];
            if (best <= config_.attack_range) {
                ally.health -= std::min(roll_damage(), ally.health);
            } else {
                int dx = ally.x - e.x;
                int dy = ally.y - e.y;
                int nx = e.x + (dx != 0 ? sign(dx) : 0);
                int ny = e.y + (dx != 0 ? 0 : sign(dy));
                if (!cell_occupied(nx, ny)) {
                    e.x = nx;
                    e.y = ny;
                }
            }
        }
        if (std::none_of(allies_.begin(), allies_.end(),
                         [](const Unit& u) { return u.alive(); }))
            r.terminated = true;
    }

    for (int i = 0; i < config_.n_allies; ++i)
        if (alive_at_start[static_cast<size_t>(i)])
            allies_[static_cast<size_t>(i)].last_action = joint_action[static_cast<size_t>(i)];

    ++t_;
    if (!r.terminated && t_ >= config_.episode_limit) r.truncated = true;
    done_ = r.terminated || r.truncated;

    r.next_state = make_state();
    for (int i = 0; i < config_.n_allies; ++i) {
        r.next_obs.push_back(make_obs(i));
        r.next_masks.push_back(make_mask(i));
    }
    return r;
}

}  // namespace qvl
