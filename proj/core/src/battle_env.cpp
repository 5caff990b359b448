#include "ivrl/battle_env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"

#include "ivrl/errors.hpp"

namespace ivrl {

namespace {

constexpr std::size_t kOwnFeatures = 5;
constexpr std::size_t kOtherFeatures = 6;
constexpr std::size_t kGlobalUnitFeatures = 6;

struct Move {
  int dx;
  int dy;
};

Move move_delta(int a) {
  switch (a) {
    case action::kNorth: return {0, 1};
    case action::kSouth: return {0, -1};
    case action::kEast: return {1, 0};
    case action::kWest: return {-1, 0};
    default: return {0, 0};
  }
}

bool is_move(int a) { return a >= action::kNorth && a <= action::kWest; }

bool in_bounds(const WorldState& s, Position p) {
  return p.x >= 0 && p.y >= 0 && p.x < s.grid_width && p.y < s.grid_height;
}

// Occupancy of live units, indexed y * width + x.
std::vector<std::uint8_t> occupancy(const WorldState& s) {
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(s.grid_width) * s.grid_height, 0);
  auto mark = [&](const std::vector<UnitState>& units) {
    for (const auto& u : units)
      if (u.alive) occ[static_cast<std::size_t>(u.position.y) * s.grid_width + u.position.x] = 1;
  };
  mark(s.ally_units);
  mark(s.enemy_units);
  return occ;
}

double fraction(double value, double max) { return max > 0.0 ? value / max : 0.0; }

void require_positive(int v, const char* field) {
  if (v <= 0) throw ConfigError(std::string("scenario.") + field + " must be positive");
}

void validate_unit(const UnitSpec& u, const char* name) {
  auto fail = [&](const char* field, const char* what) {
    throw ConfigError(std::string("scenario.") + name + "." + field + " " + what);
  };
  if (!(std::isfinite(u.max_hp) && u.max_hp > 0)) fail("max_hp", "must be positive");
  if (!(std::isfinite(u.max_shield) && u.max_shield >= 0)) fail("max_shield", "must be non-negative");
  if (!(std::isfinite(u.attack_damage) && u.attack_damage > 0)) fail("attack_damage", "must be positive");
  if (u.attack_range < 1) fail("attack_range", "must be at least 1");
  if (u.sight_range < u.attack_range) fail("sight_range", "must be >= attack_range");
  if (!(std::isfinite(u.shield_regen_rate) && u.shield_regen_rate >= 0))
    fail("shield_regen_rate", "must be non-negative");
  if (u.regen_delay < 0) fail("regen_delay", "must be non-negative");
  if (u.unit_class == UnitClass::Melee && u.attack_range != 1) fail("attack_range", "must be 1 for melee units");
}

std::vector<UnitState> spawn_team(const ScenarioConfig& cfg, const TeamComposition& team, int x0,
                                  RngStream& rng) {
  const int y0 = (cfg.grid_height - cfg.spawn_height) / 2;
  std::vector<Position> cells;
  cells.reserve(static_cast<std::size_t>(cfg.spawn_depth) * cfg.spawn_height);
  for (int y = y0; y < y0 + cfg.spawn_height; ++y)
    for (int x = x0; x < x0 + cfg.spawn_depth; ++x) cells.push_back({x, y});

  std::vector<UnitState> units;
  units.reserve(team.size());
  for (int i = 0; i < team.size(); ++i) {
    // Partial Fisher-Yates: cell i is drawn from the not-yet-used tail.
    const std::size_t pick = i + rng.uniform_index(cells.size() - i);
    std::swap(cells[i], cells[pick]);
    const UnitSpec& spec = i < team.ranged ? cfg.ranged : cfg.melee;
    UnitState u;
    u.unit_class = i < team.ranged ? UnitClass::Ranged : UnitClass::Melee;
    u.position = cells[i];
    u.hp = spec.max_hp;
    u.shield = spec.max_shield;
    u.alive = true;
    u.steps_since_damaged = 0;
    units.push_back(u);
  }
  return units;
}

// Shield absorbs first; returns (shield_lost, hp_lost).
std::pair<double, double> apply_damage(UnitState& u, double damage) {
  const double from_shield = std::min(u.shield, damage);
  u.shield -= from_shield;
  const double from_hp = std::min(u.hp, damage - from_shield);
  u.hp -= from_hp;
  return {from_shield, from_hp};
}

void regen(std::vector<UnitState>& units, const std::vector<double>& damage_taken, const BattleEnv& env) {
  for (std::size_t i = 0; i < units.size(); ++i) {
    UnitState& u = units[i];
    if (!u.alive) continue;
    if (damage_taken[i] > 0.0) {
      u.steps_since_damaged = 0;
      continue;
    }
    ++u.steps_since_damaged;
    const UnitSpec& spec = env.spec(u.unit_class);
    if (u.steps_since_damaged >= spec.regen_delay)
      u.shield = std::min(spec.max_shield, u.shield + spec.shield_regen_rate);
  }
}

}  // namespace

UnitSpec UnitSpec::default_ranged() {
  return UnitSpec{UnitClass::Ranged, 80.0, 80.0, 13.0, 6, 9, 2.0, 10};
}

UnitSpec UnitSpec::default_melee() {
  return UnitSpec{UnitClass::Melee, 100.0, 50.0, 8.0, 1, 9, 2.0, 10};
}

void ScenarioConfig::validate() const {
  require_positive(grid_width, "grid_width");
  require_positive(grid_height, "grid_height");
  require_positive(episode_limit, "episode_limit");
  require_positive(spawn_depth, "spawn_depth");
  require_positive(spawn_height, "spawn_height");
  if (allies.ranged < 0 || allies.melee < 0 || allies.size() < 1)
    throw ConfigError("scenario.allies: team size must be at least 1");
  if (enemies.ranged < 0 || enemies.melee < 0 || enemies.size() < 1)
    throw ConfigError("scenario.enemies: team size must be at least 1");
  if (ranged.unit_class != UnitClass::Ranged || melee.unit_class != UnitClass::Melee)
    throw ConfigError("scenario: unit class mismatch");
  validate_unit(ranged, "ranged");
  validate_unit(melee, "melee");
  if (2 * spawn_depth > grid_width) throw ConfigError("scenario.spawn_depth: spawn zones overlap");
  if (spawn_height > grid_height) throw ConfigError("scenario.spawn_height exceeds grid_height");
  const int cells = spawn_depth * spawn_height;
  if (allies.size() > cells) throw ConfigError("scenario.allies: spawn zone too small for team");
  if (enemies.size() > cells) throw ConfigError("scenario.enemies: spawn zone too small for team");
}

int WorldState::dead_allies() const {
  return static_cast<int>(std::count_if(ally_units.begin(), ally_units.end(),
                                        [](const UnitState& u) { return !u.alive; }));
}

int WorldState::dead_enemies() const {
  return static_cast<int>(std::count_if(enemy_units.begin(), enemy_units.end(),
                                        [](const UnitState& u) { return !u.alive; }));
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::Won: return "won";
    case Outcome::Lost: return "lost";
    case Outcome::Draw: return "draw";
  }
  return "?";
}

BattleEnv::BattleEnv(ScenarioConfig config) : config_(std::move(config)) { config_.validate(); }

std::size_t BattleEnv::observation_size() const {
  const std::size_t others = static_cast<std::size_t>(n_allies() - 1 + n_enemies());
  return kOwnFeatures + others * kOtherFeatures + kInternalFeatureCount + n_allies();
}

std::size_t BattleEnv::state_size() const {
  return static_cast<std::size_t>(n_allies() + n_enemies()) * kGlobalUnitFeatures + 1;
}

WorldState BattleEnv::reset(RngStream& rng) const {
  WorldState s;
  s.grid_width = config_.grid_width;
  s.grid_height = config_.grid_height;
  s.episode_limit = config_.episode_limit;
  s.step_count = 0;
  s.ally_units = spawn_team(config_, config_.allies, 0, rng);
  s.enemy_units = spawn_team(config_, config_.enemies, config_.grid_width - config_.spawn_depth, rng);
  return s;
}

ActionMask BattleEnv::available_actions(const WorldState& state, int agent) const {
  if (agent < 0 || agent >= static_cast<int>(state.ally_units.size()))
    throw InvalidInput("available_actions: agent index " + std::to_string(agent) + " out of range");
  ActionMask mask(static_cast<std::size_t>(n_actions()), 0);
  const UnitState& me = state.ally_units[agent];
  if (!me.alive) {
    mask[action::kNoOp] = 1;
    return mask;
  }
  mask[action::kStop] = 1;
  const auto occ = occupancy(state);
  for (int a = action::kNorth; a <= action::kWest; ++a) {
    const Move d = move_delta(a);
    const Position p{me.position.x + d.dx, me.position.y + d.dy};
    if (in_bounds(state, p) && !occ[static_cast<std::size_t>(p.y) * state.grid_width + p.x]) mask[a] = 1;
  }
  const int range = spec(me.unit_class).attack_range;
  for (std::size_t k = 0; k < state.enemy_units.size(); ++k) {
    const UnitState& e = state.enemy_units[k];
    if (e.alive && chebyshev(me.position, e.position) <= range) mask[action::kFirstAttack + k] = 1;
  }
  return mask;
}

JointAction BattleEnv::scripted_opponent(const WorldState& state, RngStream& /*rng*/) const {
  JointAction actions(state.enemy_units.size(), action::kNoOp);
  for (std::size_t k = 0; k < state.enemy_units.size(); ++k) {
    const UnitState& e = state.enemy_units[k];
    if (!e.alive) continue;
    int target = -1;
    int best = 0;
    for (std::size_t j = 0; j < state.ally_units.size(); ++j) {
      const UnitState& a = state.ally_units[j];
      if (!a.alive) continue;
      const int d = chebyshev(e.position, a.position);
      if (target < 0 || d < best) {
        target = static_cast<int>(j);
        best = d;
      }
    }
    if (target < 0) {
      actions[k] = action::kStop;
      continue;
    }
    if (best <= spec(e.unit_class).attack_range) {
      actions[k] = action::kFirstAttack + target;
      continue;
    }
    const Position t = state.ally_units[target].position;
    const int dx = t.x - e.position.x;
    const int dy = t.y - e.position.y;
    if (std::abs(dx) >= std::abs(dy))
      actions[k] = dx > 0 ? action::kEast : action::kWest;
    else
      actions[k] = dy > 0 ? action::kNorth : action::kSouth;
  }
  return actions;
}

std::pair<WorldState, TransitionEvents> BattleEnv::step(const WorldState& state,
                                                        std::span<const int> ally_actions,
                                                        RngStream& rng) const {
  const std::size_t n_a = state.ally_units.size();
  const std::size_t n_e = state.enemy_units.size();
  if (ally_actions.size() != n_a)
    throw ContractViolation("step: expected " + std::to_string(n_a) + " ally actions, got " +
                            std::to_string(ally_actions.size()));
  if (state.step_count >= state.episode_limit) throw ContractViolation("step: episode already at its step limit");
  for (std::size_t i = 0; i < n_a; ++i) {
    const int a = ally_actions[i];
    const auto mask = available_actions(state, static_cast<int>(i));
    if (a < 0 || a >= n_actions() || !mask[a])
      throw ContractViolation("step: action " + std::to_string(a) + " is not available to agent " +
                              std::to_string(i));
  }

  TransitionEvents ev;
  ev.enemy_actions = scripted_opponent(state, rng);
  ev.ally_shield_lost.assign(n_a, 0.0);
  ev.ally_hp_lost.assign(n_a, 0.0);
  ev.enemy_shield_lost.assign(n_e, 0.0);
  ev.enemy_hp_lost.assign(n_e, 0.0);

  WorldState next = state;

  // (1) Movement, allies then enemies, in index order. An occupied target
  // cell blocks the mover.
  auto occ = occupancy(next);
  auto do_moves = [&](std::vector<UnitState>& units, std::span<const int> acts) {
    for (std::size_t i = 0; i < units.size(); ++i) {
      UnitState& u = units[i];
      if (!u.alive || !is_move(acts[i])) continue;
      const Move d = move_delta(acts[i]);
      const Position p{u.position.x + d.dx, u.position.y + d.dy};
      if (!in_bounds(next, p)) continue;
      auto& dst = occ[static_cast<std::size_t>(p.y) * next.grid_width + p.x];
      if (dst) continue;
      occ[static_cast<std::size_t>(u.position.y) * next.grid_width + u.position.x] = 0;
      dst = 1;
      u.position = p;
    }
  };
  do_moves(next.ally_units, ally_actions);
  do_moves(next.enemy_units, ev.enemy_actions);

  // (2) Simultaneous attacks, validated against pre-step positions.
  std::vector<double> dmg_to_enemy(n_e, 0.0);
  std::vector<double> dmg_to_ally(n_a, 0.0);
  for (std::size_t i = 0; i < n_a; ++i) {
    const int a = ally_actions[i];
    if (a < action::kFirstAttack) continue;
    dmg_to_enemy[a - action::kFirstAttack] += spec(state.ally_units[i].unit_class).attack_damage;
  }
  for (std::size_t k = 0; k < n_e; ++k) {
    const int a = ev.enemy_actions[k];
    if (a < action::kFirstAttack) continue;
    const std::size_t target = static_cast<std::size_t>(a - action::kFirstAttack);
    const UnitState& e = state.enemy_units[k];
    if (target < n_a && state.ally_units[target].alive &&
        chebyshev(e.position, state.ally_units[target].position) <= spec(e.unit_class).attack_range)
      dmg_to_ally[target] += spec(e.unit_class).attack_damage;
  }

  for (std::size_t i = 0; i < n_a; ++i) {
    if (dmg_to_ally[i] <= 0.0) continue;
    std::tie(ev.ally_shield_lost[i], ev.ally_hp_lost[i]) = apply_damage(next.ally_units[i], dmg_to_ally[i]);
  }
  for (std::size_t k = 0; k < n_e; ++k) {
    if (dmg_to_enemy[k] <= 0.0) continue;
    std::tie(ev.enemy_shield_lost[k], ev.enemy_hp_lost[k]) = apply_damage(next.enemy_units[k], dmg_to_enemy[k]);
  }

  // (3) Deaths.
  for (auto& u : next.ally_units)
    if (u.alive && u.hp <= 0.0) {
      u.alive = false;
      u.hp = 0.0;
      u.shield = 0.0;
      ++ev.allies_killed;
    }
  for (auto& u : next.enemy_units)
    if (u.alive && u.hp <= 0.0) {
      u.alive = false;
      u.hp = 0.0;
      u.shield = 0.0;
      ++ev.enemies_killed;
    }

  // (4) Shield regeneration.
  regen(next.ally_units, dmg_to_ally, *this);
  regen(next.enemy_units, dmg_to_enemy, *this);

  // (5) Clock and outcome. Mutual annihilation counts as a win.
  ++next.step_count;
  if (next.dead_enemies() == static_cast<int>(n_e))
    ev.outcome = Outcome::Won;
  else if (next.dead_allies() == static_cast<int>(n_a))
    ev.outcome = Outcome::Lost;
  else if (next.step_count >= next.episode_limit)
    ev.outcome = Outcome::Draw;
  else
    ev.outcome = Outcome::Ongoing;

  return {std::move(next), std::move(ev)};
}

std::vector<double> BattleEnv::observe(const WorldState& state, int agent,
                                       std::span<const double, kInternalFeatureCount> internal) const {
  const int n_a = static_cast<int>(state.ally_units.size());
  if (agent < 0 || agent >= n_a)
    throw InvalidInput("observe: agent index " + std::to_string(agent) + " out of range");
  std::vector<double> obs(observation_size(), 0.0);
  obs[obs.size() - n_a + agent] = 1.0;
  const UnitState& me = state.ally_units[agent];
  if (!me.alive) return obs;

  const UnitSpec& my_spec = spec(me.unit_class);
  std::size_t o = 0;
  obs[o++] = fraction(me.hp, my_spec.max_hp);
  obs[o++] = fraction(me.shield, my_spec.max_shield);
  obs[o++] = state.grid_width > 1 ? double(me.position.x) / (state.grid_width - 1) : 0.0;
  obs[o++] = state.grid_height > 1 ? double(me.position.y) / (state.grid_height - 1) : 0.0;
  obs[o++] = me.unit_class == UnitClass::Ranged ? 1.0 : 0.0;

  const double sight = my_spec.sight_range;
  auto encode = [&](const UnitState& u) {
    if (u.alive && chebyshev(me.position, u.position) <= my_spec.sight_range) {
      const UnitSpec& s = spec(u.unit_class);
      obs[o + 0] = 1.0;
      obs[o + 1] = (u.position.x - me.position.x) / sight;
      obs[o + 2] = (u.position.y - me.position.y) / sight;
      obs[o + 3] = fraction(u.hp, s.max_hp);
      obs[o + 4] = fraction(u.shield, s.max_shield);
      obs[o + 5] = u.unit_class == UnitClass::Ranged ? 1.0 : 0.0;
    }
    o += kOtherFeatures;
  };
  for (int j = 0; j < n_a; ++j)
    if (j != agent) encode(state.ally_units[j]);
  for (const auto& e : state.enemy_units) encode(e);

  for (double f : internal) obs[o++] = std::clamp(f, 0.0, 1.0);
  return obs;
}

std::vector<double> BattleEnv::global_state(const WorldState& state) const {
  std::vector<double> g(state_size(), 0.0);
  std::size_t o = 0;
  auto encode = [&](const UnitState& u) {
    if (u.alive) {
      const UnitSpec& s = spec(u.unit_class);
      g[o + 0] = 1.0;
      g[o + 1] = fraction(u.hp, s.max_hp);
      g[o + 2] = fraction(u.shield, s.max_shield);
      g[o + 3] = state.grid_width > 1 ? double(u.position.x) / (state.grid_width - 1) : 0.0;
      g[o + 4] = state.grid_height > 1 ? double(u.position.y) / (state.grid_height - 1) : 0.0;
      g[o + 5] = u.unit_class == UnitClass::Ranged ? 1.0 : 0.0;
    }
    o += kGlobalUnitFeatures;
  };
  for (const auto& u : state.ally_units) encode(u);
  for (const auto& u : state.enemy_units) encode(u);
  g[o] = state.episode_limit > 0 ? double(state.step_count) / state.episode_limit : 0.0;
  return g;
}

void write_trace_record(std::ostream& out, const WorldState& before, std::span<const int> ally_actions,
                        const WorldState& after, const TransitionEvents& events) {
  auto units = [](const std::vector<UnitState>& us) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& u : us)
      arr.push_back({{"x", u.position.x}, {"y", u.position.y}, {"hp", u.hp}, {"shield", u.shield},
                     {"alive", u.alive}});
    return arr;
  };
  nlohmann::json rec;
  rec["step"] = before.step_count;
  rec["allies"] = units(after.ally_units);
  rec["enemies"] = units(after.enemy_units);
  rec["ally_actions"] = std::vector<int>(ally_actions.begin(), ally_actions.end());
  rec["enemy_actions"] = events.enemy_actions;
  rec["ally_shield_lost"] = events.ally_shield_lost;
  rec["ally_hp_lost"] = events.ally_hp_lost;
  rec["allies_killed"] = events.allies_killed;
  rec["enemies_killed"] = events.enemies_killed;
  rec["outcome"] = std::string(to_string(events.outcome));
  out << rec.dump() << '\n';
}

}  // namespace ivrl
