#pragma once

// Grid battle between two small teams of ranged (shielded, regenerating) and
// melee units. A desk-scale stand-in for a 2-stalker / 3-zealot skirmish.
//
// Every operation is a pure function of its arguments: WorldState is a value
// and the BattleEnv object only carries immutable scenario parameters.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "ivrl/rng.hpp"

namespace ivrl {

enum class UnitClass : std::uint8_t { Ranged, Melee };

struct UnitSpec {
  UnitClass unit_class = UnitClass::Ranged;
  double max_hp = 80.0;
  double max_shield = 80.0;
  double attack_damage = 13.0;
  int attack_range = 6;  // Chebyshev cells
  int sight_range = 9;
  double shield_regen_rate = 2.0;  // per step
  int regen_delay = 10;            // undamaged steps before regen starts

  static UnitSpec default_ranged();
  static UnitSpec default_melee();
};

struct TeamComposition {
  int ranged = 2;
  int melee = 3;
  int size() const { return ranged + melee; }
};

struct ScenarioConfig {
  int grid_width = 16;
  int grid_height = 16;
  int episode_limit = 120;
  TeamComposition allies;
  TeamComposition enemies;
  UnitSpec ranged = UnitSpec::default_ranged();
  UnitSpec melee = UnitSpec::default_melee();
  // Spawn zones: `spawn_depth` columns at each edge, `spawn_height` rows
  // centred vertically. Units are placed on distinct random cells inside.
  int spawn_depth = 3;
  int spawn_height = 6;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct Position {
  int x = 0;
  int y = 0;
  friend bool operator==(const Position&, const Position&) = default;
};

inline int chebyshev(Position a, Position b) {
  const int dx = a.x > b.x ? a.x - b.x : b.x - a.x;
  const int dy = a.y > b.y ? a.y - b.y : b.y - a.y;
  return dx > dy ? dx : dy;
}

struct UnitState {
  UnitClass unit_class = UnitClass::Ranged;
  Position position;
  double hp = 0.0;
  double shield = 0.0;
  bool alive = false;
  int steps_since_damaged = 0;

  friend bool operator==(const UnitState&, const UnitState&) = default;
};

struct WorldState {
  std::vector<UnitState> ally_units;
  std::vector<UnitState> enemy_units;
  int step_count = 0;
  int episode_limit = 0;
  int grid_width = 0;
  int grid_height = 0;

  int dead_allies() const;
  int dead_enemies() const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

enum class Outcome : std::uint8_t { Ongoing, Won, Lost, Draw };

std::string_view to_string(Outcome outcome);

struct TransitionEvents {
  std::vector<double> ally_shield_lost;
  std::vector<double> ally_hp_lost;
  std::vector<double> enemy_shield_lost;
  std::vector<double> enemy_hp_lost;
  int allies_killed = 0;
  int enemies_killed = 0;
  Outcome outcome = Outcome::Ongoing;
  std::vector<int> enemy_actions;
};

// Action set, identical for both teams: no-op, stop, four moves, then one
// attack slot per opposing unit.
namespace action {
inline constexpr int kNoOp = 0;
inline constexpr int kStop = 1;
inline constexpr int kNorth = 2;  // y + 1
inline constexpr int kSouth = 3;  // y - 1
inline constexpr int kEast = 4;   // x + 1
inline constexpr int kWest = 5;   // x - 1
inline constexpr int kFirstAttack = 6;
}  // namespace action

using ActionMask = std::vector<std::uint8_t>;
using JointAction = std::vector<int>;

// Internal need-satisfaction features appended to observations.
inline constexpr std::size_t kInternalFeatureCount = 3;

class BattleEnv {
 public:
  explicit BattleEnv(ScenarioConfig config);

  const ScenarioConfig& config() const { return config_; }
  int n_allies() const { return config_.allies.size(); }
  int n_enemies() const { return config_.enemies.size(); }
  int n_actions() const { return action::kFirstAttack + n_enemies(); }
  std::size_t observation_size() const;
  std::size_t state_size() const;
  const UnitSpec& spec(UnitClass c) const {
    return c == UnitClass::Ranged ? config_.ranged : config_.melee;
  }

  WorldState reset(RngStream& rng) const;

  ActionMask available_actions(const WorldState& state, int agent) const;

  // Enemy moves come from scripted_opponent. Throws ContractViolation if any
  // ally action is masked out.
  std::pair<WorldState, TransitionEvents> step(const WorldState& state,
                                               std::span<const int> ally_actions,
                                               RngStream& rng) const;

  // Egocentric observation. `internal` holds the agent's normalized
  // need-satisfaction features, each in [0, 1].
  std::vector<double> observe(const WorldState& state, int agent,
                              std::span<const double, kInternalFeatureCount> internal) const;

  std::vector<double> global_state(const WorldState& state) const;

  // Nearest live ally in range gets attacked (ties: lowest index); otherwise
  // step along the dominant axis towards it (ties: horizontal).
  JointAction scripted_opponent(const WorldState& state, RngStream& rng) const;

 private:
  ScenarioConfig config_;
};

// One JSON object per line: step, positions, hp/shield, actions, events.
void write_trace_record(std::ostream& out, const WorldState& before,
                        std::span<const int> ally_actions, const WorldState& after,
                        const TransitionEvents& events);

}  // namespace ivrl
