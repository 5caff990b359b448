#include "ivrl/innate_critic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "ivrl/errors.hpp"

namespace ivrl {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidInput(std::string(what) + " must be finite");
}

void check_profile(const InnateValueProfile& p) {
  require_finite(p.w_bw, "w_bw");
  require_finite(p.w_sl, "w_sl");
  require_finite(p.w_hp, "w_hp");
}

InnateValueProfile make(double bw, double sl, double hp, Personality p) { return {bw, sl, hp, p}; }

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::IQL: return "IQL";
    case Algorithm::QMIX: return "QMIX";
    case Algorithm::QTRAN: return "QTRAN";
  }
  return "?";
}

std::string_view to_string(Personality p) {
  switch (p) {
    case Personality::Coward: return "Coward";
    case Personality::Neutral: return "Neutral";
    case Personality::Reckless: return "Reckless";
    case Personality::Custom: return "Custom";
  }
  return "?";
}

namespace {
bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}
}  // namespace

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::IQL, Algorithm::QMIX, Algorithm::QTRAN})
    if (iequals(name, to_string(a))) return a;
  return std::nullopt;
}

std::optional<Personality> parse_personality(std::string_view name) {
  for (Personality p : {Personality::Coward, Personality::Neutral, Personality::Reckless, Personality::Custom})
    if (iequals(name, to_string(p))) return p;
  return std::nullopt;
}

std::array<double, kInternalFeatureCount> InternalState::features() const {
  if (updates <= 0) return {0.0, 0.0, 0.0};
  const double n = updates;
  return {satisfied_achievement / n, satisfied_safety / n, satisfied_basic / n};
}

double compute_innate_reward(const InnateValueProfile& profile, const NeedFeatures& f) {
  check_profile(profile);
  require_finite(f.battle_won, "battle_won");
  require_finite(f.shield_lost, "shield_lost");
  require_finite(f.hp_lost, "hp_lost");
  return profile.w_bw * f.battle_won + profile.w_sl * f.shield_lost + profile.w_hp * f.hp_lost;
}

NeedFeatures extract_features(const TransitionEvents& events, std::size_t agent_index) {
  if (agent_index >= events.ally_shield_lost.size() || agent_index >= events.ally_hp_lost.size())
    throw InvalidInput("extract_features: agent index " + std::to_string(agent_index) + " out of range");
  return {events.outcome == Outcome::Won ? 1.0 : 0.0, events.ally_shield_lost[agent_index],
          events.ally_hp_lost[agent_index]};
}

Personality classify_personality(const InnateValueProfile& profile) {
  check_profile(profile);
  if (profile.w_bw <= 0.0) throw InvalidInput("classify_personality: w_bw must be positive");
  const double bw = std::abs(profile.w_bw);
  const double sl = std::abs(profile.w_sl);
  const double hp = std::abs(profile.w_hp);
  const bool dominated = sl >= 2.0 * bw && hp >= 2.0 * bw;
  if (dominated && profile.w_sl < 0.0 && profile.w_hp < 0.0) return Personality::Coward;
  if (dominated && profile.w_sl > 0.0 && profile.w_hp > 0.0) return Personality::Reckless;
  if (std::abs(sl - bw) <= 0.25 * bw && std::abs(hp - bw) <= 0.25 * bw) return Personality::Neutral;
  return Personality::Custom;
}

double team_average_reward(std::span<const double> rewards) {
  if (rewards.empty()) throw InvalidInput("team_average_reward: empty reward list");
  // Summing in sorted order makes the result independent of agent order,
  // and the clamp removes rounding that would leave [min, max].
  std::vector<double> sorted(rewards.begin(), rewards.end());
  for (double r : sorted) require_finite(r, "reward");
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double r : sorted) sum += r;
  return std::clamp(sum / static_cast<double>(sorted.size()), sorted.front(), sorted.back());
}

InternalState update_internal_state(InternalState state, const NeedFeatures& features,
                                    double current_shield_fraction, double current_hp_fraction) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(current_shield_fraction) || !in_unit(current_hp_fraction))
    throw InvalidInput("update_internal_state: fractions must lie in [0, 1]");
  if (!(features.battle_won == 0.0 || features.battle_won == 1.0))
    throw InvalidInput("update_internal_state: battle_won must be 0 or 1");
  state.satisfied_achievement += features.battle_won;
  state.satisfied_safety += current_shield_fraction;
  state.satisfied_basic += current_hp_fraction;
  ++state.updates;
  return state;
}

std::array<InnateValueProfile, 3> preset_profiles(Algorithm algorithm) {
  const double magnitude = algorithm == Algorithm::QTRAN ? 3.0 : 2.5;
  return {make(1.0, -magnitude, -magnitude, Personality::Coward),
          make(1.0, -1.0, -1.0, Personality::Neutral),
          make(1.0, magnitude, magnitude, Personality::Reckless)};
}

InnateValueProfile preset_profile(Algorithm algorithm, Personality personality) {
  if (personality == Personality::Custom)
    throw InvalidInput("preset_profile: Custom has no preset weights");
  return preset_profiles(algorithm)[static_cast<std::size_t>(personality)];
}

}  // namespace ivrl
