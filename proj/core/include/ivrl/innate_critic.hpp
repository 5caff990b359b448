#pragma once

// Innate-value critic: turns each agent's own battle experience into a
// scalar reward through a three-need weight vector (achievement, safety,
// basic), and tracks how well those needs have been satisfied so far.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "ivrl/battle_env.hpp"

namespace ivrl {

enum class Algorithm { IQL, QMIX, QTRAN };
enum class Personality { Coward, Neutral, Reckless, Custom };

std::string_view to_string(Algorithm a);
std::string_view to_string(Personality p);
std::optional<Algorithm> parse_algorithm(std::string_view name);
std::optional<Personality> parse_personality(std::string_view name);

// Need signals for one agent over one transition. Losses are magnitudes.
struct NeedFeatures {
  double battle_won = 0.0;
  double shield_lost = 0.0;
  double hp_lost = 0.0;
};

// Weights in [BW, SL, HP] order.
struct InnateValueProfile {
  double w_bw = 1.0;
  double w_sl = -1.0;
  double w_hp = -1.0;
  Personality personality = Personality::Custom;

  std::array<double, 3> weights() const { return {w_bw, w_sl, w_hp}; }
  friend bool operator==(const InnateValueProfile&, const InnateValueProfile&) = default;
};

struct InternalState {
  double satisfied_achievement = 0.0;
  double satisfied_safety = 0.0;
  double satisfied_basic = 0.0;
  int updates = 0;

  // Accumulators divided by the number of updates so far; each in [0, 1].
  std::array<double, kInternalFeatureCount> features() const;
};

// w_bw * battle_won + w_sl * shield_lost + w_hp * hp_lost.
double compute_innate_reward(const InnateValueProfile& profile, const NeedFeatures& features);

// Reads agent `agent_index`'s own losses out of a step's events. Every ally,
// alive or not, sees battle_won = 1 on the winning transition.
NeedFeatures extract_features(const TransitionEvents& events, std::size_t agent_index);

// Magnitude test: "much larger" means at least twice |w_bw|, "about equal"
// means within 25% of |w_bw|. Requires w_bw > 0.
Personality classify_personality(const InnateValueProfile& profile);

double team_average_reward(std::span<const double> rewards);

InternalState update_internal_state(InternalState state, const NeedFeatures& features,
                                    double current_shield_fraction, double current_hp_fraction);

// The published weight presets, in {Coward, Neutral, Reckless} order.
std::array<InnateValueProfile, 3> preset_profiles(Algorithm algorithm);
InnateValueProfile preset_profile(Algorithm algorithm, Personality personality);

}  // namespace ivrl
