#pragma once

// Episode orchestration: the critic sits between the environment and the
// learner, so every reward a learner sees is an innate reward.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ivrl/approximator.hpp"
#include "ivrl/battle_env.hpp"
#include "ivrl/innate_critic.hpp"
#include "ivrl/learners.hpp"
#include "ivrl/metrics_io.hpp"
#include "ivrl/replay_buffer.hpp"

namespace ivrl {

struct RunConfig {
  ScenarioConfig scenario;
  InnateValueProfile profile = preset_profile(Algorithm::QMIX, Personality::Neutral);
  LearnerConfig learner;
  std::uint64_t total_env_steps = 50000;
  std::uint64_t eval_period = 5000;
  std::size_t eval_episodes = 16;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs";
  std::size_t buffer_capacity = 5000;
  std::size_t eval_workers = 1;

  void validate() const;
};

struct RunSummary {
  std::vector<MetricsRecord> records;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
  LearnerParams final_params;
  std::uint64_t env_steps = 0;
  std::uint64_t learner_steps = 0;
  std::uint64_t episodes = 0;
  double final_epsilon = 0.0;
  double wall_seconds = 0.0;
};

// Network input for one agent: observation followed by a one-hot of the
// agent's previous action (all zeros at the first step).
std::size_t agent_input_width(const BattleEnv& env);
LearnerShape learner_shape(const BattleEnv& env);

// One episode with the critic in the loop. `profiles` holds one profile per
// ally. All randomness (spawn, exploration) is drawn from `rng`. When
// `trace` is set, one JSON line per step is written to it.
EpisodeRecord rollout_episode(const BattleEnv& env, const ParameterVector& agent_q,
                              std::span<const InnateValueProfile> profiles, double epsilon, RngStream& rng,
                              std::ostream* trace = nullptr);

EpisodeSummary summarize_episode(const EpisodeRecord& episode);

// Greedy evaluation on fresh episodes. Episode e draws from
// rng.derive(e), so any split of the episodes over `workers` threads gives
// the same record.
MetricsRecord evaluate(const BattleEnv& env, const ParameterVector& agent_q,
                       std::span<const InnateValueProfile> profiles, std::size_t n_episodes, const RngStream& rng,
                       std::uint64_t step = 0, std::size_t workers = 1);

double discounted_return(std::span<const double> rewards, double gamma);

// Per-agent mean discounted innate return of the greedy joint policy.
std::vector<double> monte_carlo_value(const BattleEnv& env, const ParameterVector& agent_q,
                                      std::span<const InnateValueProfile> profiles, double gamma,
                                      std::size_t n_rollouts, const RngStream& rng);

// "<ALG>_<Personality>_seed<N>", shared by metrics and checkpoint names.
std::string run_stem(Algorithm algorithm, Personality personality, std::uint64_t seed);

// Full training run; writes the metrics CSV and final checkpoint into
// config.output_dir. Deterministic given the config.
RunSummary train(const RunConfig& config);

}  // namespace ivrl
