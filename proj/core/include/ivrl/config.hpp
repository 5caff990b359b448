#pragma once

// Experiment configuration file. JSON with four optional sections:
//
//   {
//     "scenario": { "grid_width": 16, "grid_height": 16, "episode_limit": 120,
//                   "spawn_depth": 3, "spawn_height": 6,
//                   "allies":  { "ranged": 2, "melee": 3 },
//                   "enemies": { "ranged": 2, "melee": 3 },
//                   "ranged": { "max_hp": 80, "max_shield": 80, "attack_damage": 13,
//                               "attack_range": 6, "sight_range": 9,
//                               "shield_regen_rate": 2, "regen_delay": 10 },
//                   "melee":  { ... same keys ... } },
//     "critic":   { "personality": "Neutral", "preset_algorithm": "QMIX" }
//              or { "weights": [1, -1, -1] },
//     "learner":  { "algorithm": "QMIX", "gamma": 0.99, "learning_rate": 5e-4,
//                   "batch_size": 8, "target_update_period": 200,
//                   "epsilon_start": 1.0, "epsilon_end": 0.05, "epsilon_horizon": 50000,
//                   "lambda_opt": 1, "lambda_nopt": 1, "grad_clip": 10,
//                   "agent_hidden": [64], "mixer_embed": 32, "qtran_hidden": [64] },
//     "run":      { "total_env_steps": 50000, "eval_period": 5000, "eval_episodes": 16,
//                   "seed": 1, "output_dir": "runs", "buffer_capacity": 5000,
//                   "eval_workers": 1 }
//   }
//
// Missing keys take the defaults shown. Unknown keys are rejected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "ivrl/harness.hpp"

namespace ivrl {

struct CriticSpec {
  std::optional<Personality> personality;
  std::optional<Algorithm> preset_algorithm;  // defaults to the learner's
  std::optional<std::array<double, 3>> weights;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  CriticSpec critic;
  LearnerConfig learner;
  std::uint64_t total_env_steps = 50000;
  std::uint64_t eval_period = 5000;
  std::size_t eval_episodes = 16;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs";
  std::size_t buffer_capacity = 5000;
  std::size_t eval_workers = 1;

  // Resolves the critic profile and validates everything. Throws
  // ConfigError naming the offending key.
  RunConfig to_run_config() const;
};

InnateValueProfile resolve_profile(const CriticSpec& critic, Algorithm learner_algorithm);

// Throws ConfigError (naming the key) for malformed content.
ExperimentConfig parse_experiment_config(std::string_view text);
// Throws IoError naming the path when the file cannot be read.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace ivrl
