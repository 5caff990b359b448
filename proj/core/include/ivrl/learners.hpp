#pragma once

// Value-based multi-agent learners trained on innate rewards:
//   IQL   - independent Q-learning, each agent on its own reward;
//   QMIX  - monotonic mixing of per-agent values, team-average reward;
//   QTRAN - simplified QTRAN-base (joint value + consistency losses),
//           team-average reward.
// All agents share one Q network; agent identity is part of the input.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ivrl/approximator.hpp"
#include "ivrl/innate_critic.hpp"
#include "ivrl/replay_buffer.hpp"
#include "ivrl/rng.hpp"

namespace ivrl {

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::uint64_t horizon = 50000;

  // max(end, start - (start - end) * t / horizon)
  double at(std::uint64_t t) const;
};

struct LearnerConfig {
  Algorithm algorithm = Algorithm::QMIX;
  double gamma = 0.99;
  double learning_rate = 5e-4;
  std::size_t batch_size = 8;
  std::uint64_t target_update_period = 200;
  EpsilonSchedule epsilon;
  double lambda_opt = 1.0;
  double lambda_nopt = 1.0;
  double grad_clip = 10.0;
  std::vector<std::size_t> agent_hidden = {64};
  std::size_t mixer_embed = 32;
  std::vector<std::size_t> qtran_hidden = {64};

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Widths the networks are built for.
struct LearnerShape {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  std::size_t input_width = 0;
  std::size_t state_width = 0;
};

// Hypernetworks mapping the global state to the mixing weights. The two
// weight heads end in an absolute value, so the mixed value can never
// decrease when an agent's value increases.
struct MixerParams {
  std::size_t n_agents = 0;
  std::size_t embed = 0;
  ParameterVector hyper_w1;  // state -> n_agents * embed, |.|
  ParameterVector hyper_b1;  // state -> embed
  ParameterVector hyper_w2;  // state -> embed, |.|
  ParameterVector hyper_b2;  // state -> embed -> 1 (scalar bias head)
  friend bool operator==(const MixerParams&, const MixerParams&) = default;
};

struct QtranHeads {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  ParameterVector joint;  // [state, joint-action one-hot] -> Q_jt
  ParameterVector value;  // state -> V
  friend bool operator==(const QtranHeads&, const QtranHeads&) = default;
};

struct LearnerParams {
  Algorithm algorithm = Algorithm::IQL;
  ParameterVector agent;
  std::optional<MixerParams> mixer;
  std::optional<QtranHeads> qtran;

  // Every parameter block in a fixed order: agent, then the mixer's
  // hypernetworks (w1, b1, w2, b2) or QTRAN's (joint, value).
  std::vector<ParameterVector*> blocks();
  std::vector<const ParameterVector*> blocks() const;
  std::size_t size() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  friend bool operator==(const LearnerParams&, const LearnerParams&) = default;
};

LearnerParams init_learner_params(const LearnerConfig& config, const LearnerShape& shape, RngStream& rng);

// Highest-valued allowed action, lowest index on ties. Throws
// ContractViolation if nothing is allowed.
int masked_argmax(std::span<const double> q, std::span<const std::uint8_t> mask);

// Per agent: with probability epsilon a uniformly random allowed action,
// otherwise the masked argmax. `masks` holds one row of n_actions per agent.
JointAction select_actions(const ParameterVector& agent_q, const Matrix& observations,
                           std::span<const std::uint8_t> masks, double epsilon, RngStream& rng);

double td_target(double reward, double next_best_q, bool terminal, double gamma);

// Greedy state value: masked maximum of the agent's Q outputs.
double state_value(const ParameterVector& agent_q, std::span<const double> observation,
                   std::span<const std::uint8_t> mask);

struct LossResult {
  double loss = 0.0;
  std::vector<double> gradient;  // LearnerParams::flatten order
};

// Mean squared TD error of every (step, agent) pair whose agent is active,
// i.e. whose mask allows more than the lone no-op. Each agent bootstraps
// from its own reward and its own masked target maximum; an agent that is
// inactive at the next step is treated as terminal.
LossResult iql_loss(std::span<const EpisodePtr> batch, const LearnerParams& params,
                    const LearnerParams& target, const LearnerConfig& config);

double qmix_mix(std::span<const double> agent_chosen_qs, std::span<const double> global_state,
                const MixerParams& mixer);

struct MixGradient {
  double value = 0.0;
  std::vector<double> agent_qs;     // d value / d agent q
  std::vector<double> mixer_params; // hyper_w1, hyper_b1, hyper_w2, hyper_b2 concatenated
};

MixGradient qmix_mix_gradient(std::span<const double> agent_chosen_qs, std::span<const double> global_state,
                              const MixerParams& mixer);

// Mean over steps of (Q_tot - y)^2 with y = team reward + gamma * target
// Q_tot at the next state under per-agent masked greedy target actions.
LossResult qmix_loss(std::span<const EpisodePtr> batch, const LearnerParams& params,
                     const LearnerParams& target, const LearnerConfig& config);

struct QtranLossResult {
  double td = 0.0;
  double opt = 0.0;
  double nopt = 0.0;
  double total = 0.0;
  std::vector<double> gradient;
};

// td:   mean (Q_jt(s, u) - y)^2
// opt:  mean (sum_i max Q_i - stop(Q_jt(s, u_greedy)) + V(s))^2
// nopt: mean min(sum_i Q_i(u_i) - stop(Q_jt(s, u)) + V(s), 0)^2
QtranLossResult qtran_losses(std::span<const EpisodePtr> batch, const LearnerParams& params,
                             const LearnerParams& target, const LearnerConfig& config);

// Dispatches on config.algorithm.
LossResult learner_loss(std::span<const EpisodePtr> batch, const LearnerParams& params,
                        const LearnerParams& target, const LearnerConfig& config);

// Hard copy whenever step_counter is a multiple of period. Returns whether a
// copy happened.
bool maybe_update_target(std::uint64_t step_counter, std::uint64_t period, const LearnerParams& params,
                         LearnerParams& target);

}  // namespace ivrl
