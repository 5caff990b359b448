#include "ivrl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <system_error>
#include <thread>

#include "ivrl/checkpoint.hpp"
#include "ivrl/errors.hpp"

namespace ivrl {

namespace {

void build_inputs(const BattleEnv& env, const WorldState& state, std::span<const InternalState> internal,
                  std::span<const int> last_actions, Matrix& out) {
  const std::size_t n = static_cast<std::size_t>(env.n_allies());
  const std::size_t obs_w = env.observation_size();
  out = Matrix(n, agent_input_width(env));
  for (std::size_t i = 0; i < n; ++i) {
    const auto features = internal[i].features();
    const auto obs = env.observe(state, static_cast<int>(i), features);
    auto row = out.row(i);
    std::copy(obs.begin(), obs.end(), row.begin());
    if (!last_actions.empty()) row[obs_w + static_cast<std::size_t>(last_actions[i])] = 1.0;
  }
}

ActionMask joint_mask(const BattleEnv& env, const WorldState& state) {
  ActionMask mask;
  mask.reserve(static_cast<std::size_t>(env.n_allies() * env.n_actions()));
  for (int i = 0; i < env.n_allies(); ++i) {
    const auto m = env.available_actions(state, i);
    mask.insert(mask.end(), m.begin(), m.end());
  }
  return mask;
}

double fraction(double v, double max) { return max > 0.0 ? std::clamp(v / max, 0.0, 1.0) : 0.0; }

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  learner.validate();
  if (!std::isfinite(profile.w_bw) || !std::isfinite(profile.w_sl) || !std::isfinite(profile.w_hp))
    throw ConfigError("critic.weights must be finite");
  if (eval_period == 0) throw ConfigError("run.eval_period must be positive");
  if (eval_episodes == 0) throw ConfigError("run.eval_episodes must be positive");
  if (buffer_capacity == 0) throw ConfigError("run.buffer_capacity must be positive");
  if (eval_workers == 0) throw ConfigError("run.eval_workers must be positive");
}

std::size_t agent_input_width(const BattleEnv& env) {
  return env.observation_size() + static_cast<std::size_t>(env.n_actions());
}

LearnerShape learner_shape(const BattleEnv& env) {
  return {static_cast<std::size_t>(env.n_allies()), static_cast<std::size_t>(env.n_actions()), agent_input_width(env),
          env.state_size()};
}

EpisodeRecord rollout_episode(const BattleEnv& env, const ParameterVector& agent_q,
                              std::span<const InnateValueProfile> profiles, double epsilon, RngStream& rng,
                              std::ostream* trace) {
  const std::size_t n = static_cast<std::size_t>(env.n_allies());
  if (profiles.size() != n)
    throw InvalidInput("rollout_episode: need one profile per ally (" + std::to_string(n) + ")");
  if (agent_q.input_width() != agent_input_width(env) || agent_q.output_width() != static_cast<std::size_t>(env.n_actions()))
    throw InvalidInput("rollout_episode: agent network widths do not match the scenario");

  EpisodeRecord ep;
  ep.n_agents = n;
  ep.n_actions = static_cast<std::size_t>(env.n_actions());
  ep.episode_limit = env.config().episode_limit;

  WorldState state = env.reset(rng);
  std::vector<InternalState> internal(n);
  JointAction last;
  Matrix inputs;
  build_inputs(env, state, internal, last, inputs);
  ep.observations.push_back(inputs);
  ep.states.push_back(env.global_state(state));
  ep.masks.push_back(joint_mask(env, state));

  while (true) {
    const JointAction actions = select_actions(agent_q, ep.observations.back(), ep.masks.back(), epsilon, rng);
    auto [next, events] = env.step(state, actions, rng);
    if (trace) write_trace_record(*trace, state, actions, next, events);

    std::vector<double> rewards(n);
    for (std::size_t i = 0; i < n; ++i) {
      const NeedFeatures f = extract_features(events, i);
      rewards[i] = compute_innate_reward(profiles[i], f);
      const UnitState& u = next.ally_units[i];
      const UnitSpec& spec = env.spec(u.unit_class);
      internal[i] = update_internal_state(internal[i], f, fraction(u.shield, spec.max_shield), fraction(u.hp, spec.max_hp));
    }
    const bool done = events.outcome != Outcome::Ongoing;
    ep.actions.push_back(actions);
    ep.team_rewards.push_back(team_average_reward(rewards));
    ep.rewards.push_back(std::move(rewards));
    ep.terminal.push_back(done ? 1 : 0);

    state = std::move(next);
    last = actions;
    build_inputs(env, state, internal, last, inputs);
    ep.observations.push_back(inputs);
    ep.states.push_back(env.global_state(state));
    ep.masks.push_back(joint_mask(env, state));
    if (done) {
      ep.outcome = events.outcome;
      break;
    }
  }
  ep.dead_allies = state.dead_allies();
  ep.dead_enemies = state.dead_enemies();
  return ep;
}

EpisodeSummary summarize_episode(const EpisodeRecord& ep) {
  EpisodeSummary s;
  s.outcome = ep.outcome;
  s.dead_allies = ep.dead_allies;
  s.dead_enemies = ep.dead_enemies;
  double total = 0.0;
  for (std::size_t i = 0; i < ep.n_agents; ++i) {
    double agent_total = 0.0;
    for (const auto& r : ep.rewards) agent_total += r[i];
    total += agent_total;
  }
  s.innate_return = ep.n_agents ? total / static_cast<double>(ep.n_agents) : 0.0;
  return s;
}

MetricsRecord evaluate(const BattleEnv& env, const ParameterVector& agent_q,
                       std::span<const InnateValueProfile> profiles, std::size_t n_episodes, const RngStream& rng,
                       std::uint64_t step, std::size_t workers) {
  if (n_episodes == 0) throw InvalidInput("evaluate: n_episodes must be at least 1");
  std::vector<EpisodeSummary> summaries(n_episodes);
  auto run_range = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t e = begin; e < n_episodes; e += stride) {
      RngStream episode_rng = rng.derive(static_cast<std::uint64_t>(e));
      summaries[e] = summarize_episode(rollout_episode(env, agent_q, profiles, 0.0, episode_rng));
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, n_episodes);
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          run_range(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return aggregate(summaries, step);
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

std::vector<double> monte_carlo_value(const BattleEnv& env, const ParameterVector& agent_q,
                                      std::span<const InnateValueProfile> profiles, double gamma,
                                      std::size_t n_rollouts, const RngStream& rng) {
  if (n_rollouts == 0) throw InvalidInput("monte_carlo_value: n_rollouts must be at least 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("monte_carlo_value: gamma must lie in [0, 1]");
  const std::size_t n = static_cast<std::size_t>(env.n_allies());
  std::vector<double> sums(n, 0.0);
  std::vector<double> per_agent;
  for (std::size_t k = 0; k < n_rollouts; ++k) {
    RngStream episode_rng = rng.derive(static_cast<std::uint64_t>(k));
    const EpisodeRecord ep = rollout_episode(env, agent_q, profiles, 0.0, episode_rng);
    for (std::size_t i = 0; i < n; ++i) {
      per_agent.clear();
      for (const auto& r : ep.rewards) per_agent.push_back(r[i]);
      sums[i] += discounted_return(per_agent, gamma);
    }
  }
  for (double& s : sums) s /= static_cast<double>(n_rollouts);
  return sums;
}

std::string run_stem(Algorithm algorithm, Personality personality, std::uint64_t seed) {
  return std::string(to_string(algorithm)) + "_" + std::string(to_string(personality)) + "_seed" + std::to_string(seed);
}

RunSummary train(const RunConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const BattleEnv env(config.scenario);
  const LearnerShape shape = learner_shape(env);
  const std::vector<InnateValueProfile> profiles(shape.n_agents, config.profile);

  const RngStream master(config.seed);
  RngStream init_rng = master.derive("init");
  const RngStream train_rng = master.derive("train");
  RngStream sampling_rng = master.derive("sampling");
  const RngStream eval_rng = master.derive("eval");

  LearnerParams params = init_learner_params(config.learner, shape, init_rng);
  LearnerParams target;
  maybe_update_target(0, config.learner.target_update_period, params, target);
  AdamConfig adam;
  adam.learning_rate = config.learner.learning_rate;
  adam.clip_norm = config.learner.grad_clip;
  OptimizerState optimizer = make_optimizer_state(params.size(), adam);
  ReplayStore store(config.buffer_capacity);

  RunSummary summary;
  std::uint64_t next_eval = 0;
  std::uint64_t eval_round = 0;
  auto run_eval = [&] {
    summary.records.push_back(evaluate(env, params.agent, profiles, config.eval_episodes, eval_rng.derive(eval_round++),
                                       summary.env_steps, config.eval_workers));
  };

  std::vector<double> flat;
  while (summary.env_steps < config.total_env_steps) {
    if (summary.env_steps >= next_eval) {
      run_eval();
      next_eval += config.eval_period;
      while (next_eval <= summary.env_steps) next_eval += config.eval_period;
    }
    const double epsilon = config.learner.epsilon.at(summary.env_steps);
    RngStream episode_rng = train_rng.derive(summary.episodes);
    EpisodeRecord ep = rollout_episode(env, params.agent, profiles, epsilon, episode_rng);
    summary.env_steps += ep.length();
    ++summary.episodes;
    store.push_episode(std::move(ep));

    if (auto batch = store.sample_batch(config.learner.batch_size, sampling_rng)) {
      const LossResult loss = learner_loss(*batch, params, target, config.learner);
      flat = params.flatten();
      optimizer_step(flat, loss.gradient, optimizer);
      params.assign(flat);
      ++summary.learner_steps;
      maybe_update_target(summary.learner_steps, config.learner.target_update_period, params, target);
    }
  }
  if (config.total_env_steps > 0 && (summary.records.empty() || summary.records.back().step != summary.env_steps))
    run_eval();

  summary.final_epsilon = config.learner.epsilon.at(summary.env_steps);
  const std::string stem = run_stem(config.learner.algorithm, config.profile.personality, config.seed);
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.output_dir.string() + ": " + ec.message());
  summary.metrics_path = config.output_dir / ("metrics_" + stem + ".csv");
  summary.checkpoint_path = config.output_dir / ("checkpoint_" + stem + ".ckpt");
  write_csv(summary.records, summary.metrics_path);
  save_checkpoint(params, &optimizer, summary.env_steps, summary.checkpoint_path);
  summary.final_params = std::move(params);
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return summary;
}

}  // namespace ivrl
