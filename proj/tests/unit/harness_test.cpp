#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ivrl/checkpoint.hpp"
#include "ivrl/errors.hpp"
#include "ivrl/harness.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace ivrl;

namespace {

ScenarioConfig tiny_scenario() {
  ScenarioConfig c;
  c.grid_width = 8;
  c.grid_height = 6;
  c.episode_limit = 30;
  c.allies = {1, 1};
  c.enemies = {1, 1};
  c.spawn_depth = 2;
  c.spawn_height = 3;
  return c;
}

ParameterVector agent_net(const BattleEnv& env, std::uint64_t seed) {
  LearnerConfig cfg;
  cfg.algorithm = Algorithm::IQL;
  cfg.agent_hidden = {8};
  RngStream rng(seed);
  return init_learner_params(cfg, learner_shape(env), rng).agent;
}

RunConfig smoke_run(const std::filesystem::path& out, std::uint64_t steps) {
  RunConfig r;
  r.learner.algorithm = Algorithm::QMIX;
  r.learner.epsilon.horizon = steps;
  r.profile = preset_profile(Algorithm::QMIX, Personality::Neutral);
  r.total_env_steps = steps;
  r.eval_period = steps / 2;
  r.eval_episodes = 4;
  r.seed = 5;
  r.output_dir = out;
  return r;
}

}  // namespace

TEST(Rollout, DeterministicUnderFullExploration) {
  const BattleEnv env{ScenarioConfig{}};
  const ParameterVector q = agent_net(env, 1);
  const std::vector<InnateValueProfile> profiles(5, preset_profile(Algorithm::IQL, Personality::Coward));
  RngStream a(3), b(3);
  const EpisodeRecord x = rollout_episode(env, q, profiles, 1.0, a);
  const EpisodeRecord y = rollout_episode(env, q, profiles, 1.0, b);
  EXPECT_EQ(x.actions, y.actions);
  EXPECT_EQ(x.rewards, y.rewards);
  EXPECT_EQ(x.observations, y.observations);
  EXPECT_NO_THROW(validate_episode(x));
}

TEST(Rollout, CriticIsTheOnlyRewardSource) {
  const BattleEnv env{ScenarioConfig{}};
  const ParameterVector q = agent_net(env, 2);
  const InnateValueProfile profile = preset_profile(Algorithm::QTRAN, Personality::Reckless);
  const std::vector<InnateValueProfile> profiles(5, profile);
  RngStream rng(8);
  std::ostringstream trace;
  const EpisodeRecord ep = rollout_episode(env, q, profiles, 0.5, rng, &trace);
  std::istringstream lines(trace.str());
  std::string line;
  std::size_t t = 0;
  while (std::getline(lines, line)) {
    const auto rec = nlohmann::json::parse(line);
    const double won = rec["outcome"] == "won" ? 1.0 : 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const NeedFeatures f{won, rec["ally_shield_lost"][i].get<double>(), rec["ally_hp_lost"][i].get<double>()};
      EXPECT_EQ(ep.rewards[t][i], compute_innate_reward(profile, f));
    }
    EXPECT_NEAR(ep.team_rewards[t], team_average_reward(ep.rewards[t]), 1e-12);
    ++t;
  }
  EXPECT_EQ(t, ep.length());
  EXPECT_EQ(ep.terminal.back(), 1);
}

TEST(Rollout, HopelessTeamLosesBeforeLimit) {
  ScenarioConfig c = tiny_scenario();
  c.allies = {0, 1};
  c.enemies = {0, 3};
  c.melee.max_hp = 1.0;
  c.melee.max_shield = 0.0;
  c.episode_limit = 100;
  const BattleEnv env{c};
  const ParameterVector q = agent_net(env, 3);
  const std::vector<InnateValueProfile> profiles(1, preset_profile(Algorithm::IQL, Personality::Neutral));
  RngStream rng(4);
  const EpisodeRecord ep = rollout_episode(env, q, profiles, 0.0, rng);
  EXPECT_EQ(ep.outcome, Outcome::Lost);
  EXPECT_LT(ep.length(), 100u);
  EXPECT_EQ(ep.dead_allies, 1);
}

TEST(Rollout, RejectsMismatchedInputs) {
  const BattleEnv env{ScenarioConfig{}};
  const ParameterVector q = agent_net(env, 1);
  const std::vector<InnateValueProfile> too_few(2);
  RngStream rng(1);
  EXPECT_THROW(rollout_episode(env, q, too_few, 0.0, rng), InvalidInput);
  const BattleEnv other{tiny_scenario()};
  const std::vector<InnateValueProfile> two(2);
  EXPECT_THROW(rollout_episode(other, q, two, 0.0, rng), InvalidInput);
}

TEST(Evaluate, WorkerCountDoesNotChangeResult) {
  const BattleEnv env{ScenarioConfig{}};
  const ParameterVector q = agent_net(env, 6);
  const std::vector<InnateValueProfile> profiles(5, preset_profile(Algorithm::QMIX, Personality::Neutral));
  const RngStream rng(10);
  const MetricsRecord serial = evaluate(env, q, profiles, 7, rng, 3, 1);
  EXPECT_EQ(evaluate(env, q, profiles, 7, rng, 3, 3), serial);
  EXPECT_EQ(evaluate(env, q, profiles, 7, rng, 3, 16), serial);
  EXPECT_EQ(serial.step, 3u);
  EXPECT_EQ(serial.n_episodes, 7u);
  EXPECT_THROW(evaluate(env, q, profiles, 0, rng), InvalidInput);
}

TEST(MonteCarlo, DiscountedReturn) {
  EXPECT_EQ(discounted_return(std::vector<double>{1.0, 1.0}, 0.5), 1.5);
  EXPECT_EQ(discounted_return(std::vector<double>{2.0, 5.0, 9.0}, 0.0), 2.0);
}

TEST(MonteCarlo, ZeroDiscountIsMeanFirstReward) {
  const BattleEnv env{tiny_scenario()};
  const ParameterVector q = agent_net(env, 7);
  const std::vector<InnateValueProfile> profiles(2, preset_profile(Algorithm::IQL, Personality::Coward));
  const RngStream rng(12);
  const auto v = monte_carlo_value(env, q, profiles, 0.0, 6, rng);
  std::vector<double> expected(2, 0.0);
  for (std::uint64_t k = 0; k < 6; ++k) {
    RngStream r = rng.derive(k);
    const EpisodeRecord ep = rollout_episode(env, q, profiles, 0.0, r);
    for (std::size_t i = 0; i < 2; ++i) expected[i] += ep.rewards[0][i] / 6.0;
  }
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(v[i], expected[i], 1e-12);
}

TEST(MonteCarlo, VarianceShrinksWithRollouts) {
  const BattleEnv env{tiny_scenario()};
  const ParameterVector q = agent_net(env, 9);
  const std::vector<InnateValueProfile> profiles(2, preset_profile(Algorithm::IQL, Personality::Neutral));
  auto variance = [&](std::size_t n) {
    std::vector<double> est;
    for (std::uint64_t b = 0; b < 100; ++b)
      est.push_back(monte_carlo_value(env, q, profiles, 0.9, n, RngStream(1000 + b * 7 + n))[0]);
    double mean = 0.0, var = 0.0;
    for (double e : est) mean += e / 100.0;
    for (double e : est) var += (e - mean) * (e - mean) / 99.0;
    return var;
  };
  const double v2 = variance(2), v8 = variance(8);
  ASSERT_GT(v2, 0.0);
  // Expected ratio 4; the sampling spread of two 100-sample variances is wide.
  EXPECT_GT(v2 / v8, 2.0);
  EXPECT_LT(v2 / v8, 8.0);
}

TEST(Train, ZeroStepsIsEmpty) {
  const auto dir = ivrl::testing::scratch_dir("train_zero");
  RunConfig r = smoke_run(dir, 0);
  r.eval_period = 1;
  const RunSummary s = train(r);
  EXPECT_TRUE(s.records.empty());
  EXPECT_EQ(s.env_steps, 0u);
  EXPECT_EQ(ivrl::testing::read_file(s.metrics_path), std::string(kMetricsCsvHeader) + "\n");
}

TEST(Train, SmokeRunFollowsSchedule) {
  const auto dir = ivrl::testing::scratch_dir("train_smoke");
  RunConfig r = smoke_run(dir, 5000);
  r.learner.epsilon.horizon = 8000;
  const RunSummary s = train(r);
  EXPECT_GE(s.env_steps, 5000u);
  EXPECT_DOUBLE_EQ(s.final_epsilon, r.learner.epsilon.at(s.env_steps));
  EXPECT_GT(s.learner_steps, 0u);
  ASSERT_GE(s.records.size(), 3u);
  EXPECT_EQ(s.records.front().step, 0u);
  EXPECT_EQ(s.records.back().step, s.env_steps);
  for (std::size_t k = 1; k < s.records.size(); ++k) EXPECT_LT(s.records[k - 1].step, s.records[k].step);
  EXPECT_EQ(s.metrics_path.filename(), "metrics_QMIX_Neutral_seed5.csv");
  EXPECT_TRUE(std::filesystem::exists(s.checkpoint_path));
  EXPECT_EQ(read_csv(s.metrics_path), s.records);

  // The stored checkpoint reproduces the final evaluation exactly.
  const Checkpoint c = load_checkpoint(s.checkpoint_path);
  EXPECT_EQ(c.params, s.final_params);
  EXPECT_EQ(c.step, s.env_steps);
}

TEST(Train, SameSeedSameFiles) {
  const auto a = ivrl::testing::scratch_dir("train_det_a");
  const auto b = ivrl::testing::scratch_dir("train_det_b");
  const RunSummary x = train(smoke_run(a, 1500));
  const RunSummary y = train(smoke_run(b, 1500));
  EXPECT_EQ(ivrl::testing::read_file(x.metrics_path), ivrl::testing::read_file(y.metrics_path));
  EXPECT_EQ(ivrl::testing::read_file(x.checkpoint_path), ivrl::testing::read_file(y.checkpoint_path));
}

TEST(Train, UnwritableOutputIsIoError) {
  const auto dir = ivrl::testing::scratch_dir("train_blocked");
  ivrl::testing::write_file(dir / "file", "x");
  RunConfig r = smoke_run(dir / "file" / "sub", 200);
  EXPECT_THROW(train(r), IoError);
}

TEST(Train, EveryAlgorithmRuns) {
  for (Algorithm alg : {Algorithm::IQL, Algorithm::QTRAN}) {
    const auto dir = ivrl::testing::scratch_dir(std::string("train_") + std::string(to_string(alg)));
    RunConfig r = smoke_run(dir, 800);
    r.learner.algorithm = alg;
    r.profile = preset_profile(alg, Personality::Coward);
    const RunSummary s = train(r);
    EXPECT_GT(s.learner_steps, 0u);
    EXPECT_EQ(s.final_params.algorithm, alg);
  }
}

TEST(Names, RunStem) { EXPECT_EQ(run_stem(Algorithm::QTRAN, Personality::Reckless, 4), "QTRAN_Reckless_seed4"); }
