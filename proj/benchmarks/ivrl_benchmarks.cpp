#include <benchmark/benchmark.h>

#include "ivrl/harness.hpp"

namespace {

using namespace ivrl;

void BM_EnvStep(benchmark::State& st) {
  const BattleEnv env{ScenarioConfig{}};
  RngStream rng(1);
  WorldState s = env.reset(rng);
  JointAction acts(static_cast<std::size_t>(env.n_allies()));
  for (auto _ : st) {
    for (int i = 0; i < env.n_allies(); ++i)
      acts[i] = env.available_actions(s, i)[action::kStop] ? action::kStop : action::kNoOp;
    auto [next, ev] = env.step(s, acts, rng);
    s = ev.outcome == Outcome::Ongoing ? std::move(next) : env.reset(rng);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_EnvStep);

void BM_ObserveAll(benchmark::State& st) {
  const BattleEnv env{ScenarioConfig{}};
  RngStream rng(2);
  const WorldState s = env.reset(rng);
  const std::array<double, kInternalFeatureCount> internal{0.5, 0.5, 0.5};
  for (auto _ : st)
    for (int i = 0; i < env.n_allies(); ++i) benchmark::DoNotOptimize(env.observe(s, i, internal));
}
BENCHMARK(BM_ObserveAll);

void BM_MlpForwardBackward(benchmark::State& st) {
  const std::size_t batch = static_cast<std::size_t>(st.range(0));
  const std::vector<std::size_t> hidden{64};
  RngStream rng(3);
  const ParameterVector p = init_params(mlp_layers(78, hidden, 11), rng);
  Matrix x(batch, 78, 0.1), upstream(batch, 11, 1.0);
  std::vector<double> grad(p.size());
  for (auto _ : st) {
    const ForwardTrace tr = forward_trace(p, x);
    benchmark::DoNotOptimize(backward(p, tr, upstream, grad));
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(1)->Arg(5)->Arg(64);

void BM_LearnerLoss(benchmark::State& st) {
  const auto algorithm = static_cast<Algorithm>(st.range(0));
  const BattleEnv env{ScenarioConfig{}};
  LearnerConfig cfg;
  cfg.algorithm = algorithm;
  RngStream rng(4);
  const LearnerParams params = init_learner_params(cfg, learner_shape(env), rng);
  const std::vector<InnateValueProfile> profiles(5, preset_profile(algorithm, Personality::Neutral));
  std::vector<EpisodePtr> batch;
  for (std::size_t k = 0; k < cfg.batch_size; ++k)
    batch.push_back(std::make_shared<const EpisodeRecord>(rollout_episode(env, params.agent, profiles, 1.0, rng)));
  for (auto _ : st) benchmark::DoNotOptimize(learner_loss(batch, params, params, cfg));
  st.SetLabel(std::string(to_string(algorithm)));
}
BENCHMARK(BM_LearnerLoss)
    ->Arg(static_cast<int>(Algorithm::IQL))
    ->Arg(static_cast<int>(Algorithm::QMIX))
    ->Arg(static_cast<int>(Algorithm::QTRAN))
    ->Unit(benchmark::kMillisecond);

void BM_RolloutEpisode(benchmark::State& st) {
  const BattleEnv env{ScenarioConfig{}};
  LearnerConfig cfg;
  RngStream rng(5);
  const LearnerParams params = init_learner_params(cfg, learner_shape(env), rng);
  const std::vector<InnateValueProfile> profiles(5, preset_profile(Algorithm::QMIX, Personality::Neutral));
  for (auto _ : st) benchmark::DoNotOptimize(rollout_episode(env, params.agent, profiles, 0.5, rng));
}
BENCHMARK(BM_RolloutEpisode)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
