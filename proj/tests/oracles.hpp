#pragma once

// Small problems with known answers, used to check that the learners
// actually learn. Shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "ivrl/approximator.hpp"
#include "ivrl/learners.hpp"
#include "ivrl/replay_buffer.hpp"
#include "test_support.hpp"

namespace ivrl::testing {

// Deterministic chain: states 0, 1, 2. Action 1 moves left, action 2 moves
// right, action 0 is a permanently masked no-op. Leaving the chain ends the
// episode: left of state 0 pays 0.5, right of state 2 pays 1.
struct Chain {
  static constexpr int kStates = 3;
  static constexpr int kLeft = 1;
  static constexpr int kRight = 2;
  static constexpr double kGamma = 0.9;

  struct Outcome {
    int next;  // -1 when the episode ends
    double reward;
  };

  static Outcome step(int s, int a) {
    if (a == kLeft) return s == 0 ? Outcome{-1, 0.5} : Outcome{s - 1, 0.0};
    return s == kStates - 1 ? Outcome{-1, 1.0} : Outcome{s + 1, 0.0};
  }

  static std::vector<double> encode(int s) {
    std::vector<double> v(kStates, 0.0);
    if (s >= 0) v[static_cast<std::size_t>(s)] = 1.0;
    return v;
  }

  // Value iteration on the action values until nothing moves.
  static std::array<double, kStates> optimal_values() {
    std::array<std::array<double, 3>, kStates> q{};
    for (int sweep = 0; sweep < 1000; ++sweep)
      for (int s = 0; s < kStates; ++s)
        for (int a : {kLeft, kRight}) {
          const Outcome o = step(s, a);
          double next = 0.0;
          if (o.next >= 0) next = std::max(q[o.next][kLeft], q[o.next][kRight]);
          q[s][a] = o.reward + kGamma * next;
        }
    std::array<double, kStates> v{};
    for (int s = 0; s < kStates; ++s) v[s] = std::max(q[s][kLeft], q[s][kRight]);
    return v;
  }
};

struct ChainReport {
  std::array<double, Chain::kStates> optimal{};
  std::array<double, Chain::kStates> learned{};      // masked max of the learned Q
  std::array<double, Chain::kStates> greedy_return{};  // discounted return of the greedy policy
  double max_error = 0.0;
};

inline ChainReport train_chain(std::uint64_t seed, std::size_t updates) {
  const ActionMask mask{0, 1, 1};
  RngStream rng(seed);
  ReplayStore store(400);
  RngStream data_rng = rng.derive("data");
  for (int e = 0; e < 400; ++e) {
    EpisodeBuilder b(1, 3);
    int s = static_cast<int>(data_rng.uniform_index(Chain::kStates));
    b.point({Chain::encode(s)}, {0.0}, mask);
    while (true) {
      const int a = data_rng.bernoulli(0.5) ? Chain::kLeft : Chain::kRight;
      const Chain::Outcome o = Chain::step(s, a);
      b.act({a}, {o.reward}, o.next < 0);
      b.point({Chain::encode(o.next)}, {0.0}, mask);
      if (o.next < 0) break;
      s = o.next;
    }
    store.push_episode(b.ep);
  }

  LearnerConfig cfg;
  cfg.algorithm = Algorithm::IQL;
  cfg.gamma = Chain::kGamma;
  cfg.agent_hidden = {};
  cfg.batch_size = 8;
  cfg.target_update_period = 200;
  RngStream init_rng = rng.derive("init");
  LearnerParams params = init_learner_params(cfg, {1, 3, Chain::kStates, 1}, init_rng);
  LearnerParams target;
  maybe_update_target(0, cfg.target_update_period, params, target);
  AdamConfig adam;
  adam.learning_rate = 0.02;
  OptimizerState opt = make_optimizer_state(params.size(), adam);
  RngStream sample_rng = rng.derive("sample");
  std::vector<double> flat;
  for (std::size_t k = 0; k < updates; ++k) {
    // Linear decay keeps Adam's late steps well below the tolerance.
    opt.learning_rate = adam.learning_rate * (1.0 - static_cast<double>(k) / static_cast<double>(updates)) + 1e-6;
    const auto batch = *store.sample_batch(cfg.batch_size, sample_rng);
    const LossResult loss = iql_loss(batch, params, target, cfg);
    flat = params.flatten();
    optimizer_step(flat, loss.gradient, opt);
    params.assign(flat);
    maybe_update_target(k + 1, cfg.target_update_period, params, target);
  }

  ChainReport r;
  r.optimal = Chain::optimal_values();
  for (int s = 0; s < Chain::kStates; ++s) {
    r.learned[s] = state_value(params.agent, Chain::encode(s), mask);
    int at = s;
    double discount = 1.0, ret = 0.0;
    for (int t = 0; t < 20 && at >= 0; ++t) {
      const auto q = forward(params.agent, Chain::encode(at));
      const Chain::Outcome o = Chain::step(at, masked_argmax(q, mask));
      ret += discount * o.reward;
      discount *= Chain::kGamma;
      at = o.next;
    }
    r.greedy_return[s] = ret;
    r.max_error = std::max({r.max_error, std::abs(r.learned[s] - r.optimal[s]),
                            std::abs(r.greedy_return[s] - r.optimal[s])});
  }
  return r;
}

// One-shot cooperative game for two agents with three actions each. Both
// agents receive the shared payoff as their own reward.
inline constexpr std::array<std::array<double, 3>, 3> kMatrixPayoff{{
    {10.0, -1.0, 0.0},
    {-1.0, 4.0, 1.0},
    {0.0, 1.0, 6.0},
}};

inline std::array<int, 2> matrix_optimum() {
  std::array<int, 2> best{0, 0};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (kMatrixPayoff[a][b] > kMatrixPayoff[best[0]][best[1]]) best = {a, b};
  return best;
}

// Trains IQL on uniformly explored play and returns the greedy joint action.
inline std::array<int, 2> train_matrix_game(std::uint64_t seed) {
  const ActionMask mask(6, 1);
  RngStream rng(seed);
  RngStream data_rng = rng.derive("data");
  ReplayStore store(600);
  for (int e = 0; e < 600; ++e) {
    const int a = static_cast<int>(data_rng.uniform_index(3));
    const int b = static_cast<int>(data_rng.uniform_index(3));
    const double pay = kMatrixPayoff[a][b];
    EpisodeBuilder eb(2, 3);
    eb.point({one_hot(2, 0), one_hot(2, 1)}, {0.0}, mask);
    eb.act({a, b}, {pay, pay}, true);
    eb.point({one_hot(2, 0), one_hot(2, 1)}, {0.0}, mask);
    store.push_episode(eb.ep);
  }

  LearnerConfig cfg;
  cfg.algorithm = Algorithm::IQL;
  cfg.agent_hidden = {16};
  cfg.batch_size = 32;
  RngStream init_rng = rng.derive("init");
  LearnerParams params = init_learner_params(cfg, {2, 3, 2, 1}, init_rng);
  LearnerParams target = params;
  AdamConfig adam;
  adam.learning_rate = 5e-3;
  OptimizerState opt = make_optimizer_state(params.size(), adam);
  RngStream sample_rng = rng.derive("sample");
  std::vector<double> flat;
  for (int k = 0; k < 3000; ++k) {
    const auto batch = *store.sample_batch(cfg.batch_size, sample_rng);
    const LossResult loss = iql_loss(batch, params, target, cfg);
    flat = params.flatten();
    optimizer_step(flat, loss.gradient, opt);
    params.assign(flat);
  }
  const ActionMask row(3, 1);
  return {masked_argmax(forward(params.agent, one_hot(2, 0)), row),
          masked_argmax(forward(params.agent, one_hot(2, 1)), row)};
}

}  // namespace ivrl::testing
