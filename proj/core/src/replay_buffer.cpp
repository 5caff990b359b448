#include "ivrl/replay_buffer.hpp"

#include <cmath>
#include <string>

#include "ivrl/errors.hpp"
#include "ivrl/innate_critic.hpp"

namespace ivrl {

StepRecord EpisodeRecord::step(std::size_t t) const {
  if (t >= length()) throw InvalidInput("EpisodeRecord::step: index " + std::to_string(t) + " out of range");
  return StepRecord{observations[t], states[t],      masks[t],     actions[t],         rewards[t],
                    team_rewards[t], terminal[t] != 0, observations[t + 1], states[t + 1], masks[t + 1]};
}

void validate_episode(const EpisodeRecord& e) {
  const std::size_t T = e.length();
  auto fail = [](const std::string& why) { throw InvalidInput("malformed episode: " + why); };
  if (T == 0) fail("no steps");
  if (e.n_agents == 0 || e.n_actions == 0) fail("zero agents or actions");
  if (e.episode_limit > 0 && T > static_cast<std::size_t>(e.episode_limit)) fail("longer than the episode limit");
  if (e.observations.size() != T + 1 || e.states.size() != T + 1 || e.masks.size() != T + 1)
    fail("time-indexed arrays must hold length + 1 entries");
  if (e.rewards.size() != T || e.team_rewards.size() != T || e.terminal.size() != T) fail("per-step arrays differ in length");
  for (std::size_t t = 0; t <= T; ++t) {
    if (e.observations[t].rows() != e.n_agents) fail("observation rows != agent count");
    if (t > 0 && e.observations[t].cols() != e.observations[0].cols()) fail("observation width changes");
    if (e.states[t].size() != e.states[0].size()) fail("state width changes");
    if (e.masks[t].size() != e.n_agents * e.n_actions) fail("mask size != agents * actions");
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (e.actions[t].size() != e.n_agents || e.rewards[t].size() != e.n_agents) fail("agent count mismatch");
    for (std::size_t i = 0; i < e.n_agents; ++i) {
      const int a = e.actions[t][i];
      if (a < 0 || static_cast<std::size_t>(a) >= e.n_actions) fail("action out of range");
    }
    const bool last = t + 1 == T;
    if ((e.terminal[t] != 0) != last) fail("terminal flag must be set on the last step only");
    if (std::abs(team_average_reward(e.rewards[t]) - e.team_rewards[t]) > 1e-12)
      fail("team reward differs from the mean of per-agent rewards");
  }
}

ReplayStore::ReplayStore(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay capacity must be positive");
  ring_.reserve(std::min<std::size_t>(capacity_, 1024));
}

const EpisodeRecord& ReplayStore::at(std::size_t i) const {
  if (i >= size()) throw InvalidInput("ReplayStore::at: index out of range");
  if (count_ < capacity_) return *ring_[i];
  return *ring_[(head_ + i) % capacity_];
}

void ReplayStore::push_episode(EpisodeRecord episode) {
  validate_episode(episode);
  auto ptr = std::make_shared<const EpisodeRecord>(std::move(episode));
  if (count_ < capacity_) {
    ring_.push_back(std::move(ptr));
    ++count_;
  } else {
    ring_[head_] = std::move(ptr);
    head_ = (head_ + 1) % capacity_;
  }
  ++inserted_;
}

std::optional<std::vector<EpisodePtr>> ReplayStore::sample_batch(std::size_t batch_size, RngStream& rng) const {
  if (batch_size == 0) throw InvalidInput("sample_batch: batch size must be positive");
  if (size() < batch_size) return std::nullopt;
  std::vector<EpisodePtr> batch;
  batch.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) batch.push_back(ring_[rng.uniform_index(size())]);
  return batch;
}

}  // namespace ivrl
