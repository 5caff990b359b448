#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ivrl/approximator.hpp"
#include "ivrl/battle_env.hpp"
#include "ivrl/rng.hpp"

namespace ivrl {

// View of one transition inside an EpisodeRecord.
struct StepRecord {
  const Matrix& observations;  // n_agents x input_width (network inputs)
  std::span<const double> state;
  std::span<const std::uint8_t> masks;  // n_agents * n_actions, row per agent
  std::span<const int> actions;
  std::span<const double> rewards;
  double team_reward;
  bool terminal;
  const Matrix& next_observations;
  std::span<const double> next_state;
  std::span<const std::uint8_t> next_masks;
};

// A whole episode. Time-indexed arrays of observations, states and masks
// hold length() + 1 entries: entry t + 1 is the successor of step t.
struct EpisodeRecord {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  int episode_limit = 0;

  std::vector<Matrix> observations;
  std::vector<std::vector<double>> states;
  std::vector<ActionMask> masks;
  std::vector<JointAction> actions;
  std::vector<std::vector<double>> rewards;
  std::vector<double> team_rewards;
  std::vector<std::uint8_t> terminal;

  Outcome outcome = Outcome::Ongoing;
  int dead_allies = 0;
  int dead_enemies = 0;

  std::size_t length() const { return actions.size(); }
  StepRecord step(std::size_t t) const;
};

// Throws InvalidInput unless the record is well formed: consistent shapes,
// terminal flag set on the last step only, team reward equal to the mean of
// the per-agent rewards, length within the episode limit.
void validate_episode(const EpisodeRecord& episode);

using EpisodePtr = std::shared_ptr<const EpisodeRecord>;

// Fixed-capacity FIFO of episodes. Stored episodes are immutable and shared,
// so a sampled batch stays valid after the store evicts it.
class ReplayStore {
 public:
  explicit ReplayStore(std::size_t capacity = 5000);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return count_; }
  std::uint64_t insertion_count() const { return inserted_; }

  // Oldest first.
  const EpisodeRecord& at(std::size_t i) const;

  void push_episode(EpisodeRecord episode);

  // Uniform with replacement. Empty optional when fewer than `batch_size`
  // episodes are stored (not ready yet).
  std::optional<std::vector<EpisodePtr>> sample_batch(std::size_t batch_size, RngStream& rng) const;

 private:
  std::size_t capacity_;
  std::vector<EpisodePtr> ring_;
  std::size_t head_ = 0;  // next write slot once full
  std::size_t count_ = 0;
  std::uint64_t inserted_ = 0;
};

}  // namespace ivrl
