#include <gtest/gtest.h>

#include "ivrl/checkpoint.hpp"
#include "ivrl/errors.hpp"
#include "test_support.hpp"

using namespace ivrl;

namespace {

Checkpoint sample(Algorithm alg, bool with_optimizer) {
  LearnerConfig cfg;
  cfg.algorithm = alg;
  cfg.agent_hidden = {6};
  cfg.mixer_embed = 3;
  cfg.qtran_hidden = {4};
  RngStream rng(77);
  Checkpoint c;
  c.params = init_learner_params(cfg, {3, 5, 7, 4}, rng);
  c.step = 12345;
  if (with_optimizer) {
    c.optimizer = make_optimizer_state(c.params.size());
    for (std::size_t k = 0; k < c.params.size(); ++k) {
      c.optimizer->first_moment[k] = 0.001 * static_cast<double>(k);
      c.optimizer->second_moment[k] = 1.0 / (1.0 + static_cast<double>(k));
    }
    c.optimizer->step = 42;
  }
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripEveryAlgorithm) {
  for (Algorithm alg : {Algorithm::IQL, Algorithm::QMIX, Algorithm::QTRAN})
    for (bool opt : {false, true}) {
      const Checkpoint c = sample(alg, opt);
      EXPECT_EQ(deserialize_checkpoint(serialize_checkpoint(c)), c) << to_string(alg) << opt;
    }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = ivrl::testing::scratch_dir("ckpt_file");
  const Checkpoint c = sample(Algorithm::QMIX, true);
  save_checkpoint(c.params, &*c.optimizer, c.step, dir / "a.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt"), c);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST(Checkpoint, TruncationAndCorruption) {
  const std::string bytes = serialize_checkpoint(sample(Algorithm::QTRAN, true));
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), CorruptFile);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 10)), CorruptFile);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(flipped), CorruptFile);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), CorruptFile);
}

TEST(Checkpoint, UnknownVersion) {
  std::string bytes = serialize_checkpoint(sample(Algorithm::IQL, false));
  bytes[8] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(deserialize_checkpoint(bytes), VersionMismatch);
}

TEST(Checkpoint, ByteStable) {
  const Checkpoint c = sample(Algorithm::QMIX, true);
  EXPECT_EQ(serialize_checkpoint(c), serialize_checkpoint(c));
  EXPECT_EQ(serialize_checkpoint(deserialize_checkpoint(serialize_checkpoint(c))), serialize_checkpoint(c));
}
