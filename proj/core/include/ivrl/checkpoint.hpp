#pragma once

// Binary checkpoint format (all integers and floats little-endian):
//
//   "IVRLCKPT"  u32 version  u8 algorithm  u64 step
//   u64 n_agents  u64 aux            (mixer embed width or action count)
//   u32 n_blocks, per block:
//     u32 n_layers, per layer: u64 in, u64 out, u8 activation
//     u64 n_params, f64[n_params]
//   u8 has_optimizer, if set:
//     u64 step  f64 lr beta1 beta2 epsilon clip_norm
//     u64 n, f64[n] first moment, f64[n] second moment
//   u64 FNV-1a hash of every preceding byte

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ivrl/approximator.hpp"
#include "ivrl/learners.hpp"

namespace ivrl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  LearnerParams params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t step = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws CorruptFile on truncation or hash mismatch, VersionMismatch on an
// unknown version tag.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const LearnerParams& params, const OptimizerState* optimizer, std::uint64_t step,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ivrl
