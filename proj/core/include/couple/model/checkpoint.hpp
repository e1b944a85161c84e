#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "couple/errors.hpp"
#include "couple/model/params.hpp"
#include "couple/model/queue.hpp"
#include "couple/model/trainer.hpp"
#include "couple/numerics/adam.hpp"

namespace couple::model {

class CheckpointError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ManifestMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Everything needed to resume training bit-for-bit. Random draws are keyed by
// (seed, step), so the seed in `train` plus `step` is the whole RNG state.
struct Checkpoint {
  CoupleParams params;
  numerics::AdamState adam;
  NegativeQueue queue;
  TrainConfig train;
  std::uint64_t step = 0;
  std::map<std::string, std::string> config;  // resolved run settings
};

// Layout: "CPLKIT01", u32 little-endian manifest length, UTF-8 JSON manifest,
// then little-endian float64 payloads in manifest order.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace couple::model
