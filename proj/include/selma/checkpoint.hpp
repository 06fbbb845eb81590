#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/model.hpp"

namespace selma {

enum class CheckpointKind { base, adapter, gate };

std::string checkpoint_kind_name(CheckpointKind k);
CheckpointKind parse_checkpoint_kind(const std::string& s);

struct TensorEntry {
  std::string name;
  long rows = 0, cols = 0;
  MatrixF data;
};

// On-disk artifact: magic "SELMACK1", u32 version, u32 header length, UTF-8
// JSON header {kind, layers:[{name,shape}], rank, alpha, skill, seed, step,
// parent_hash}, row-major little-endian f32 payloads in header order, then
// CRC32 of the payload bytes. Gate checkpoints carry K in the rank field.
struct Checkpoint {
  CheckpointKind kind = CheckpointKind::base;
  std::vector<TensorEntry> tensors;
  int rank = 0;
  float alpha = 0.0f;
  std::string skill;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string parent_hash;
};

struct CheckpointError : std::runtime_error {
  enum class Kind {
    io,
    bad_magic,
    version_mismatch,
    header_parse,
    shape_mismatch,
    checksum_mismatch,
    truncated,
  };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}
};

// Throws std::invalid_argument if any tensor value is non-finite.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_of(const ModelF& m, std::uint64_t seed, std::int64_t step,
                         const std::string& parent_hash = "");
Checkpoint checkpoint_of(const LoraF& a, std::uint64_t seed, std::int64_t step,
                         const std::string& parent_hash = "");
Checkpoint checkpoint_of(const MoeGateF& g, const std::string& skill,
                         std::uint64_t seed, std::int64_t step,
                         const std::string& parent_hash = "");

// Reconstruction; the schedule is configuration, not checkpoint state.
ModelF model_from(const Checkpoint& ck, const NoiseSchedule& sched);
LoraF lora_from(const Checkpoint& ck);
MoeGateF gate_from(const Checkpoint& ck);

// FNV-1a over name/shape/payload bytes; stable identity for in-memory weights.
std::uint64_t payload_hash(const Checkpoint& ck);

// FNV-1a over the raw bytes of a file. Throws CheckpointError{io} if unreadable.
std::uint64_t file_hash(const std::string& path);

}  // namespace selma
