#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "selma/promptgen.hpp"
#include "selma/types.hpp"

namespace selma {

enum class DatasetSource { self_generated, ground_truth, weak_model };

std::string dataset_source_name(DatasetSource s);
DatasetSource parse_dataset_source(const std::string& s);

// Exactly one image per prompt, by construction.
struct DatasetItem {
  Prompt prompt;
  Image image;
};

struct SkillDataset {
  Skill skill = Skill::COUNT;
  DatasetSource source = DatasetSource::ground_truth;
  std::vector<DatasetItem> items;
  // Provenance: a dataset is a pure function of these three values.
  std::uint64_t generator_hash = 0;  // weight hash of the generating model
  std::uint64_t prompts_hash = 0;    // hash of the prompt pool it consumed
  std::uint64_t seed = 0;
};

struct DatasetError : std::runtime_error {
  enum class Kind {
    io,
    bad_magic,
    version_mismatch,
    header_parse,
    checksum_mismatch,
    truncated,
    sidecar,
  };
  Kind kind;
  DatasetError(Kind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}
};

// Binary layout: magic "SELMAIMG1", u32 version, u32 count, u16 h, u16 w,
// u16 c, then per record u32 prompt_id + h*w*c little-endian f32 pixels.
// After the records: u8 source code, u64 generator/prompts/seed provenance,
// and a CRC32 over every byte between the magic and the CRC, so any
// single-byte corruption is detectable. The full prompt records live in a
// sidecar `<path>.prompts.jsonl`.
void save_dataset(const SkillDataset& ds, const std::string& path);
SkillDataset load_dataset(const std::string& path);
std::string sidecar_path(const std::string& path);

}  // namespace selma
