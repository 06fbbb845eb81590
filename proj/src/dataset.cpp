#include "selma/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "selma/crc32.hpp"

namespace selma {

namespace {

constexpr char kMagic[9] = {'S', 'E', 'L', 'M', 'A', 'I', 'M', 'G', '1'};
constexpr std::uint32_t kVersion = 1;
// magic + version + count + dims, before any record
constexpr std::size_t kFixedHeader = 9 + 4 + 4 + 6;
constexpr std::size_t kRecordBytes = 4 + static_cast<std::size_t>(kImageDim) * 4;

void put_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get_u16_le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint8_t source_code(DatasetSource s) {
  return static_cast<std::uint8_t>(s);
}

}  // namespace

std::string dataset_source_name(DatasetSource s) {
  switch (s) {
    case DatasetSource::self_generated: return "self_generated";
    case DatasetSource::ground_truth: return "ground_truth";
    case DatasetSource::weak_model: return "weak_model";
  }
  throw std::invalid_argument("dataset_source_name: bad source");
}

DatasetSource parse_dataset_source(const std::string& s) {
  if (s == "self_generated" || s == "self") return DatasetSource::self_generated;
  if (s == "ground_truth" || s == "gt") return DatasetSource::ground_truth;
  if (s == "weak_model" || s == "weak") return DatasetSource::weak_model;
  throw std::invalid_argument("parse_dataset_source: " + s);
}

std::string sidecar_path(const std::string& path) {
  return path + ".prompts.jsonl";
}

void save_dataset(const SkillDataset& ds, const std::string& path) {
  if (ds.items.empty())
    throw std::invalid_argument("save_dataset: dataset is empty");
  std::vector<Prompt> prompts;
  for (const DatasetItem& it : ds.items) {
    if (it.image.data.size() != kImageDim)
      throw std::invalid_argument("save_dataset: bad image buffer");
    if (!it.image.data.allFinite())
      throw std::invalid_argument("save_dataset: non-finite pixels");
    if (it.prompt.skill != ds.skill)
      throw std::invalid_argument("save_dataset: prompt skill mismatch");
    prompts.push_back(it.prompt);
  }

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 9);
  put_u32_le(out, kVersion);
  put_u32_le(out, static_cast<std::uint32_t>(ds.items.size()));
  put_u16_le(out, kImageH);
  put_u16_le(out, kImageW);
  put_u16_le(out, kImageC);
  for (const DatasetItem& it : ds.items) {
    put_u32_le(out, static_cast<std::uint32_t>(it.prompt.id));
    for (int i = 0; i < kImageDim; ++i)
      put_u32_le(out, std::bit_cast<std::uint32_t>(it.image.data[i]));
  }
  out.push_back(source_code(ds.source));
  put_u64_le(out, ds.generator_hash);
  put_u64_le(out, ds.prompts_hash);
  put_u64_le(out, ds.seed);
  put_u32_le(out, crc32(out.data() + 9, out.size() - 9));

  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw DatasetError(DatasetError::Kind::io,
                       "save_dataset: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f)
    throw DatasetError(DatasetError::Kind::io,
                       "save_dataset: write failed for " + path);

  std::ofstream side(sidecar_path(path));
  if (!side)
    throw DatasetError(DatasetError::Kind::io,
                       "save_dataset: cannot open " + sidecar_path(path));
  side << prompts_to_jsonl(prompts);
  if (!side)
    throw DatasetError(DatasetError::Kind::io,
                       "save_dataset: sidecar write failed");
}

SkillDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw DatasetError(DatasetError::Kind::io,
                       "load_dataset: cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());

  if (buf.size() < 9)
    throw DatasetError(DatasetError::Kind::header_parse,
                       "load_dataset: file shorter than magic");
  if (std::memcmp(buf.data(), kMagic, 9) != 0)
    throw DatasetError(DatasetError::Kind::bad_magic,
                       "load_dataset: bad magic");
  if (buf.size() < kFixedHeader)
    throw DatasetError(DatasetError::Kind::header_parse,
                       "load_dataset: truncated header");
  const std::uint32_t version = get_u32_le(buf.data() + 9);
  if (version != kVersion)
    throw DatasetError(DatasetError::Kind::version_mismatch,
                       "load_dataset: version " + std::to_string(version));
  const std::uint32_t count = get_u32_le(buf.data() + 13);
  const std::uint16_t h = get_u16_le(buf.data() + 17);
  const std::uint16_t w = get_u16_le(buf.data() + 19);
  const std::uint16_t c = get_u16_le(buf.data() + 21);
  if (h != kImageH || w != kImageW || c != kImageC)
    throw DatasetError(DatasetError::Kind::header_parse,
                       "load_dataset: unsupported canvas dimensions");

  constexpr std::size_t kTrailer = 1 + 24 + 4;  // source + provenance + crc
  const std::size_t expected = kFixedHeader + count * kRecordBytes + kTrailer;
  if (buf.size() < expected)
    throw DatasetError(DatasetError::Kind::truncated,
                       "load_dataset: truncated records");
  if (buf.size() > expected)
    throw DatasetError(DatasetError::Kind::header_parse,
                       "load_dataset: trailing bytes");

  const std::uint32_t stored_crc = get_u32_le(buf.data() + buf.size() - 4);
  if (crc32(buf.data() + 9, buf.size() - 13) != stored_crc)
    throw DatasetError(DatasetError::Kind::checksum_mismatch,
                       "load_dataset: checksum mismatch");

  const std::uint8_t* trailer = buf.data() + buf.size() - kTrailer;
  const std::uint8_t source = trailer[0];
  if (source > 2)
    throw DatasetError(DatasetError::Kind::header_parse,
                       "load_dataset: bad source code");

  std::ifstream side(sidecar_path(path));
  if (!side)
    throw DatasetError(DatasetError::Kind::sidecar,
                       "load_dataset: missing sidecar " + sidecar_path(path));
  std::string side_text((std::istreambuf_iterator<char>(side)),
                        std::istreambuf_iterator<char>());
  std::map<int, Prompt> by_id;
  try {
    for (Prompt& p : prompts_from_jsonl(side_text))
      if (!by_id.emplace(p.id, std::move(p)).second)
        throw std::invalid_argument("duplicate prompt id");
  } catch (const std::exception& e) {
    throw DatasetError(DatasetError::Kind::sidecar,
                       std::string("load_dataset: bad sidecar: ") + e.what());
  }

  SkillDataset ds;
  ds.source = static_cast<DatasetSource>(source);
  ds.generator_hash = get_u64_le(trailer + 1);
  ds.prompts_hash = get_u64_le(trailer + 9);
  ds.seed = get_u64_le(trailer + 17);
  const std::uint8_t* p = buf.data() + kFixedHeader;
  for (std::uint32_t r = 0; r < count; ++r) {
    DatasetItem item;
    const int prompt_id = static_cast<int>(get_u32_le(p));
    p += 4;
    const auto it = by_id.find(prompt_id);
    if (it == by_id.end())
      throw DatasetError(DatasetError::Kind::sidecar,
                         "load_dataset: record references unknown prompt id " +
                             std::to_string(prompt_id));
    item.prompt = it->second;
    for (int i = 0; i < kImageDim; ++i, p += 4)
      item.image.data[i] = std::bit_cast<float>(get_u32_le(p));
    ds.items.push_back(std::move(item));
  }
  if (!ds.items.empty()) ds.skill = ds.items.front().prompt.skill;
  for (const DatasetItem& it : ds.items)
    if (it.prompt.skill != ds.skill)
      throw DatasetError(DatasetError::Kind::sidecar,
                         "load_dataset: mixed skills in sidecar");
  return ds;
}

}  // namespace selma
