#include "selma/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "selma/crc32.hpp"

namespace selma {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'S', 'E', 'L', 'M', 'A', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32_le(std::vector<std::uint8_t>& out, float f) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

float get_f32_le(const std::uint8_t* p) {
  return std::bit_cast<float>(get_u32_le(p));
}

// Row-major payload bytes for one tensor, little-endian f32.
void append_tensor(std::vector<std::uint8_t>& out, const MatrixF& m) {
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) put_f32_le(out, m(i, j));
}

json header_json(const Checkpoint& ck) {
  json layers = json::array();
  for (const TensorEntry& t : ck.tensors)
    layers.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
  return json{{"kind", checkpoint_kind_name(ck.kind)},
              {"layers", layers},
              {"rank", ck.rank},
              {"alpha", ck.alpha},
              {"skill", ck.skill},
              {"seed", ck.seed},
              {"step", ck.step},
              {"parent_hash", ck.parent_hash}};
}

TensorEntry make_entry(const std::string& name, const MatrixF& m) {
  TensorEntry t;
  t.name = name;
  t.rows = m.rows();
  t.cols = m.cols();
  t.data = m;
  return t;
}

const TensorEntry& find_tensor(const Checkpoint& ck, const std::string& name) {
  for (const TensorEntry& t : ck.tensors)
    if (t.name == name) return t;
  throw CheckpointError(CheckpointError::Kind::header_parse,
                        "checkpoint: missing tensor " + name);
}

}  // namespace

std::string checkpoint_kind_name(CheckpointKind k) {
  switch (k) {
    case CheckpointKind::base: return "base";
    case CheckpointKind::adapter: return "adapter";
    case CheckpointKind::gate: return "gate";
  }
  throw std::invalid_argument("checkpoint_kind_name: bad kind");
}

CheckpointKind parse_checkpoint_kind(const std::string& s) {
  if (s == "base") return CheckpointKind::base;
  if (s == "adapter") return CheckpointKind::adapter;
  if (s == "gate") return CheckpointKind::gate;
  throw std::invalid_argument("parse_checkpoint_kind: " + s);
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  for (const TensorEntry& t : ck.tensors) {
    if (t.rows != t.data.rows() || t.cols != t.data.cols())
      throw std::invalid_argument("save_checkpoint: shape mismatch in " +
                                  t.name);
    if (!all_finite(t.data))
      throw std::invalid_argument("save_checkpoint: non-finite values in " +
                                  t.name);
  }
  const std::string header = header_json(ck).dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32_le(out, kVersion);
  put_u32_le(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());

  std::vector<std::uint8_t> payload;
  for (const TensorEntry& t : ck.tensors) append_tensor(payload, t.data);
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32_le(out, crc32(payload.data(), payload.size()));

  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw CheckpointError(CheckpointError::Kind::io,
                          "save_checkpoint: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f)
    throw CheckpointError(CheckpointError::Kind::io,
                          "save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw CheckpointError(CheckpointError::Kind::io,
                          "load_checkpoint: cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());

  // Magic / version / header-length region: truncation here is a header error.
  if (buf.size() < 8)
    throw CheckpointError(CheckpointError::Kind::header_parse,
                          "load_checkpoint: file shorter than magic");
  if (std::memcmp(buf.data(), kMagic, 8) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "load_checkpoint: bad magic");
  if (buf.size() < 16)
    throw CheckpointError(CheckpointError::Kind::header_parse,
                          "load_checkpoint: truncated before header");
  const std::uint32_t version = get_u32_le(buf.data() + 8);
  if (version != kVersion)
    throw CheckpointError(
        CheckpointError::Kind::version_mismatch,
        "load_checkpoint: version " + std::to_string(version));
  const std::uint32_t header_len = get_u32_le(buf.data() + 12);
  if (buf.size() < 16 + static_cast<std::size_t>(header_len))
    throw CheckpointError(CheckpointError::Kind::header_parse,
                          "load_checkpoint: truncated header");

  Checkpoint ck;
  std::size_t payload_floats = 0;
  try {
    const json h = json::parse(buf.begin() + 16,
                               buf.begin() + 16 + header_len);
    ck.kind = parse_checkpoint_kind(h.at("kind").get<std::string>());
    ck.rank = h.at("rank").get<int>();
    ck.alpha = h.at("alpha").get<float>();
    ck.skill = h.at("skill").get<std::string>();
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.step = h.at("step").get<std::int64_t>();
    ck.parent_hash = h.at("parent_hash").get<std::string>();
    for (const json& l : h.at("layers")) {
      TensorEntry t;
      t.name = l.at("name").get<std::string>();
      const json& shape = l.at("shape");
      if (!shape.is_array() || shape.size() != 2)
        throw std::invalid_argument("shape must have two dims");
      t.rows = shape[0].get<long>();
      t.cols = shape[1].get<long>();
      if (t.name.empty() || t.rows < 1 || t.cols < 1)
        throw std::invalid_argument("bad layer entry");
      payload_floats += static_cast<std::size_t>(t.rows) *
                        static_cast<std::size_t>(t.cols);
      ck.tensors.push_back(std::move(t));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::header_parse,
                          std::string("load_checkpoint: bad header: ") +
                              e.what());
  }

  const std::size_t payload_off = 16 + header_len;
  const std::size_t payload_bytes = payload_floats * 4;
  if (buf.size() < payload_off + payload_bytes + 4)
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "load_checkpoint: truncated payload");
  if (buf.size() > payload_off + payload_bytes + 4)
    throw CheckpointError(
        CheckpointError::Kind::shape_mismatch,
        "load_checkpoint: payload larger than header promises");

  const std::uint8_t* payload = buf.data() + payload_off;
  const std::uint32_t stored_crc = get_u32_le(payload + payload_bytes);
  if (crc32(payload, payload_bytes) != stored_crc)
    throw CheckpointError(CheckpointError::Kind::checksum_mismatch,
                          "load_checkpoint: checksum mismatch");

  const std::uint8_t* p = payload;
  for (TensorEntry& t : ck.tensors) {
    t.data.resize(t.rows, t.cols);
    for (long i = 0; i < t.rows; ++i)
      for (long j = 0; j < t.cols; ++j, p += 4) t.data(i, j) = get_f32_le(p);
  }
  return ck;
}

Checkpoint checkpoint_of(const ModelF& m, std::uint64_t seed, std::int64_t step,
                         const std::string& parent_hash) {
  Checkpoint ck;
  ck.kind = CheckpointKind::base;
  ck.seed = seed;
  ck.step = step;
  ck.parent_hash = parent_hash;
  ck.tensors.push_back(make_entry("embed.table", m.embed.table));
  for (const DenseLayerF* l : {&m.dense1, &m.dense2, &m.dense3}) {
    ck.tensors.push_back(make_entry(l->name + ".W", l->W));
    ck.tensors.push_back(make_entry(l->name + ".b", l->b));
  }
  return ck;
}

Checkpoint checkpoint_of(const LoraF& a, std::uint64_t seed, std::int64_t step,
                         const std::string& parent_hash) {
  Checkpoint ck;
  ck.kind = CheckpointKind::adapter;
  ck.rank = a.rank;
  ck.alpha = a.alpha;
  ck.skill = a.skill;
  ck.seed = seed;
  ck.step = step;
  ck.parent_hash = parent_hash;
  for (const auto& [name, e] : a.layers) {
    ck.tensors.push_back(make_entry("lora." + name + ".A", e.A));
    ck.tensors.push_back(make_entry("lora." + name + ".B", e.B));
  }
  return ck;
}

Checkpoint checkpoint_of(const MoeGateF& g, const std::string& skill,
                         std::uint64_t seed, std::int64_t step,
                         const std::string& parent_hash) {
  Checkpoint ck;
  ck.kind = CheckpointKind::gate;
  ck.rank = g.k;  // K rides in the rank field
  ck.skill = skill;
  ck.seed = seed;
  ck.step = step;
  ck.parent_hash = parent_hash;
  for (const auto& [name, wg] : g.wg)
    ck.tensors.push_back(make_entry("gate." + name + ".Wg", wg));
  return ck;
}

ModelF model_from(const Checkpoint& ck, const NoiseSchedule& sched) {
  if (ck.kind != CheckpointKind::base)
    throw CheckpointError(CheckpointError::Kind::header_parse,
                          "model_from: checkpoint is not a base model");
  ModelF m;
  m.schedule = sched;
  m.embed.table = find_tensor(ck, "embed.table").data;
  m.dense1.name = "dense1";
  m.dense2.name = "dense2";
  m.dense3.name = "dense3";
  for (DenseLayerF* l : {&m.dense1, &m.dense2, &m.dense3}) {
    l->W = find_tensor(ck, l->name + ".W").data;
    l->b = find_tensor(ck, l->name + ".b").data;
  }
  return m;
}

LoraF lora_from(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::adapter)
    throw CheckpointError(CheckpointError::Kind::header_parse,
                          "lora_from: checkpoint is not an adapter");
  LoraF a;
  a.rank = ck.rank;
  a.alpha = ck.alpha;
  a.skill = ck.skill;
  for (const TensorEntry& t : ck.tensors) {
    // Names look like lora.<layer>.A / lora.<layer>.B.
    if (t.name.size() < 8 || t.name.compare(0, 5, "lora.") != 0)
      throw CheckpointError(CheckpointError::Kind::header_parse,
                            "lora_from: unexpected tensor " + t.name);
    const std::string layer = t.name.substr(5, t.name.size() - 7);
    const char which = t.name.back();
    if (which == 'A')
      a.layers[layer].A = t.data;
    else if (which == 'B')
      a.layers[layer].B = t.data;
    else
      throw CheckpointError(CheckpointError::Kind::header_parse,
                            "lora_from: unexpected tensor " + t.name);
  }
  return a;
}

MoeGateF gate_from(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::gate)
    throw CheckpointError(CheckpointError::Kind::header_parse,
                          "gate_from: checkpoint is not a gate");
  MoeGateF g;
  g.k = ck.rank;
  for (const TensorEntry& t : ck.tensors) {
    if (t.name.size() < 9 || t.name.compare(0, 5, "gate.") != 0 ||
        t.name.compare(t.name.size() - 3, 3, ".Wg") != 0)
      throw CheckpointError(CheckpointError::Kind::header_parse,
                            "gate_from: unexpected tensor " + t.name);
    g.wg[t.name.substr(5, t.name.size() - 8)] = t.data;
  }
  return g;
}

std::uint64_t payload_hash(const Checkpoint& ck) {
  std::uint64_t h = fnv1a64(checkpoint_kind_name(ck.kind));
  for (const TensorEntry& t : ck.tensors) {
    h = fnv1a64(t.name, h);
    h = fnv1a64_u64(static_cast<std::uint64_t>(t.rows), h);
    h = fnv1a64_u64(static_cast<std::uint64_t>(t.cols), h);
    std::vector<std::uint8_t> bytes;
    bytes.reserve(static_cast<std::size_t>(t.rows * t.cols) * 4);
    append_tensor(bytes, t.data);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw CheckpointError(CheckpointError::Kind::io,
                          "file_hash: cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
  return fnv1a64(buf.data(), buf.size());
}

}  // namespace selma
