#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "selma/rng.hpp"
#include "selma/types.hpp"

namespace selma {

enum class Skill { COUNT, COLOR, SPATIAL, SIZE, MULTI };
enum class Shape { circle, square, triangle };
enum class ColorId { red, green, blue, yellow, magenta, cyan };
enum class SizeId { small, large };
enum class Relation { left_of, right_of, above, below };

constexpr int kNumSkills = 5;
constexpr int kNumColors = 6;
constexpr int kNumShapes = 3;
constexpr std::array<Skill, kNumSkills> kAllSkills = {
    Skill::COUNT, Skill::COLOR, Skill::SPATIAL, Skill::SIZE, Skill::MULTI};

constexpr int skill_index(Skill s) { return static_cast<int>(s); }

std::string skill_name(Skill s);
Skill parse_skill(const std::string& name);  // throws std::invalid_argument
std::string shape_name(Shape s);
std::string color_name(ColorId c);
std::string size_name(SizeId z);
std::string relation_name(Relation r);  // "left_of" etc.

// RGB triple of a palette color, components in {0,1}.
const std::array<float, 3>& palette_rgb(ColorId c);

struct SceneObject {
  Shape shape = Shape::circle;
  ColorId color = ColorId::red;
  int row = 0;  // 4x4 placement grid
  int col = 0;
  SizeId size = SizeId::small;
};

struct ToyScene {
  Skill skill = Skill::COUNT;
  std::vector<SceneObject> objects;
  std::optional<Relation> relation;  // present iff skill is SPATIAL or MULTI
};

enum class FactKind { count, color, shape, size, relation };

// One checkable statement about an image. Field use by kind:
//   count:    count
//   color:    color, count
//   shape:    shape, count
//   size:     size, color, count (size is always color-bound)
//   relation: rel, color (subject), object_color
struct Fact {
  FactKind kind = FactKind::count;
  int count = 0;
  ColorId color = ColorId::red;
  Shape shape = Shape::circle;
  SizeId size = SizeId::small;
  Relation rel = Relation::left_of;
  ColorId object_color = ColorId::red;
  friend bool operator==(const Fact&, const Fact&) = default;
};

using FactList = std::vector<Fact>;

struct VerdictReport {
  std::vector<bool> verdict;  // one per fact
  double accuracy = 0.0;      // correct / total, 0 for empty fact list
};

struct SuiteEntry {
  std::string prompt;
  FactList facts;
};

// Identity of the attribute tuple (cells excluded); drives the train/eval
// partition, placement seeding, and caption synonym slots.
std::uint64_t scene_hash(const ToyScene& s);
bool is_eval_scene(std::uint64_t hash);

// Draws from the train partition (attribute tuples with hash % 5 != 0).
ToyScene sample_scene(Skill skill, Rng& rng);
// Draws from the held-out eval partition (hash % 5 == 0).
ToyScene sample_eval_scene(Skill skill, Rng& rng);

std::string caption(const ToyScene& s);
FactList facts(const ToyScene& s);

// Parses a grammar-conforming caption; throws std::invalid_argument otherwise.
FactList facts_from_caption(const std::string& text);
ToyScene scene_from_caption(const std::string& text);

Image render(const ToyScene& s);

// Rule-based scorer. Throws std::invalid_argument on malformed image buffers.
VerdictReport verify(const Image& img, const FactList& facts);

std::vector<SuiteEntry> build_eval_suite(Skill skill, int n, Rng& rng);

// JSON Lines round trip: {"prompt":str,"facts":[{"kind":str,"expected":...}]}
std::string suite_to_jsonl(const std::vector<SuiteEntry>& suite);
std::vector<SuiteEntry> suite_from_jsonl(const std::string& text);
std::uint64_t suite_hash(const std::vector<SuiteEntry>& suite);

// Verifier internals, exposed so tests can probe calibration directly.
struct ComponentInfo {
  int pixels = 0;
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // inclusive bounding box
  double cy = 0.0, cx = 0.0;           // centroid in pixel coordinates
  ColorId color = ColorId::red;
  Shape shape = Shape::circle;
  SizeId size = SizeId::small;
};
std::vector<ComponentInfo> detect_components(const Image& img);

// Raster mask as (dy,dx) offsets around the anchor pixel.
const std::vector<std::pair<int, int>>& shape_mask(Shape s, SizeId z);
double mask_fill_ratio(Shape s, SizeId z);

constexpr double kLuminanceThreshold = 0.15;
constexpr double kSquareFillCutoff = 0.90;
constexpr double kCircleFillCutoff = 0.60;
constexpr int kLargeSideThreshold = 4;
constexpr double kRelationDeadbandPx = 1.0;

}  // namespace selma
