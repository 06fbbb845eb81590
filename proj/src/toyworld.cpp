#include "selma/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "selma/textsim.hpp"

namespace selma {

namespace {

using json = nlohmann::json;

constexpr std::array<const char*, 5> kSkillNames = {"COUNT", "COLOR", "SPATIAL",
                                                    "SIZE", "MULTI"};
constexpr std::array<const char*, 3> kShapeNames = {"circle", "square", "triangle"};
constexpr std::array<const char*, 3> kShapePlurals = {"circles", "squares",
                                                      "triangles"};
constexpr std::array<const char*, 6> kColorNames = {"red",    "green",   "blue",
                                                    "yellow", "magenta", "cyan"};
constexpr std::array<const char*, 2> kSizeNames = {"small", "large"};
constexpr std::array<const char*, 4> kRelationNames = {"left_of", "right_of",
                                                       "above", "below"};
constexpr std::array<const char*, 4> kCountWords = {"one", "two", "three", "four"};

const std::array<std::array<float, 3>, 6> kPalette = {{{1, 0, 0},
                                                       {0, 1, 0},
                                                       {0, 0, 1},
                                                       {1, 1, 0},
                                                       {1, 0, 1},
                                                       {0, 1, 1}}};

std::string attr_key(const ToyScene& s) {
  std::string k = "n=" + std::to_string(s.objects.size());
  for (const SceneObject& o : s.objects) {
    k += ";o=";
    k += shape_name(o.shape);
    k += ',';
    k += color_name(o.color);
    k += ',';
    k += size_name(o.size);
  }
  if (s.relation) {
    k += ";rel=";
    k += relation_name(*s.relation);
  }
  return k;
}

bool chebyshev_ok(const std::vector<std::pair<int, int>>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      const int dr = std::abs(cells[i].first - cells[j].first);
      const int dc = std::abs(cells[i].second - cells[j].second);
      if (std::max(dr, dc) < 2) return false;
    }
  return true;
}

bool relation_cells_ok(Relation r, std::pair<int, int> subj,
                       std::pair<int, int> obj) {
  switch (r) {
    case Relation::left_of: return obj.second - subj.second >= 2;
    case Relation::right_of: return subj.second - obj.second >= 2;
    case Relation::above: return obj.first - subj.first >= 2;
    case Relation::below: return subj.first - obj.first >= 2;
  }
  return false;
}

// Cells are a pure function of the attribute tuple: every caption maps to one
// fixed layout, so ground-truth rendering from a parsed caption is exact.
void place_objects(ToyScene& s) {
  Rng rng(scene_hash(s), streams::kScene);
  if (s.relation) {
    for (int tries = 0; tries < 1000; ++tries) {
      std::pair<int, int> subj{static_cast<int>(rng.bounded(4)),
                               static_cast<int>(rng.bounded(4))};
      std::pair<int, int> obj{static_cast<int>(rng.bounded(4)),
                              static_cast<int>(rng.bounded(4))};
      if (relation_cells_ok(*s.relation, subj, obj)) {
        s.objects[0].row = subj.first;
        s.objects[0].col = subj.second;
        s.objects[1].row = obj.first;
        s.objects[1].col = obj.second;
        return;
      }
    }
    std::pair<int, int> subj{1, 0}, obj{1, 2};
    switch (*s.relation) {
      case Relation::left_of: break;
      case Relation::right_of: subj = {1, 2}; obj = {1, 0}; break;
      case Relation::above: subj = {0, 1}; obj = {2, 1}; break;
      case Relation::below: subj = {2, 1}; obj = {0, 1}; break;
    }
    s.objects[0].row = subj.first;
    s.objects[0].col = subj.second;
    s.objects[1].row = obj.first;
    s.objects[1].col = obj.second;
    return;
  }
  const std::size_t n = s.objects.size();
  for (int tries = 0; tries < 1000; ++tries) {
    std::vector<std::pair<int, int>> cells;
    cells.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      cells.emplace_back(static_cast<int>(rng.bounded(4)),
                         static_cast<int>(rng.bounded(4)));
    if (chebyshev_ok(cells)) {
      for (std::size_t i = 0; i < n; ++i) {
        s.objects[i].row = cells[i].first;
        s.objects[i].col = cells[i].second;
      }
      return;
    }
  }
  static constexpr std::array<std::pair<int, int>, 4> kLattice = {
      {{0, 0}, {0, 2}, {2, 0}, {2, 2}}};
  for (std::size_t i = 0; i < n; ++i) {
    s.objects[i].row = kLattice[i].first;
    s.objects[i].col = kLattice[i].second;
  }
}

ToyScene draw_attrs(Skill skill, Rng& rng) {
  ToyScene s;
  s.skill = skill;
  auto color = [&] { return static_cast<ColorId>(rng.bounded(6)); };
  auto shape = [&] { return static_cast<Shape>(rng.bounded(3)); };
  auto size = [&] { return static_cast<SizeId>(rng.bounded(2)); };
  switch (skill) {
    case Skill::COUNT: {
      const int n = 1 + static_cast<int>(rng.bounded(4));
      SceneObject o{shape(), color(), 0, 0, size()};
      s.objects.assign(static_cast<std::size_t>(n), o);
      break;
    }
    case Skill::COLOR:
    case Skill::SIZE: {
      s.objects.push_back({shape(), color(), 0, 0, size()});
      break;
    }
    case Skill::SPATIAL:
    case Skill::MULTI: {
      // Canonical sampling order: subject color index strictly below the
      // object's, subject shape index not above, subject size not below.
      ColorId c1, c2;
      do {
        c1 = color();
        c2 = color();
      } while (static_cast<int>(c1) >= static_cast<int>(c2));
      Shape s1, s2;
      do {
        s1 = shape();
        s2 = shape();
      } while (static_cast<int>(s1) > static_cast<int>(s2));
      SizeId z1 = SizeId::small;
      SizeId z2 = SizeId::small;
      if (skill == Skill::MULTI) {
        do {
          z1 = size();
          z2 = size();
        } while (static_cast<int>(z1) < static_cast<int>(z2));
      }
      s.objects.push_back({s1, c1, 0, 0, z1});
      s.objects.push_back({s2, c2, 0, 0, z2});
      s.relation = static_cast<Relation>(rng.bounded(4));
      break;
    }
  }
  return s;
}

ToyScene sample_partition(Skill skill, Rng& rng, bool want_eval) {
  for (;;) {
    ToyScene s = draw_attrs(skill, rng);
    if (is_eval_scene(scene_hash(s)) == want_eval) {
      place_objects(s);
      return s;
    }
  }
}

bool size_is_mentioned(const ToyScene& s) {
  switch (s.skill) {
    case Skill::SIZE:
    case Skill::MULTI: return true;
    case Skill::SPATIAL: return false;
    case Skill::COUNT:
    case Skill::COLOR: return s.objects[0].size == SizeId::large;
  }
  return false;
}

std::string relation_phrase(Relation r, bool variant) {
  if (!variant) {
    switch (r) {
      case Relation::left_of: return "left of";
      case Relation::right_of: return "right of";
      case Relation::above: return "above";
      case Relation::below: return "below";
    }
  }
  switch (r) {
    case Relation::left_of: return "to the left of";
    case Relation::right_of: return "to the right of";
    case Relation::above: return "directly above";
    case Relation::below: return "directly below";
  }
  return {};
}

template <typename T, std::size_t N>
std::optional<T> lookup(const std::array<const char*, N>& names,
                        const std::string& t) {
  for (std::size_t i = 0; i < N; ++i)
    if (t == names[i]) return static_cast<T>(i);
  return std::nullopt;
}

struct ParsedObject {
  Shape shape = Shape::circle;
  ColorId color = ColorId::red;
  SizeId size = SizeId::small;
  bool size_worded = false;
};

struct ParsedCaption {
  int n = 1;  // total object count
  std::vector<ParsedObject> objs;
  std::optional<Relation> rel;
  bool count_style = false;
  bool multi_suffix = false;
};

[[noreturn]] void bad_caption(const std::string& text) {
  throw std::invalid_argument("not a grammar caption: " + text);
}

ParsedCaption parse_caption(const std::string& text) {
  const TokenSeq t = tokenize(text);
  ParsedCaption p;
  std::size_t i = 0;
  auto need = [&](std::size_t k) {
    if (i + k > t.size()) bad_caption(text);
  };
  auto parse_obj = [&](bool plural_shape) {
    ParsedObject o;
    need(1);
    if (auto z = lookup<SizeId>(kSizeNames, t[i])) {
      o.size = *z;
      o.size_worded = true;
      ++i;
    }
    need(2);
    auto c = lookup<ColorId>(kColorNames, t[i]);
    if (!c) bad_caption(text);
    o.color = *c;
    ++i;
    auto sh = plural_shape ? lookup<Shape>(kShapePlurals, t[i])
                           : lookup<Shape>(kShapeNames, t[i]);
    if (!sh) bad_caption(text);
    o.shape = *sh;
    ++i;
    return o;
  };

  if (t.empty()) bad_caption(text);
  if (auto cw = lookup<int>(kCountWords, t[0])) {
    p.count_style = true;
    p.n = *cw + 1;
    i = 1;
    ParsedObject o = parse_obj(p.n > 1);
    if (o.size_worded && o.size != SizeId::large) bad_caption(text);
    if (i != t.size()) bad_caption(text);
    p.objs.push_back(o);
    return p;
  }
  if (t[0] != "a") bad_caption(text);
  i = 1;
  p.objs.push_back(parse_obj(false));
  if (i == t.size()) return p;

  static const std::vector<std::pair<std::vector<std::string>, Relation>>
      kRelPhrases = {{{"to", "the", "left", "of"}, Relation::left_of},
                     {{"to", "the", "right", "of"}, Relation::right_of},
                     {{"directly", "above"}, Relation::above},
                     {{"directly", "below"}, Relation::below},
                     {{"left", "of"}, Relation::left_of},
                     {{"right", "of"}, Relation::right_of},
                     {{"above"}, Relation::above},
                     {{"below"}, Relation::below}};
  bool matched = false;
  for (const auto& [phrase, rel] : kRelPhrases) {
    if (i + phrase.size() <= t.size() &&
        std::equal(phrase.begin(), phrase.end(), t.begin() + static_cast<long>(i))) {
      p.rel = rel;
      i += phrase.size();
      matched = true;
      break;
    }
  }
  if (!matched) bad_caption(text);
  need(1);
  if (t[i] != "a") bad_caption(text);
  ++i;
  p.objs.push_back(parse_obj(false));
  p.n = 2;
  if (i != t.size()) {
    static const std::array<const char*, 4> kSuffix = {"on", "a", "black",
                                                       "background"};
    need(4);
    for (const char* w : kSuffix)
      if (t[i++] != w) bad_caption(text);
    if (i != t.size()) bad_caption(text);
    p.multi_suffix = true;
  }
  if (p.objs[0].size_worded != p.objs[1].size_worded) bad_caption(text);
  // Grammar pairs sizes with the background suffix (MULTI) and omits both in
  // SPATIAL; mixed forms are not productions.
  if (p.objs[0].size_worded != p.multi_suffix) bad_caption(text);
  return p;
}

FactList facts_common(int n, const std::vector<std::pair<ParsedObject, int>>& objs,
                      bool size_mentioned, std::optional<Relation> rel,
                      std::optional<std::pair<ColorId, ColorId>> rel_colors) {
  FactList fl;
  Fact f;
  f.kind = FactKind::count;
  f.count = n;
  fl.push_back(f);

  std::array<int, kNumColors> color_hist{};
  std::array<int, kNumShapes> shape_hist{};
  std::map<std::pair<int, int>, int> size_hist;  // (color, size) -> count
  for (const auto& [o, mult] : objs) {
    color_hist[static_cast<std::size_t>(o.color)] += mult;
    shape_hist[static_cast<std::size_t>(o.shape)] += mult;
    size_hist[{static_cast<int>(o.color), static_cast<int>(o.size)}] += mult;
  }
  for (int c = 0; c < kNumColors; ++c)
    if (color_hist[static_cast<std::size_t>(c)] > 0) {
      Fact g;
      g.kind = FactKind::color;
      g.color = static_cast<ColorId>(c);
      g.count = color_hist[static_cast<std::size_t>(c)];
      fl.push_back(g);
    }
  for (int s = 0; s < kNumShapes; ++s)
    if (shape_hist[static_cast<std::size_t>(s)] > 0) {
      Fact g;
      g.kind = FactKind::shape;
      g.shape = static_cast<Shape>(s);
      g.count = shape_hist[static_cast<std::size_t>(s)];
      fl.push_back(g);
    }
  if (size_mentioned) {
    for (const auto& [key, cnt] : size_hist) {
      Fact g;
      g.kind = FactKind::size;
      g.color = static_cast<ColorId>(key.first);
      g.size = static_cast<SizeId>(key.second);
      g.count = cnt;
      fl.push_back(g);
    }
  }
  if (rel) {
    Fact g;
    g.kind = FactKind::relation;
    g.rel = *rel;
    g.color = rel_colors->first;
    g.object_color = rel_colors->second;
    fl.push_back(g);
  }
  return fl;
}

bool relation_holds(Relation r, const ComponentInfo& a, const ComponentInfo& b) {
  switch (r) {
    case Relation::left_of: return a.cx < b.cx - kRelationDeadbandPx;
    case Relation::right_of: return a.cx > b.cx + kRelationDeadbandPx;
    case Relation::above: return a.cy < b.cy - kRelationDeadbandPx;
    case Relation::below: return a.cy > b.cy + kRelationDeadbandPx;
  }
  return false;
}

json fact_to_json(const Fact& f) {
  switch (f.kind) {
    case FactKind::count:
      return json{{"kind", "count"}, {"expected", f.count}};
    case FactKind::color:
      return json{{"kind", "color"},
                  {"expected", {{"color", color_name(f.color)}, {"count", f.count}}}};
    case FactKind::shape:
      return json{{"kind", "shape"},
                  {"expected", {{"shape", shape_name(f.shape)}, {"count", f.count}}}};
    case FactKind::size:
      return json{{"kind", "size"},
                  {"expected",
                   {{"size", size_name(f.size)},
                    {"color", color_name(f.color)},
                    {"count", f.count}}}};
    case FactKind::relation:
      return json{{"kind", "relation"},
                  {"expected",
                   {{"relation", relation_name(f.rel)},
                    {"subject_color", color_name(f.color)},
                    {"object_color", color_name(f.object_color)}}}};
  }
  throw std::logic_error("unreachable fact kind");
}

template <typename T, std::size_t N>
T lookup_or_throw(const std::array<const char*, N>& names, const std::string& t,
                  const char* what) {
  if (auto v = lookup<T>(names, t)) return *v;
  throw std::invalid_argument(std::string("unknown ") + what + ": " + t);
}

Fact fact_from_json(const json& j) {
  Fact f;
  const std::string kind = j.at("kind").get<std::string>();
  const json& e = j.at("expected");
  if (kind == "count") {
    f.kind = FactKind::count;
    f.count = e.get<int>();
  } else if (kind == "color") {
    f.kind = FactKind::color;
    f.color = lookup_or_throw<ColorId>(kColorNames, e.at("color"), "color");
    f.count = e.at("count").get<int>();
  } else if (kind == "shape") {
    f.kind = FactKind::shape;
    f.shape = lookup_or_throw<Shape>(kShapeNames, e.at("shape"), "shape");
    f.count = e.at("count").get<int>();
  } else if (kind == "size") {
    f.kind = FactKind::size;
    f.size = lookup_or_throw<SizeId>(kSizeNames, e.at("size"), "size");
    f.color = lookup_or_throw<ColorId>(kColorNames, e.at("color"), "color");
    f.count = e.at("count").get<int>();
  } else if (kind == "relation") {
    f.kind = FactKind::relation;
    f.rel = lookup_or_throw<Relation>(kRelationNames, e.at("relation"), "relation");
    f.color =
        lookup_or_throw<ColorId>(kColorNames, e.at("subject_color"), "color");
    f.object_color =
        lookup_or_throw<ColorId>(kColorNames, e.at("object_color"), "color");
  } else {
    throw std::invalid_argument("unknown fact kind: " + kind);
  }
  return f;
}

}  // namespace

std::string skill_name(Skill s) { return kSkillNames[static_cast<std::size_t>(s)]; }

Skill parse_skill(const std::string& name) {
  return lookup_or_throw<Skill>(kSkillNames, name, "skill");
}

std::string shape_name(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string color_name(ColorId c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string size_name(SizeId z) { return kSizeNames[static_cast<std::size_t>(z)]; }
std::string relation_name(Relation r) {
  return kRelationNames[static_cast<std::size_t>(r)];
}

const std::array<float, 3>& palette_rgb(ColorId c) {
  return kPalette[static_cast<std::size_t>(c)];
}

std::uint64_t scene_hash(const ToyScene& s) { return fnv1a64(attr_key(s)); }

bool is_eval_scene(std::uint64_t hash) { return hash % 5 == 0; }

ToyScene sample_scene(Skill skill, Rng& rng) {
  return sample_partition(skill, rng, false);
}

ToyScene sample_eval_scene(Skill skill, Rng& rng) {
  return sample_partition(skill, rng, true);
}

std::string caption(const ToyScene& s) {
  const SceneObject& o = s.objects.at(0);
  switch (s.skill) {
    case Skill::COUNT: {
      const std::size_t n = s.objects.size();
      std::string c = kCountWords.at(n - 1);
      if (o.size == SizeId::large) c += " large";
      c += ' ';
      c += color_name(o.color);
      c += ' ';
      c += n == 1 ? shape_name(o.shape)
                  : kShapePlurals[static_cast<std::size_t>(o.shape)];
      return c;
    }
    case Skill::COLOR: {
      std::string c = "a ";
      if (o.size == SizeId::large) c += "large ";
      c += color_name(o.color) + " " + shape_name(o.shape);
      return c;
    }
    case Skill::SIZE:
      return "a " + size_name(o.size) + " " + color_name(o.color) + " " +
             shape_name(o.shape);
    case Skill::SPATIAL: {
      const SceneObject& b = s.objects.at(1);
      const bool variant = (scene_hash(s) >> 16) & 1;
      return "a " + color_name(o.color) + " " + shape_name(o.shape) + " " +
             relation_phrase(*s.relation, variant) + " a " + color_name(b.color) +
             " " + shape_name(b.shape);
    }
    case Skill::MULTI: {
      const SceneObject& b = s.objects.at(1);
      return "a " + size_name(o.size) + " " + color_name(o.color) + " " +
             shape_name(o.shape) + " " + relation_phrase(*s.relation, false) +
             " a " + size_name(b.size) + " " + color_name(b.color) + " " +
             shape_name(b.shape) + ", on a black background";
    }
  }
  throw std::logic_error("unreachable skill");
}

FactList facts(const ToyScene& s) {
  std::vector<std::pair<ParsedObject, int>> objs;
  if (s.skill == Skill::COUNT) {
    const SceneObject& o = s.objects[0];
    objs.push_back({{o.shape, o.color, o.size, false},
                    static_cast<int>(s.objects.size())});
  } else {
    for (const SceneObject& o : s.objects)
      objs.push_back({{o.shape, o.color, o.size, false}, 1});
  }
  std::optional<std::pair<ColorId, ColorId>> rel_colors;
  if (s.relation)
    rel_colors = {s.objects[0].color, s.objects[1].color};
  return facts_common(static_cast<int>(s.objects.size()), objs,
                      size_is_mentioned(s), s.relation, rel_colors);
}

FactList facts_from_caption(const std::string& text) {
  const ParsedCaption p = parse_caption(text);
  std::vector<std::pair<ParsedObject, int>> objs;
  if (p.objs.size() == 1) {
    objs.push_back({p.objs[0], p.n});
  } else {
    objs.push_back({p.objs[0], 1});
    objs.push_back({p.objs[1], 1});
  }
  std::optional<std::pair<ColorId, ColorId>> rel_colors;
  if (p.rel) rel_colors = {p.objs[0].color, p.objs[1].color};
  return facts_common(p.n, objs, p.objs[0].size_worded, p.rel, rel_colors);
}

ToyScene scene_from_caption(const std::string& text) {
  const ParsedCaption p = parse_caption(text);
  ToyScene s;
  if (p.count_style) {
    s.skill = Skill::COUNT;
    SceneObject o{p.objs[0].shape, p.objs[0].color, 0, 0, p.objs[0].size};
    s.objects.assign(static_cast<std::size_t>(p.n), o);
  } else if (p.objs.size() == 1) {
    s.skill = p.objs[0].size_worded ? Skill::SIZE : Skill::COLOR;
    s.objects.push_back(
        {p.objs[0].shape, p.objs[0].color, 0, 0, p.objs[0].size});
  } else {
    s.skill = p.multi_suffix ? Skill::MULTI : Skill::SPATIAL;
    for (const ParsedObject& o : p.objs)
      s.objects.push_back({o.shape, o.color, 0, 0, o.size});
    s.relation = p.rel;
  }
  place_objects(s);
  return s;
}

const std::vector<std::pair<int, int>>& shape_mask(Shape s, SizeId z) {
  static const auto masks = [] {
    std::array<std::vector<std::pair<int, int>>, 6> m;
    auto idx = [](Shape sh, SizeId sz) {
      return static_cast<std::size_t>(sh) * 2 + static_cast<std::size_t>(sz);
    };
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        m[idx(Shape::square, SizeId::small)].push_back({dy, dx});
        if (!(dy == -1 && dx != 0))  // clip the top corners
          m[idx(Shape::circle, SizeId::small)].push_back({dy, dx});
      }
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        m[idx(Shape::square, SizeId::large)].push_back({dy, dx});
        if (dy * dy + dx * dx <= 6)
          m[idx(Shape::circle, SizeId::large)].push_back({dy, dx});
      }
    m[idx(Shape::triangle, SizeId::small)] = {{-1, 0}, {0, 0}, {1, -1}, {1, 1}};
    // Row widths 1,1,3,3,5 from apex to base.
    auto& tl = m[idx(Shape::triangle, SizeId::large)];
    tl = {{-2, 0}, {-1, 0}};
    for (int dx = -1; dx <= 1; ++dx) {
      tl.push_back({0, dx});
      tl.push_back({1, dx});
    }
    for (int dx = -2; dx <= 2; ++dx) tl.push_back({2, dx});
    return m;
  }();
  return masks[static_cast<std::size_t>(s) * 2 + static_cast<std::size_t>(z)];
}

double mask_fill_ratio(Shape s, SizeId z) {
  const auto& mask = shape_mask(s, z);
  int r0 = 99, r1 = -99, c0 = 99, c1 = -99;
  for (auto [dy, dx] : mask) {
    r0 = std::min(r0, dy);
    r1 = std::max(r1, dy);
    c0 = std::min(c0, dx);
    c1 = std::max(c1, dx);
  }
  return static_cast<double>(mask.size()) /
         (static_cast<double>(r1 - r0 + 1) * static_cast<double>(c1 - c0 + 1));
}

Image render(const ToyScene& s) {
  Image img;
  for (const SceneObject& o : s.objects) {
    int ay = 4 * o.row + 2;
    int ax = 4 * o.col + 2;
    if (o.size == SizeId::large) {
      ay = std::clamp(ay, 2, kImageH - 3);
      ax = std::clamp(ax, 2, kImageW - 3);
    }
    const auto& rgb = palette_rgb(o.color);
    for (auto [dy, dx] : shape_mask(o.shape, o.size)) {
      const int y = ay + dy;
      const int x = ax + dx;
      if (y < 0 || y >= kImageH || x < 0 || x >= kImageW) continue;
      for (int c = 0; c < kImageC; ++c) img.at(y, x, c) = rgb[static_cast<std::size_t>(c)];
    }
  }
  return img;
}

std::vector<ComponentInfo> detect_components(const Image& img) {
  if (img.data.size() != kImageDim)
    throw std::invalid_argument("image buffer must hold 16x16x3 values");
  auto on = [&](int y, int x) {
    const float* p = img.data.data() + (y * kImageW + x) * kImageC;
    return (p[0] + p[1] + p[2]) / 3.0f > kLuminanceThreshold;
  };
  std::array<bool, kImageH * kImageW> seen{};
  std::vector<ComponentInfo> comps;
  for (int y0 = 0; y0 < kImageH; ++y0)
    for (int x0 = 0; x0 < kImageW; ++x0) {
      if (seen[static_cast<std::size_t>(y0 * kImageW + x0)] || !on(y0, x0)) continue;
      std::vector<std::pair<int, int>> stack{{y0, x0}};
      std::vector<std::pair<int, int>> pixels;
      seen[static_cast<std::size_t>(y0 * kImageW + x0)] = true;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        pixels.push_back({y, x});
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || ny >= kImageH || nx < 0 || nx >= kImageW) continue;
            if (seen[static_cast<std::size_t>(ny * kImageW + nx)] || !on(ny, nx))
              continue;
            seen[static_cast<std::size_t>(ny * kImageW + nx)] = true;
            stack.push_back({ny, nx});
          }
      }
      ComponentInfo ci;
      ci.pixels = static_cast<int>(pixels.size());
      ci.r0 = ci.r1 = pixels[0].first;
      ci.c0 = ci.c1 = pixels[0].second;
      double sy = 0, sx = 0, sr = 0, sg = 0, sb = 0;
      for (auto [y, x] : pixels) {
        ci.r0 = std::min(ci.r0, y);
        ci.r1 = std::max(ci.r1, y);
        ci.c0 = std::min(ci.c0, x);
        ci.c1 = std::max(ci.c1, x);
        sy += y;
        sx += x;
        const float* p = img.data.data() + (y * kImageW + x) * kImageC;
        sr += p[0];
        sg += p[1];
        sb += p[2];
      }
      ci.cy = sy / ci.pixels;
      ci.cx = sx / ci.pixels;
      const double mr = sr / ci.pixels, mg = sg / ci.pixels, mb = sb / ci.pixels;
      double best = 1e9;
      for (int c = 0; c < kNumColors; ++c) {
        const auto& rgb = kPalette[static_cast<std::size_t>(c)];
        const double d = (mr - rgb[0]) * (mr - rgb[0]) +
                         (mg - rgb[1]) * (mg - rgb[1]) +
                         (mb - rgb[2]) * (mb - rgb[2]);
        if (d < best) {
          best = d;
          ci.color = static_cast<ColorId>(c);
        }
      }
      const int bh = ci.r1 - ci.r0 + 1;
      const int bw = ci.c1 - ci.c0 + 1;
      const double fill = static_cast<double>(ci.pixels) / (bh * bw);
      ci.shape = fill >= kSquareFillCutoff ? Shape::square
                 : fill >= kCircleFillCutoff ? Shape::circle
                                             : Shape::triangle;
      ci.size = std::max(bh, bw) >= kLargeSideThreshold ? SizeId::large
                                                        : SizeId::small;
      comps.push_back(ci);
    }
  return comps;
}

VerdictReport verify(const Image& img, const FactList& facts) {
  const std::vector<ComponentInfo> comps = detect_components(img);
  VerdictReport rep;
  rep.verdict.reserve(facts.size());
  for (const Fact& f : facts) {
    bool ok = false;
    switch (f.kind) {
      case FactKind::count:
        ok = static_cast<int>(comps.size()) == f.count;
        break;
      case FactKind::color: {
        int n = 0;
        for (const auto& c : comps) n += c.color == f.color;
        ok = n == f.count;
        break;
      }
      case FactKind::shape: {
        int n = 0;
        for (const auto& c : comps) n += c.shape == f.shape;
        ok = n == f.count;
        break;
      }
      case FactKind::size: {
        int n = 0;
        for (const auto& c : comps) n += c.color == f.color && c.size == f.size;
        ok = n == f.count;
        break;
      }
      case FactKind::relation: {
        for (std::size_t i = 0; i < comps.size() && !ok; ++i)
          for (std::size_t j = 0; j < comps.size() && !ok; ++j)
            ok = i != j && comps[i].color == f.color &&
                 comps[j].color == f.object_color &&
                 relation_holds(f.rel, comps[i], comps[j]);
        break;
      }
    }
    rep.verdict.push_back(ok);
  }
  int correct = 0;
  for (bool v : rep.verdict) correct += v;
  rep.accuracy =
      rep.verdict.empty() ? 0.0 : static_cast<double>(correct) / rep.verdict.size();
  return rep;
}

std::vector<SuiteEntry> build_eval_suite(Skill skill, int n, Rng& rng) {
  std::vector<SuiteEntry> suite;
  suite.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    const ToyScene s = sample_eval_scene(skill, rng);
    suite.push_back({caption(s), facts(s)});
  }
  return suite;
}

std::string suite_to_jsonl(const std::vector<SuiteEntry>& suite) {
  std::string out;
  for (const SuiteEntry& e : suite) {
    json j;
    j["prompt"] = e.prompt;
    json fs = json::array();
    for (const Fact& f : e.facts) fs.push_back(fact_to_json(f));
    j["facts"] = fs;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SuiteEntry> suite_from_jsonl(const std::string& text) {
  std::vector<SuiteEntry> suite;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    SuiteEntry e;
    e.prompt = j.at("prompt").get<std::string>();
    for (const json& fj : j.at("facts")) e.facts.push_back(fact_from_json(fj));
    suite.push_back(std::move(e));
  }
  return suite;
}

std::uint64_t suite_hash(const std::vector<SuiteEntry>& suite) {
  return fnv1a64(suite_to_jsonl(suite));
}

}  // namespace selma
