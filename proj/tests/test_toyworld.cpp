#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/rng.hpp"
#include "selma/toyworld.hpp"
#include "selma/types.hpp"

using namespace selma;

namespace {

bool same_attributes(const ToyScene& a, const ToyScene& b) {
  if (a.objects.size() != b.objects.size()) return false;
  if (a.relation.has_value() != b.relation.has_value()) return false;
  if (a.relation && *a.relation != *b.relation) return false;
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    if (a.objects[i].shape != b.objects[i].shape) return false;
    if (a.objects[i].color != b.objects[i].color) return false;
    if (a.objects[i].size != b.objects[i].size) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("skill names round trip and reject garbage") {
  for (Skill s : kAllSkills) CHECK(parse_skill(skill_name(s)) == s);
  CHECK_THROWS_AS(parse_skill("JUGGLING"), std::invalid_argument);
}

TEST_CASE("caption and facts agree for every skill") {
  Rng rng(101, streams::kScene);
  for (Skill s : kAllSkills)
    for (int k = 0; k < 200; ++k) {
      const ToyScene scene = sample_scene(s, rng);
      const std::string text = caption(scene);
      CHECK(facts_from_caption(text) == facts(scene));
      const ToyScene back = scene_from_caption(text);
      CHECK(same_attributes(scene, back));
      CHECK(caption(back) == text);
      // The skill tag round trips except for the one genuine grammar overlap:
      // "a large <color> <shape>" reads as a size caption.
      if (s == Skill::COLOR && scene.objects[0].size == SizeId::large)
        CHECK(back.skill == Skill::SIZE);
      else
        CHECK(back.skill == s);
    }
}

TEST_CASE("caption parsing rejects non-grammar text") {
  CHECK_THROWS_AS(scene_from_caption("a photo of two red circles"),
                  std::invalid_argument);
  CHECK_THROWS_AS(facts_from_caption("hello world"), std::invalid_argument);
  CHECK_THROWS_AS(scene_from_caption(""), std::invalid_argument);
}

TEST_CASE("rendered scenes verify perfectly against their own facts") {
  Rng rng(7, streams::kScene);
  for (Skill s : kAllSkills)
    for (int k = 0; k < 100; ++k) {
      const ToyScene scene = sample_scene(s, rng);
      const VerdictReport r = verify(render(scene), facts(scene));
      CHECK(r.accuracy == 1.0);
      CHECK(std::all_of(r.verdict.begin(), r.verdict.end(),
                        [](bool b) { return b; }));
    }
}

TEST_CASE("verification survives mild pixel noise on at least 99% of scenes") {
  Rng rng(13, streams::kScene);
  Rng noise(13, streams::kNoise);
  int perfect = 0;
  const int n = 1000;
  for (int k = 0; k < n; ++k) {
    const Skill s = kAllSkills[k % kNumSkills];
    const ToyScene scene = sample_scene(s, rng);
    Image img = render(scene);
    for (float& v : img.data)
      v = std::clamp(v + 0.05f * static_cast<float>(noise.normal()), 0.0f, 1.0f);
    perfect += verify(img, facts(scene)).accuracy == 1.0;
  }
  CHECK(perfect >= 990);
}

TEST_CASE("an all-black image fails object facts") {
  Rng rng(23, streams::kScene);
  const ToyScene scene = sample_scene(Skill::COUNT, rng);
  Image black;
  black.data = VectorF::Zero(kImageDim);
  const VerdictReport r = verify(black, facts(scene));
  CHECK(r.accuracy < 1.0);
}

TEST_CASE("verify rejects malformed image buffers") {
  Image bad;
  bad.data = VectorF::Zero(17);
  CHECK_THROWS_AS(verify(bad, FactList{}), std::invalid_argument);
}

TEST_CASE("train and eval partitions are disjoint over many draws") {
  Rng rng(3, streams::kScene);
  std::set<std::uint64_t> train_hashes;
  for (int k = 0; k < 10000; ++k) {
    const ToyScene s = sample_scene(kAllSkills[k % kNumSkills], rng);
    const std::uint64_t h = scene_hash(s);
    CHECK(!is_eval_scene(h));
    train_hashes.insert(h);
  }
  Rng erng(3, streams::kEval);
  for (int k = 0; k < 2000; ++k) {
    const ToyScene s = sample_eval_scene(kAllSkills[k % kNumSkills], erng);
    const std::uint64_t h = scene_hash(s);
    CHECK(is_eval_scene(h));
    CHECK(train_hashes.count(h) == 0);
  }
}

TEST_CASE("scene_hash depends on attributes, not placement") {
  Rng rng(5, streams::kScene);
  ToyScene s = sample_scene(Skill::COLOR, rng);
  const std::uint64_t h0 = scene_hash(s);
  s.objects[0].row = (s.objects[0].row + 1) % 4;
  s.objects[0].col = (s.objects[0].col + 2) % 4;
  CHECK(scene_hash(s) == h0);
  s.objects[0].color =
      static_cast<ColorId>((static_cast<int>(s.objects[0].color) + 1) %
                           kNumColors);
  CHECK(scene_hash(s) != h0);
}

TEST_CASE("COUNT scenes cover every count value in 1000 draws") {
  Rng rng(0, streams::kScene);
  std::map<std::size_t, int> hist;
  for (int k = 0; k < 1000; ++k)
    ++hist[sample_scene(Skill::COUNT, rng).objects.size()];
  for (const auto& [count, freq] : hist) {
    CHECK(count >= 1);
    CHECK(count <= 4);
    CHECK(freq >= 100);
  }
  CHECK(hist.size() == 4);
}

TEST_CASE("scenes have the structure their skill promises") {
  Rng rng(31, streams::kScene);
  for (int k = 0; k < 200; ++k) {
    const ToyScene color = sample_scene(Skill::COLOR, rng);
    CHECK(color.objects.size() == 1);
    CHECK(!color.relation.has_value());
    const ToyScene spatial = sample_scene(Skill::SPATIAL, rng);
    CHECK(spatial.objects.size() == 2);
    CHECK(spatial.relation.has_value());
    CHECK(spatial.objects[0].color != spatial.objects[1].color);
    const ToyScene multi = sample_scene(Skill::MULTI, rng);
    CHECK(multi.objects.size() == 2);
    CHECK(multi.relation.has_value());
    const ToyScene size = sample_scene(Skill::SIZE, rng);
    CHECK(size.objects.size() == 1);
  }
}

TEST_CASE("connected components match the object count") {
  Rng rng(41, streams::kScene);
  for (Skill s : kAllSkills)
    for (int k = 0; k < 50; ++k) {
      const ToyScene scene = sample_scene(s, rng);
      const std::vector<ComponentInfo> comps = detect_components(render(scene));
      CHECK(comps.size() == scene.objects.size());
    }
}

TEST_CASE("shape masks separate cleanly from the classifier cutoffs") {
  for (SizeId z : {SizeId::small, SizeId::large}) {
    // Squares must sit above the square cutoff, circles between the two
    // cutoffs, triangles below the circle cutoff, each with >= 0.05 margin.
    CHECK(mask_fill_ratio(Shape::square, z) >= kSquareFillCutoff + 0.05);
    CHECK(mask_fill_ratio(Shape::circle, z) <= kSquareFillCutoff - 0.05);
    CHECK(mask_fill_ratio(Shape::circle, z) >= kCircleFillCutoff + 0.05);
    CHECK(mask_fill_ratio(Shape::triangle, z) <= kCircleFillCutoff - 0.05);
  }
}

TEST_CASE("shape mask bounding boxes respect the size classifier") {
  for (Shape sh : {Shape::circle, Shape::square, Shape::triangle}) {
    for (SizeId z : {SizeId::small, SizeId::large}) {
      const auto& px = shape_mask(sh, z);
      REQUIRE(!px.empty());
      int rmin = 99, rmax = -1, cmin = 99, cmax = -1;
      for (const auto& [r, c] : px) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
      }
      const int side = std::max(rmax - rmin, cmax - cmin) + 1;
      if (z == SizeId::large)
        CHECK(side >= kLargeSideThreshold);
      else
        CHECK(side < kLargeSideThreshold);
    }
  }
}

TEST_CASE("palette colors are saturated primaries") {
  std::set<std::array<float, 3>> seen;
  for (int c = 0; c < kNumColors; ++c) {
    const auto& rgb = palette_rgb(static_cast<ColorId>(c));
    for (float v : rgb) CHECK((v == 0.0f || v == 1.0f));
    seen.insert(rgb);
  }
  CHECK(seen.size() == static_cast<std::size_t>(kNumColors));
}

TEST_CASE("eval suites serialise to jsonl and back without loss") {
  Rng rng(9, streams::kEval);
  const std::vector<SuiteEntry> suite = build_eval_suite(Skill::MULTI, 12, rng);
  REQUIRE(suite.size() == 12);
  const std::string jsonl = suite_to_jsonl(suite);
  const std::vector<SuiteEntry> back = suite_from_jsonl(jsonl);
  REQUIRE(back.size() == suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    CHECK(back[i].prompt == suite[i].prompt);
    CHECK(back[i].facts == suite[i].facts);
  }
  CHECK(suite_hash(back) == suite_hash(suite));
  // Hash reacts to content.
  std::vector<SuiteEntry> mutated = suite;
  mutated[0].prompt += " x";
  CHECK(suite_hash(mutated) != suite_hash(suite));
}

TEST_CASE("eval suite prompts come from the eval partition") {
  Rng rng(77, streams::kEval);
  for (Skill s : kAllSkills) {
    const std::vector<SuiteEntry> suite = build_eval_suite(s, 8, rng);
    for (const SuiteEntry& e : suite) {
      const ToyScene scene = scene_from_caption(e.prompt);
      CHECK(is_eval_scene(scene_hash(scene)));
      CHECK(e.facts == facts_from_caption(e.prompt));
    }
  }
}
