#pragma once

#include <map>
#include <string>
#include <vector>

#include "selma/diffusion.hpp"
#include "selma/model.hpp"
#include "selma/toyworld.hpp"

namespace selma {

struct SkillScore {
  int n_prompts = 0;
  int facts_total = 0;
  int facts_correct = 0;
  double accuracy = 0.0;  // facts_correct / facts_total, 0 when empty
};

using SuiteSet = std::map<Skill, std::vector<SuiteEntry>>;

// Held-out suites for all skills, n entries each, seeded independently of
// any training stream.
SuiteSet build_all_suites(int per_skill, std::uint64_t seed);
std::uint64_t suites_hash(const SuiteSet& suites);

struct EvalReport {
  std::string model_id;    // weight hash of the base model
  std::string adapter_id;  // weight hash of the adapter stack; "" if none
  std::string suites_id;   // hash of the suite definitions
  SamplerConfig sampler;
  std::uint64_t seed = 0;  // mirrors sampler.seed
  std::map<Skill, SkillScore> skills;
  double aggregate = 0.0;  // fact-weighted across skills
};

// Samples one image per suite entry (CFG sampling at cfg defaults) and scores
// it with the rule verifier. Per-entry noise seeds derive from (cfg.seed,
// skill, entry index) only, so different models are compared on identical
// noise draws. Deterministic given its inputs.
EvalReport evaluate_model(const ModelF& model, const AdapterCtxF& adapter,
                          const SuiteSet& suites, const SamplerConfig& cfg);

// JSON round trip; loading recomputes the aggregate from per-skill counts and
// throws std::runtime_error if it disagrees with the stored value.
std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

struct Comparison {
  std::string text;  // aligned table, best per column starred
  std::string json;  // same content, machine-readable
  std::string csv;   // long format: model,skill,accuracy
};

// Rows = reports (labelled), columns = skills + aggregate. Throws
// std::invalid_argument when labels do not pair up with reports or the
// reports disagree on suite definitions.
Comparison compare(const std::vector<EvalReport>& reports,
                   const std::vector<std::string>& labels);

}  // namespace selma
