#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "selma/rng.hpp"
#include "selma/toyworld.hpp"

namespace selma {

// A named generation skill: prose description, exactly three mutually
// distinct seed prompts, and the number of new prompts to collect.
struct SkillSpec {
  Skill skill = Skill::COUNT;
  std::string description;
  std::array<std::string, 3> seed_prompts;
  int target_count = 64;
};

struct Prompt {
  enum class Origin { seed, generated };
  int id = 0;
  Skill skill = Skill::COUNT;
  std::string text;
  Origin origin = Origin::seed;
  std::vector<int> parent_examples;  // the 3 exemplar ids; empty for seeds
};

struct LlmRequest {
  std::string instruction;  // carries description + exemplars verbatim
  std::array<std::string, 3> in_context;
  std::string skill_description;
  std::string skill;  // skill name, so offline completion knows the grammar
  int max_candidates = 10;
};

struct LlmResponse {
  std::vector<std::string> candidates;  // trimmed, nonempty
};

struct LlmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual LlmResponse complete(const LlmRequest& req) = 0;
};

// Deterministic given (spec, exemplars); the seed parameter is accepted for
// interface stability but does not influence the request text.
LlmRequest build_query(const SkillSpec& spec,
                       const std::vector<Prompt>& exemplars,
                       std::uint64_t rng_seed = 0);

// Offline completion: candidates are captions drawn from the scene grammar of
// the request's skill, restricted to training-split scenes so generated data
// never overlaps the held-out evaluation scenes. Throws LlmError on an
// unknown skill name.
LlmResponse mock_complete(const LlmRequest& req, Rng& rng);

class MockLlmClient final : public LlmClient {
 public:
  explicit MockLlmClient(std::uint64_t seed)
      : rng_(make_rng(seed, streams::kMock, 0)) {}
  LlmResponse complete(const LlmRequest& req) override {
    return mock_complete(req, rng_);
  }

 private:
  Rng rng_;
};

// Talks to an OpenAI-compatible completion endpoint. Retries transient
// failures with exponential backoff before surfacing LlmError.
struct HttpLlmConfig {
  std::string endpoint;  // full URL, e.g. http://host:port/v1/chat/completions
  std::string api_key;
  std::string model;
  int timeout_sec = 30;
  int max_retries = 3;
  int backoff_base_ms = 250;
};

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpLlmConfig cfg) : cfg_(std::move(cfg)) {}
  LlmResponse complete(const LlmRequest& req) override;

 private:
  HttpLlmConfig cfg_;
};

// Always throws; stands in for an unreachable endpoint in offline tests.
class FailingLlmClient final : public LlmClient {
 public:
  LlmResponse complete(const LlmRequest&) override {
    throw LlmError("llm endpoint unavailable");
  }
};

struct GenResult {
  std::vector<Prompt> seeds;      // ids 0..2
  std::vector<Prompt> generated;  // ids from 3, in acceptance order
  bool budget_exhausted = false;
  std::vector<Prompt> pool() const;  // seeds followed by generated
};

// Expands the seed pool: sample 3 distinct exemplars uniformly from the
// current pool, query the client, accept each candidate whose max ROUGE-L
// against the pool stays <= threshold. Stops at target_count accepted or
// after examining 50x target_count candidates (budget_exhausted).
GenResult generate_prompts(const SkillSpec& spec, LlmClient& client,
                           double threshold, Rng& rng);

// Canonical spec for a skill: fixed description and three distinct
// training-split seed captions drawn from an internal constant seed.
SkillSpec default_skill_spec(Skill skill, int target_count = 64);

// JSON Lines: {"id","skill","text","origin","parent_examples"} per prompt.
std::string prompts_to_jsonl(const std::vector<Prompt>& prompts);
std::vector<Prompt> prompts_from_jsonl(const std::string& jsonl);

}  // namespace selma
