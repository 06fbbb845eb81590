#include "selma/promptgen.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "selma/textsim.hpp"

namespace selma {

namespace {

using json = nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Lines from a completion often arrive as "1. text" or "- text".
std::string strip_enumeration(const std::string& line) {
  std::size_t i = 0;
  if (i < line.size() && (line[i] == '-' || line[i] == '*')) {
    ++i;
  } else {
    std::size_t d = i;
    while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d])))
      ++d;
    if (d > i && d < line.size() && (line[d] == '.' || line[d] == ')'))
      i = d + 1;
  }
  while (i < line.size() && line[i] == ' ') ++i;
  return line.substr(i);
}

std::vector<std::string> split_candidates(const std::string& content,
                                          int max_candidates) {
  std::vector<std::string> out;
  std::istringstream in(content);
  std::string line;
  while (static_cast<int>(out.size()) < max_candidates &&
         std::getline(in, line)) {
    const std::string text = trim(strip_enumeration(trim(line)));
    if (!text.empty()) out.push_back(text);
  }
  return out;
}

std::string origin_name(Prompt::Origin o) {
  return o == Prompt::Origin::seed ? "seed" : "generated";
}

Prompt::Origin parse_origin(const std::string& s) {
  if (s == "seed") return Prompt::Origin::seed;
  if (s == "generated") return Prompt::Origin::generated;
  throw std::invalid_argument("parse_origin: " + s);
}

}  // namespace

std::vector<Prompt> GenResult::pool() const {
  std::vector<Prompt> p = seeds;
  p.insert(p.end(), generated.begin(), generated.end());
  return p;
}

LlmRequest build_query(const SkillSpec& spec,
                       const std::vector<Prompt>& exemplars,
                       std::uint64_t /*rng_seed: reserved, text is fixed*/) {
  if (exemplars.size() != 3)
    throw std::invalid_argument("build_query: exactly 3 exemplars required");
  LlmRequest req;
  req.skill = skill_name(spec.skill);
  req.skill_description = spec.description;
  for (int i = 0; i < 3; ++i)
    req.in_context[static_cast<std::size_t>(i)] =
        exemplars[static_cast<std::size_t>(i)].text;
  std::ostringstream o;
  o << "You write prompts that teach a text-to-image model one skill.\n"
    << "Skill: " << spec.description << "\n"
    << "Here are three example prompts:\n";
  for (int i = 0; i < 3; ++i)
    o << (i + 1) << ". " << req.in_context[static_cast<std::size_t>(i)] << "\n";
  o << "Write up to " << req.max_candidates
    << " new prompts, one per line. Mention diverse objects, colors, and "
       "sentence patterns. Do not repeat the examples.";
  req.instruction = o.str();
  return req;
}

LlmResponse mock_complete(const LlmRequest& req, Rng& rng) {
  Skill skill;
  try {
    skill = parse_skill(req.skill);
  } catch (const std::exception&) {
    throw LlmError("mock_complete: unknown skill " + req.skill);
  }
  LlmResponse resp;
  // sample_scene draws train-partition scenes only, so synthetic training
  // data can never touch the held-out evaluation scenes.
  for (int c = 0; c < req.max_candidates; ++c)
    resp.candidates.push_back(caption(sample_scene(skill, rng)));
  return resp;
}

LlmResponse HttpLlmClient::complete(const LlmRequest& req) {
  const std::string& url = cfg_.endpoint;
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw LlmError("HttpLlmClient: malformed endpoint " + url);
  if (url.substr(0, scheme_end) != "http")
    throw LlmError("HttpLlmClient: only http endpoints are supported");
  const std::string rest = url.substr(scheme_end + 3);
  const std::size_t slash = rest.find('/');
  const std::string hostport =
      slash == std::string::npos ? rest : rest.substr(0, slash);
  const std::string path =
      slash == std::string::npos ? "/" : rest.substr(slash);

  httplib::Client cli("http://" + hostport);
  cli.set_connection_timeout(cfg_.timeout_sec, 0);
  cli.set_read_timeout(cfg_.timeout_sec, 0);
  cli.set_write_timeout(cfg_.timeout_sec, 0);

  httplib::Headers headers;
  if (!cfg_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  const json body = {
      {"model", cfg_.model},
      {"messages",
       json::array({{{"role", "user"}, {"content", req.instruction}}})},
      {"max_tokens", 512},
      {"n", 1},
  };
  const std::string payload = body.dump();

  std::string last_err;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(
          static_cast<long>(cfg_.backoff_base_ms) << (attempt - 1)));
    httplib::Result res = cli.Post(path, headers, payload, "application/json");
    if (!res) {
      last_err = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_err = "http status " + std::to_string(res->status);
      continue;
    }
    try {
      const json j = json::parse(res->body);
      const json& c0 = j.at("choices").at(0);
      // Chat-completions shape first, plain-completions shape as fallback.
      const std::string content =
          c0.contains("message")
              ? c0.at("message").at("content").get<std::string>()
              : c0.at("text").get<std::string>();
      LlmResponse out;
      out.candidates = split_candidates(content, req.max_candidates);
      return out;
    } catch (const std::exception& e) {
      last_err = std::string("bad response body: ") + e.what();
    }
  }
  throw LlmError("llm request failed after " +
                 std::to_string(cfg_.max_retries + 1) +
                 " attempts; last error: " + last_err);
}

GenResult generate_prompts(const SkillSpec& spec, LlmClient& client,
                           double threshold, Rng& rng) {
  if (threshold < 0.0 || threshold > 1.0)
    throw std::invalid_argument("generate_prompts: threshold outside [0,1]");
  if (spec.target_count < 0)
    throw std::invalid_argument("generate_prompts: negative target_count");
  if (spec.seed_prompts[0].empty() || spec.seed_prompts[1].empty() ||
      spec.seed_prompts[2].empty() ||
      std::set<std::string>(spec.seed_prompts.begin(), spec.seed_prompts.end())
              .size() != 3)
    throw std::invalid_argument(
        "generate_prompts: seeds must be 3 distinct nonempty strings");

  GenResult r;
  std::vector<std::string> pool_texts;
  for (int i = 0; i < 3; ++i) {
    Prompt p;
    p.id = i;
    p.skill = spec.skill;
    p.text = spec.seed_prompts[static_cast<std::size_t>(i)];
    p.origin = Prompt::Origin::seed;
    r.seeds.push_back(p);
    pool_texts.push_back(p.text);
  }

  const long budget = 50L * spec.target_count;
  long examined = 0;
  int next_id = 3;
  while (static_cast<int>(r.generated.size()) < spec.target_count &&
         examined < budget) {
    // Three distinct exemplars, uniform over the current pool.
    const auto pool = r.pool();
    std::array<int, 3> idx{};
    for (int k = 0; k < 3; ++k) {
      int v;
      bool fresh;
      do {
        v = static_cast<int>(
            rng.bounded(static_cast<std::uint32_t>(pool.size())));
        fresh = true;
        for (int q = 0; q < k; ++q) fresh = fresh && idx[static_cast<std::size_t>(q)] != v;
      } while (!fresh);
      idx[static_cast<std::size_t>(k)] = v;
    }
    std::vector<Prompt> exemplars;
    for (int k = 0; k < 3; ++k)
      exemplars.push_back(pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])]);

    const LlmRequest req = build_query(spec, exemplars);
    const LlmResponse resp = client.complete(req);
    if (resp.candidates.empty()) {
      examined += req.max_candidates;  // empty reply must still burn budget
      continue;
    }
    for (const std::string& raw : resp.candidates) {
      if (static_cast<int>(r.generated.size()) >= spec.target_count ||
          examined >= budget)
        break;
      ++examined;
      const std::string text = trim(raw);
      if (text.empty()) continue;
      if (!accept_prompt(text, pool_texts, threshold).accepted) continue;
      Prompt p;
      p.id = next_id++;
      p.skill = spec.skill;
      p.text = text;
      p.origin = Prompt::Origin::generated;
      for (const Prompt& e : exemplars) p.parent_examples.push_back(e.id);
      pool_texts.push_back(p.text);
      r.generated.push_back(std::move(p));
    }
  }
  r.budget_exhausted =
      static_cast<int>(r.generated.size()) < spec.target_count;
  return r;
}

SkillSpec default_skill_spec(Skill skill, int target_count) {
  SkillSpec spec;
  spec.skill = skill;
  spec.target_count = target_count;
  switch (skill) {
    case Skill::COUNT:
      spec.description =
          "captions that state how many objects appear, from one to four";
      break;
    case Skill::COLOR:
      spec.description = "captions that bind a color to a single object";
      break;
    case Skill::SPATIAL:
      spec.description =
          "captions that place one object relative to another";
      break;
    case Skill::SIZE:
      spec.description = "captions that bind a size to a single object";
      break;
    case Skill::MULTI:
      spec.description =
          "long captions combining size, color and spatial relations for two "
          "objects";
      break;
  }
  // Seeds come from the grammar itself: the first three distinct
  // training-split captions under a fixed internal seed.
  Rng rng = make_rng(1337, streams::kPrompt,
                     static_cast<std::uint64_t>(skill_index(skill)));
  std::set<std::string> seen;
  std::size_t next = 0;
  while (next < 3) {
    std::string text = caption(sample_scene(skill, rng));
    if (!seen.insert(text).second) continue;
    spec.seed_prompts[next++] = std::move(text);
  }
  return spec;
}

std::string prompts_to_jsonl(const std::vector<Prompt>& prompts) {
  std::ostringstream out;
  for (const Prompt& p : prompts) {
    const json j = {{"id", p.id},
                    {"skill", skill_name(p.skill)},
                    {"text", p.text},
                    {"origin", origin_name(p.origin)},
                    {"parent_examples", p.parent_examples}};
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<Prompt> prompts_from_jsonl(const std::string& jsonl) {
  std::vector<Prompt> prompts;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    Prompt p;
    p.id = j.at("id").get<int>();
    p.skill = parse_skill(j.at("skill").get<std::string>());
    p.text = j.at("text").get<std::string>();
    p.origin = parse_origin(j.at("origin").get<std::string>());
    p.parent_examples = j.at("parent_examples").get<std::vector<int>>();
    if (p.text.empty())
      throw std::invalid_argument("prompts_from_jsonl: empty text");
    prompts.push_back(std::move(p));
  }
  return prompts;
}

}  // namespace selma
