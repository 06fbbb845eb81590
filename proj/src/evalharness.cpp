#include "selma/evalharness.hpp"

#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "selma/checkpoint.hpp"

namespace selma {

namespace {

using json = nlohmann::json;

std::string weight_id(const ModelF& m) {
  return hex64(payload_hash(checkpoint_of(m, 0, 0)));
}

std::string adapter_weight_id(const AdapterCtxF& ad) {
  if (ad.lora) return hex64(payload_hash(checkpoint_of(*ad.lora, 0, 0)));
  if (ad.gate) {
    std::uint64_t h = payload_hash(checkpoint_of(*ad.gate, "", 0, 0));
    for (const LoraF* e : ad.experts)
      h = fnv1a64_u64(payload_hash(checkpoint_of(*e, 0, 0)), h);
    return hex64(h);
  }
  return "";
}

json sampler_json(const SamplerConfig& cfg) {
  return json{{"steps", cfg.steps},
              {"cfg_scale", cfg.cfg_scale},
              {"seed", cfg.seed}};
}

SamplerConfig sampler_from_json(const json& j) {
  SamplerConfig cfg;
  cfg.steps = j.at("steps").get<int>();
  cfg.cfg_scale = j.at("cfg_scale").get<float>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

SuiteSet build_all_suites(int per_skill, std::uint64_t seed) {
  SuiteSet suites;
  for (Skill s : kAllSkills) {
    Rng rng = make_rng(seed, streams::kEval,
                       static_cast<std::uint64_t>(skill_index(s)));
    suites[s] = build_eval_suite(s, per_skill, rng);
  }
  return suites;
}

std::uint64_t suites_hash(const SuiteSet& suites) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [skill, suite] : suites) {
    h = fnv1a64(skill_name(skill), h);
    h = fnv1a64_u64(suite_hash(suite), h);
  }
  return h;
}

EvalReport evaluate_model(const ModelF& model, const AdapterCtxF& adapter,
                          const SuiteSet& suites, const SamplerConfig& cfg) {
  if (suites.empty())
    throw std::invalid_argument("evaluate_model: suites are empty");
  EvalReport r;
  r.model_id = weight_id(model);
  r.adapter_id = adapter_weight_id(adapter);
  r.suites_id = hex64(suites_hash(suites));
  r.sampler = cfg;
  r.seed = cfg.seed;
  long total = 0, correct = 0;
  for (const auto& [skill, suite] : suites) {
    SkillScore sc;
    sc.n_prompts = static_cast<int>(suite.size());
    for (std::size_t i = 0; i < suite.size(); ++i) {
      SamplerConfig entry_cfg = cfg;
      entry_cfg.seed = fnv1a64(
          skill_name(skill) + "#" + std::to_string(i), fnv1a64_u64(cfg.seed));
      const Image img = sample(model, adapter, suite[i].prompt, entry_cfg);
      const VerdictReport v = verify(img, suite[i].facts);
      sc.facts_total += static_cast<int>(v.verdict.size());
      for (bool ok : v.verdict) sc.facts_correct += ok ? 1 : 0;
    }
    sc.accuracy = sc.facts_total > 0
                      ? static_cast<double>(sc.facts_correct) / sc.facts_total
                      : 0.0;
    total += sc.facts_total;
    correct += sc.facts_correct;
    r.skills[skill] = sc;
  }
  r.aggregate = total > 0 ? static_cast<double>(correct) / total : 0.0;
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json skills = json::object();
  for (const auto& [skill, sc] : r.skills)
    skills[skill_name(skill)] = {{"n_prompts", sc.n_prompts},
                                 {"facts_total", sc.facts_total},
                                 {"facts_correct", sc.facts_correct},
                                 {"accuracy", sc.accuracy}};
  const json j = {{"model_id", r.model_id},
                  {"adapter_id", r.adapter_id},
                  {"suites_id", r.suites_id},
                  {"sampler", sampler_json(r.sampler)},
                  {"seed", r.seed},
                  {"skills", skills},
                  {"aggregate", r.aggregate}};
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.adapter_id = j.at("adapter_id").get<std::string>();
  r.suites_id = j.at("suites_id").get<std::string>();
  r.sampler = sampler_from_json(j.at("sampler"));
  r.seed = j.at("seed").get<std::uint64_t>();
  long total = 0, correct = 0;
  for (const auto& [name, sj] : j.at("skills").items()) {
    SkillScore sc;
    sc.n_prompts = sj.at("n_prompts").get<int>();
    sc.facts_total = sj.at("facts_total").get<int>();
    sc.facts_correct = sj.at("facts_correct").get<int>();
    sc.accuracy = sj.at("accuracy").get<double>();
    r.skills[parse_skill(name)] = sc;
    total += sc.facts_total;
    correct += sc.facts_correct;
  }
  r.aggregate = j.at("aggregate").get<double>();
  const double recomputed =
      total > 0 ? static_cast<double>(correct) / total : 0.0;
  if (std::abs(recomputed - r.aggregate) > 1e-9)
    throw std::runtime_error(
        "report_from_json: stored aggregate disagrees with per-skill counts");
  return r;
}

Comparison compare(const std::vector<EvalReport>& reports,
                   const std::vector<std::string>& labels) {
  if (reports.empty())
    throw std::invalid_argument("compare: no reports");
  if (labels.size() != reports.size())
    throw std::invalid_argument("compare: labels do not pair up with reports");
  for (const EvalReport& r : reports) {
    if (r.suites_id != reports.front().suites_id)
      throw std::invalid_argument("compare: reports use different suites");
    if (r.skills.size() != reports.front().skills.size())
      throw std::invalid_argument("compare: reports cover different skills");
  }

  std::vector<Skill> cols;
  for (const auto& [skill, sc] : reports.front().skills) cols.push_back(skill);

  auto value = [&](const EvalReport& r, std::size_t c) {
    return c < cols.size() ? r.skills.at(cols[c]).accuracy : r.aggregate;
  };
  const std::size_t ncols = cols.size() + 1;

  std::vector<double> best(ncols, -1.0);
  for (std::size_t c = 0; c < ncols; ++c)
    for (const EvalReport& r : reports) best[c] = std::max(best[c], value(r, c));
  auto is_best = [&](const EvalReport& r, std::size_t c) {
    return value(r, c) >= best[c] - 1e-12;
  };

  std::vector<std::string> col_names;
  for (Skill s : cols) col_names.push_back(skill_name(s));
  col_names.push_back("aggregate");

  // Aligned text table.
  std::size_t label_w = 5;
  for (const std::string& l : labels) label_w = std::max(label_w, l.size());
  std::ostringstream text;
  text << std::left << std::setw(static_cast<int>(label_w) + 2) << "model";
  for (const std::string& c : col_names)
    text << std::right << std::setw(11) << c;
  text << "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    text << std::left << std::setw(static_cast<int>(label_w) + 2) << labels[i];
    for (std::size_t c = 0; c < ncols; ++c) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << value(reports[i], c)
           << (is_best(reports[i], c) ? "*" : " ");
      text << std::right << std::setw(11) << cell.str();
    }
    text << "\n";
  }

  json jrows = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    json values = json::object();
    json flags = json::object();
    for (std::size_t c = 0; c < ncols; ++c) {
      values[col_names[c]] = value(reports[i], c);
      flags[col_names[c]] = is_best(reports[i], c);
    }
    jrows.push_back({{"label", labels[i]},
                     {"model_id", reports[i].model_id},
                     {"adapter_id", reports[i].adapter_id},
                     {"values", values},
                     {"best", flags}});
  }
  const json jtable = {{"columns", col_names},
                       {"suites_id", reports.front().suites_id},
                       {"rows", jrows}};

  std::ostringstream csv;
  csv << "model,skill,accuracy\n";
  for (std::size_t i = 0; i < reports.size(); ++i)
    for (std::size_t c = 0; c < ncols; ++c)
      csv << labels[i] << "," << col_names[c] << "," << std::setprecision(10)
          << value(reports[i], c) << "\n";

  Comparison out;
  out.text = text.str();
  out.json = jtable.dump(2);
  out.csv = csv.str();
  return out;
}

}  // namespace selma
