#include "selma/experiments.hpp"

#include <nlohmann/json.hpp>

#include "selma/checkpoint.hpp"
#include "selma/promptgen.hpp"

namespace selma {

namespace {

using json = nlohmann::json;

// Per-skill prompt pools via the offline client; seeds plus accepted
// generations all feed image synthesis.
std::vector<std::vector<Prompt>> build_pools(const AppConfig& cfg) {
  std::vector<std::vector<Prompt>> pools;
  for (Skill s : kAllSkills) {
    const SkillSpec spec = default_skill_spec(s, cfg.target_count);
    MockLlmClient client(fnv1a64(skill_name(s), fnv1a64_u64(cfg.seed)));
    Rng gen_rng = make_rng(cfg.seed, streams::kPrompt,
                           static_cast<std::uint64_t>(skill_index(s)));
    pools.push_back(
        generate_prompts(spec, client, cfg.threshold, gen_rng).pool());
  }
  return pools;
}

SuiteSet build_selection_suites(const AppConfig& cfg) {
  SuiteSet sel;
  for (Skill s : kAllSkills) {
    Rng rng = make_rng(cfg.seed, streams::kEval,
                       1000 + static_cast<std::uint64_t>(skill_index(s)));
    sel[s] = build_eval_suite(s, cfg.select_n, rng);
  }
  return sel;
}

std::vector<SkillDataset> synth_all(const ModelF* generator,
                                    const std::vector<std::vector<Prompt>>& pools,
                                    DatasetSource mode, const AppConfig& cfg) {
  std::vector<SkillDataset> sets;
  for (const auto& pool : pools)
    sets.push_back(synth_dataset(generator, pool, mode, cfg.sampler, cfg.seed));
  return sets;
}

// An arm of the gt_vs_auto comparison: each skill scored by its own expert.
EvalReport composite_report(const ModelF& base,
                            const std::vector<LoraF>& experts,
                            const SuiteSet& suites, const SamplerConfig& cfg,
                            const std::string& suites_id) {
  EvalReport r;
  r.suites_id = suites_id;
  r.sampler = cfg;
  r.seed = cfg.seed;
  std::uint64_t adapter_h = kFnvOffset;
  long total = 0, correct = 0;
  for (const LoraF& e : experts) {
    const Skill s = parse_skill(e.skill);
    AdapterCtxF ctx;
    ctx.lora = &e;
    SuiteSet one;
    one[s] = suites.at(s);
    const EvalReport part = evaluate_model(base, ctx, one, cfg);
    r.model_id = part.model_id;
    adapter_h = fnv1a64(part.adapter_id, adapter_h);
    const SkillScore sc = part.skills.at(s);
    r.skills[s] = sc;
    total += sc.facts_total;
    correct += sc.facts_correct;
  }
  r.adapter_id = hex64(adapter_h);
  r.aggregate = total > 0 ? static_cast<double>(correct) / total : 0.0;
  return r;
}

ExperimentReport run_expert_vs_joint_vs_merged(const AppConfig& cfg) {
  ExperimentReport out;
  const SuiteSet suites = build_all_suites(cfg.eval_n, cfg.seed);
  const SuiteSet selection = build_selection_suites(cfg);

  TrainMetrics base_metrics;
  const ModelF base = pretrain_base(cfg, cfg.hidden, cfg.seed, &base_metrics);
  out.metrics["base"] = base_metrics;

  const auto pools = build_pools(cfg);
  const auto datasets =
      synth_all(&base, pools, DatasetSource::self_generated, cfg);

  std::vector<LoraF> experts;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const Skill s = datasets[i].skill;
    ExpertResult er = train_expert(base, datasets[i], cfg.train,
                                   selection.at(s), cfg.sampler, cfg.seed);
    out.metrics["expert_" + skill_name(s)] = er.metrics;
    experts.push_back(std::move(er.adapter));
  }

  ExpertResult joint = train_joint(base, datasets, cfg.train, selection,
                                   cfg.sampler, cfg.seed);
  out.metrics["joint"] = joint.metrics;

  const LoraF merged = merge(experts);

  out.labels.push_back("base");
  out.reports.push_back(
      evaluate_model(base, AdapterCtxF{}, suites, cfg.sampler));
  for (const LoraF& e : experts) {
    AdapterCtxF ctx;
    ctx.lora = &e;
    out.labels.push_back("expert_" + e.skill);
    out.reports.push_back(evaluate_model(base, ctx, suites, cfg.sampler));
  }
  {
    AdapterCtxF ctx;
    ctx.lora = &joint.adapter;
    out.labels.push_back("joint");
    out.reports.push_back(evaluate_model(base, ctx, suites, cfg.sampler));
  }
  {
    AdapterCtxF ctx;
    ctx.lora = &merged;
    out.labels.push_back("merged");
    out.reports.push_back(evaluate_model(base, ctx, suites, cfg.sampler));
  }
  return out;
}

ExperimentReport run_gt_vs_auto(const AppConfig& cfg) {
  ExperimentReport out;
  const SuiteSet suites = build_all_suites(cfg.eval_n, cfg.seed);
  const SuiteSet selection = build_selection_suites(cfg);

  TrainMetrics base_metrics;
  const ModelF base = pretrain_base(cfg, cfg.hidden, cfg.seed, &base_metrics);
  out.metrics["base"] = base_metrics;

  const auto pools = build_pools(cfg);
  const auto gt_sets = synth_all(nullptr, pools, DatasetSource::ground_truth, cfg);
  const auto auto_sets =
      synth_all(&base, pools, DatasetSource::self_generated, cfg);

  auto train_arm = [&](const std::vector<SkillDataset>& sets,
                       const std::string& arm) {
    std::vector<LoraF> experts;
    for (const SkillDataset& ds : sets) {
      ExpertResult er = train_expert(base, ds, cfg.train,
                                     selection.at(ds.skill), cfg.sampler,
                                     cfg.seed);
      out.metrics[arm + "_" + skill_name(ds.skill)] = er.metrics;
      experts.push_back(std::move(er.adapter));
    }
    return experts;
  };
  const std::vector<LoraF> gt_experts = train_arm(gt_sets, "gt");
  const std::vector<LoraF> auto_experts = train_arm(auto_sets, "auto");

  const std::string suites_id = hex64(suites_hash(suites));
  out.labels = {"gt", "auto"};
  out.reports.push_back(
      composite_report(base, gt_experts, suites, cfg.sampler, suites_id));
  out.reports.push_back(
      composite_report(base, auto_experts, suites, cfg.sampler, suites_id));
  return out;
}

ExperimentReport run_weak_to_strong(const AppConfig& cfg) {
  ExperimentReport out;
  const SuiteSet suites = build_all_suites(cfg.eval_n, cfg.seed);
  const SuiteSet selection = build_selection_suites(cfg);

  TrainMetrics weak_metrics, strong_metrics;
  const ModelF weak = pretrain_base(cfg, cfg.weak_hidden, cfg.seed, &weak_metrics);
  const ModelF strong = pretrain_base(cfg, cfg.hidden, cfg.seed, &strong_metrics);
  out.metrics["weak_base"] = weak_metrics;
  out.metrics["strong_base"] = strong_metrics;

  const auto pools = build_pools(cfg);
  const auto weak_sets =
      synth_all(&weak, pools, DatasetSource::weak_model, cfg);
  const auto strong_sets =
      synth_all(&strong, pools, DatasetSource::self_generated, cfg);

  auto train_merged = [&](const std::vector<SkillDataset>& sets,
                          const std::string& arm) {
    std::vector<LoraF> experts;
    for (const SkillDataset& ds : sets) {
      ExpertResult er = train_expert(strong, ds, cfg.train,
                                     selection.at(ds.skill), cfg.sampler,
                                     cfg.seed);
      out.metrics[arm + "_" + skill_name(ds.skill)] = er.metrics;
      experts.push_back(std::move(er.adapter));
    }
    return merge(experts);
  };
  const LoraF merged_weak = train_merged(weak_sets, "strong_plus_weak_data");
  const LoraF merged_strong =
      train_merged(strong_sets, "strong_plus_strong_data");

  out.labels = {"weak_base", "strong_base", "strong_plus_weak_data",
                "strong_plus_strong_data"};
  out.reports.push_back(
      evaluate_model(weak, AdapterCtxF{}, suites, cfg.sampler));
  out.reports.push_back(
      evaluate_model(strong, AdapterCtxF{}, suites, cfg.sampler));
  AdapterCtxF ctx_w, ctx_s;
  ctx_w.lora = &merged_weak;
  ctx_s.lora = &merged_strong;
  out.reports.push_back(evaluate_model(strong, ctx_w, suites, cfg.sampler));
  out.reports.push_back(evaluate_model(strong, ctx_s, suites, cfg.sampler));
  return out;
}

json metrics_json(const TrainMetrics& m) {
  json snaps = json::array();
  for (const auto& [step, score] : m.snapshots)
    snaps.push_back({{"step", step}, {"score", score}});
  return json{{"initial_loss", m.initial_loss},
              {"final_loss", m.final_loss},
              {"best_step", m.best_step},
              {"best_score", m.best_score},
              {"step0_score", m.step0_score},
              {"probe_initial", m.probe_initial},
              {"probe_final", m.probe_final},
              {"snapshots", snaps},
              {"steps", m.losses.size()}};
}

}  // namespace

std::string recipe_name(Recipe r) {
  switch (r) {
    case Recipe::expert_vs_joint_vs_merged: return "expert_vs_joint_vs_merged";
    case Recipe::gt_vs_auto: return "gt_vs_auto";
    case Recipe::weak_to_strong: return "weak_to_strong";
  }
  throw std::invalid_argument("recipe_name: bad recipe");
}

Recipe parse_recipe(const std::string& s) {
  if (s == "expert_vs_joint_vs_merged") return Recipe::expert_vs_joint_vs_merged;
  if (s == "gt_vs_auto") return Recipe::gt_vs_auto;
  if (s == "weak_to_strong") return Recipe::weak_to_strong;
  throw std::invalid_argument("parse_recipe: unknown recipe " + s);
}

ExperimentReport run_experiment(Recipe recipe, const AppConfig& cfg) {
  validate_config(cfg);
  ExperimentReport out;
  switch (recipe) {
    case Recipe::expert_vs_joint_vs_merged:
      out = run_expert_vs_joint_vs_merged(cfg);
      break;
    case Recipe::gt_vs_auto:
      out = run_gt_vs_auto(cfg);
      break;
    case Recipe::weak_to_strong:
      out = run_weak_to_strong(cfg);
      break;
  }
  out.recipe = recipe;
  out.seed = cfg.seed;
  out.config_json = config_to_json(cfg);
  out.table = compare(out.reports, out.labels);
  return out;
}

std::string experiment_to_json(const ExperimentReport& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.reports.size(); ++i)
    rows.push_back({{"label", r.labels[i]},
                    {"report", json::parse(report_to_json(r.reports[i]))}});
  json metrics = json::object();
  for (const auto& [label, m] : r.metrics) metrics[label] = metrics_json(m);
  const json j = {{"recipe", recipe_name(r.recipe)},
                  {"seed", r.seed},
                  {"config", json::parse(r.config_json)},
                  {"table", json::parse(r.table.json)},
                  {"rows", rows},
                  {"metrics", metrics}};
  return j.dump(2);
}

}  // namespace selma
