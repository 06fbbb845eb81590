#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "selma/checkpoint.hpp"
#include "selma/config.hpp"
#include "selma/dataset.hpp"
#include "selma/evalharness.hpp"
#include "selma/experiments.hpp"
#include "selma/promptgen.hpp"
#include "selma/train.hpp"

namespace fs = std::filesystem;
using namespace selma;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string workdir;
  bool verbose = false;
  bool offline = false;
  bool live = false;
};

AppConfig resolve_config(const GlobalOpts& g) {
  AppConfig cfg = load_config(g.config_path);
  if (g.seed_set) {
    cfg.seed = g.seed;
    cfg.note("seed", "flag");
  }
  if (const char* env = std::getenv("SELMA_WORKDIR");
      env && *env && cfg.provenance.at("workdir") == "default") {
    cfg.workdir = env;
    cfg.note("workdir", "env");
  }
  if (!g.workdir.empty()) {
    cfg.workdir = g.workdir;
    cfg.note("workdir", "flag");
  }
  if (g.offline) {
    cfg.offline = true;
    cfg.note("offline", "flag");
  }
  if (g.live) {
    cfg.offline = false;
    cfg.note("offline", "flag");
  }
  cfg.verbose = g.verbose;
  cfg.sampler.seed = cfg.seed;
  validate_config(cfg);
  if (cfg.verbose) std::cerr << provenance_table(cfg);
  return cfg;
}

fs::path in_workdir(const AppConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.workdir);
  return fs::path(cfg.workdir) / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::unique_ptr<LlmClient> make_client(const AppConfig& cfg, Skill skill) {
  if (cfg.offline)
    return std::make_unique<MockLlmClient>(
        fnv1a64(skill_name(skill), fnv1a64_u64(cfg.seed)));
  HttpLlmConfig hc;
  if (const char* e = std::getenv("SELMA_LLM_ENDPOINT")) hc.endpoint = e;
  if (const char* e = std::getenv("SELMA_LLM_API_KEY")) hc.api_key = e;
  if (const char* e = std::getenv("SELMA_LLM_MODEL")) hc.model = e;
  if (hc.endpoint.empty())
    throw std::runtime_error(
        "live mode needs SELMA_LLM_ENDPOINT (or pass --offline)");
  return std::make_unique<HttpLlmClient>(hc);
}

std::vector<Prompt> run_prompts_for(const AppConfig& cfg, Skill skill,
                                    int count, double threshold) {
  const SkillSpec spec = default_skill_spec(skill, count);
  const auto client = make_client(cfg, skill);
  Rng rng = make_rng(cfg.seed, streams::kPrompt,
                     static_cast<std::uint64_t>(skill_index(skill)));
  const GenResult r = generate_prompts(spec, *client, threshold, rng);
  if (r.budget_exhausted)
    std::cerr << "warning: prompt budget exhausted for " << skill_name(skill)
              << " (" << r.generated.size() << "/" << count << " accepted)\n";
  return r.pool();
}

SuiteSet suites_from_selector(const AppConfig& cfg, const std::string& sel) {
  SuiteSet all = build_all_suites(cfg.eval_n, cfg.seed);
  if (sel == "all") return all;
  SuiteSet out;
  std::stringstream ss(sel);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const Skill s = parse_skill(name);
    out[s] = all.at(s);
  }
  if (out.empty()) throw std::invalid_argument("empty suite selector");
  return out;
}

int cmd_prompts(const AppConfig& cfg, const std::string& skill, int count,
                double threshold, const std::string& out) {
  const Skill s = parse_skill(skill);
  const auto pool =
      run_prompts_for(cfg, s, count > 0 ? count : cfg.target_count,
                      threshold >= 0 ? threshold : cfg.threshold);
  const fs::path path =
      out.empty() ? in_workdir(cfg, "prompts_" + skill_name(s) + ".jsonl")
                  : fs::path(out);
  write_file(path, prompts_to_jsonl(pool));
  std::cout << path.string() << ": " << pool.size() << " prompts\n";
  return 0;
}

int cmd_pretrain(const AppConfig& cfg, int hidden, const std::string& out) {
  const int h = hidden > 0 ? hidden : cfg.hidden;
  TrainMetrics m;
  const ModelF model = pretrain_base(cfg, h, cfg.seed, &m);
  const fs::path path = out.empty() ? in_workdir(cfg, "base.ck") : fs::path(out);
  save_checkpoint(checkpoint_of(model, cfg.seed, cfg.pretrain_steps), path.string());
  std::cout << path.string() << ": loss " << m.initial_loss << " -> "
            << m.final_loss << "\n";
  return 0;
}

int cmd_synth(const AppConfig& cfg, const std::string& mode,
              const std::string& prompts_path, const std::string& model_path,
              const std::string& out) {
  const DatasetSource src = parse_dataset_source(mode);
  const auto prompts = prompts_from_jsonl(read_file(prompts_path));
  if (prompts.empty()) throw std::runtime_error("no prompts in " + prompts_path);

  SkillDataset ds;
  if (src == DatasetSource::ground_truth) {
    ds = synth_dataset(nullptr, prompts, src, cfg.sampler, cfg.seed);
  } else {
    if (model_path.empty())
      throw std::runtime_error("--model is required for sampled modes");
    const ModelF model =
        model_from(load_checkpoint(model_path), cfg.schedule());
    ds = synth_dataset(&model, prompts, src, cfg.sampler, cfg.seed);
  }
  const fs::path path =
      out.empty()
          ? in_workdir(cfg, "data_" + skill_name(ds.skill) + ".img")
          : fs::path(out);
  save_dataset(ds, path.string());
  std::cout << path.string() << ": " << ds.items.size() << " pairs ("
            << dataset_source_name(ds.source) << ")\n";
  return 0;
}

int cmd_train(const AppConfig& cfg, const std::string& skill,
              const std::string& base_path, const std::string& data_path,
              const std::string& out) {
  const Skill s = parse_skill(skill);
  const Checkpoint base_ck = load_checkpoint(
      base_path.empty() ? in_workdir(cfg, "base.ck").string() : base_path);
  const ModelF base = model_from(base_ck, cfg.schedule());
  const SkillDataset data = load_dataset(
      data_path.empty()
          ? in_workdir(cfg, "data_" + skill_name(s) + ".img").string()
          : data_path);
  if (data.skill != s)
    throw std::runtime_error("dataset skill does not match --skill");

  Rng sel_rng = make_rng(cfg.seed, streams::kEval,
                         1000 + static_cast<std::uint64_t>(skill_index(s)));
  const auto selection = build_eval_suite(s, cfg.select_n, sel_rng);
  const ExpertResult er =
      train_expert(base, data, cfg.train, selection, cfg.sampler, cfg.seed);

  const fs::path path =
      out.empty() ? in_workdir(cfg, "expert_" + skill_name(s) + ".ck")
                  : fs::path(out);
  save_checkpoint(checkpoint_of(er.adapter, cfg.seed, er.metrics.best_step,
                                hex64(payload_hash(base_ck))),
                  path.string());
  std::cout << path.string() << ": selection " << er.metrics.step0_score
            << " -> " << er.metrics.best_score << " (best step "
            << er.metrics.best_step << ")\n";
  return 0;
}

int cmd_merge(const AppConfig& cfg, std::vector<std::string> inputs,
              const std::string& out) {
  if (inputs.empty())
    for (Skill s : kAllSkills)
      inputs.push_back(
          in_workdir(cfg, "expert_" + skill_name(s) + ".ck").string());
  std::vector<LoraF> adapters;
  std::uint64_t parents = kFnvOffset;
  for (const std::string& p : inputs) {
    const Checkpoint ck = load_checkpoint(p);
    parents = fnv1a64_u64(payload_hash(ck), parents);
    adapters.push_back(lora_from(ck));
  }
  const LoraF merged = merge(adapters);
  const fs::path path =
      out.empty() ? in_workdir(cfg, "merged.ck") : fs::path(out);
  save_checkpoint(checkpoint_of(merged, cfg.seed, 0, hex64(parents)),
                  path.string());
  std::cout << path.string() << ": merged " << adapters.size()
            << " adapters\n";
  return 0;
}

int cmd_eval(const AppConfig& cfg, const std::string& model_path,
             const std::string& adapter_path, const std::string& suites_sel,
             const std::string& out) {
  const ModelF model = model_from(load_checkpoint(model_path), cfg.schedule());
  LoraF adapter;
  AdapterCtxF ctx;
  if (!adapter_path.empty()) {
    adapter = lora_from(load_checkpoint(adapter_path));
    ctx.lora = &adapter;
  }
  const SuiteSet suites = suites_from_selector(cfg, suites_sel);
  const EvalReport r = evaluate_model(model, ctx, suites, cfg.sampler);
  const fs::path path =
      out.empty() ? in_workdir(cfg, "report.json") : fs::path(out);
  write_file(path, report_to_json(r));
  std::cout << path.string() << ": aggregate " << r.aggregate << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs,
               std::vector<std::string> labels, const std::string& out) {
  if (inputs.empty()) throw std::runtime_error("--inputs is required");
  std::vector<EvalReport> reports;
  for (const std::string& p : inputs)
    reports.push_back(report_from_json(read_file(p)));
  if (labels.empty())
    for (const std::string& p : inputs) labels.push_back(fs::path(p).stem());
  const Comparison c = compare(reports, labels);
  std::cout << c.text;
  if (!out.empty()) {
    write_file(out, c.text);
    const fs::path base = fs::path(out).parent_path() / fs::path(out).stem();
    write_file(base.string() + ".json", c.json);
    write_file(base.string() + ".csv", c.csv);
  }
  return 0;
}

int cmd_experiment(const AppConfig& cfg, const std::string& recipe,
                   const std::string& out) {
  const ExperimentReport r = run_experiment(parse_recipe(recipe), cfg);
  std::cout << r.table.text;
  const fs::path path =
      out.empty() ? in_workdir(cfg, "experiment_" + recipe_name(r.recipe) +
                                        ".json")
                  : fs::path(out);
  write_file(path, experiment_to_json(r));
  write_file(path.string() + ".csv", r.table.csv);
  std::cerr << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_pipeline(const AppConfig& cfg) {
  // prompts -> pretrain -> synth(self) -> train x5 -> merge -> eval
  std::vector<std::vector<Prompt>> pools;
  for (Skill s : kAllSkills) {
    auto pool = run_prompts_for(cfg, s, cfg.target_count, cfg.threshold);
    write_file(in_workdir(cfg, "prompts_" + skill_name(s) + ".jsonl"),
               prompts_to_jsonl(pool));
    pools.push_back(std::move(pool));
  }

  TrainMetrics base_metrics;
  const ModelF base = pretrain_base(cfg, cfg.hidden, cfg.seed, &base_metrics);
  const Checkpoint base_ck = checkpoint_of(base, cfg.seed, cfg.pretrain_steps);
  save_checkpoint(base_ck, in_workdir(cfg, "base.ck").string());
  if (cfg.verbose)
    std::cerr << "pretrain loss " << base_metrics.initial_loss << " -> "
              << base_metrics.final_loss << "\n";

  std::vector<LoraF> experts;
  std::uint64_t parents = kFnvOffset;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const Skill s = kAllSkills[i];
    const SkillDataset ds = synth_dataset(
        &base, pools[i], DatasetSource::self_generated, cfg.sampler, cfg.seed);
    save_dataset(ds, in_workdir(cfg, "data_" + skill_name(s) + ".img").string());

    Rng sel_rng = make_rng(cfg.seed, streams::kEval,
                           1000 + static_cast<std::uint64_t>(skill_index(s)));
    const auto selection = build_eval_suite(s, cfg.select_n, sel_rng);
    ExpertResult er =
        train_expert(base, ds, cfg.train, selection, cfg.sampler, cfg.seed);
    save_checkpoint(checkpoint_of(er.adapter, cfg.seed, er.metrics.best_step,
                                  hex64(payload_hash(base_ck))),
                    in_workdir(cfg, "expert_" + skill_name(s) + ".ck").string());
    if (cfg.verbose)
      std::cerr << skill_name(s) << " selection " << er.metrics.step0_score
                << " -> " << er.metrics.best_score << "\n";
    parents = fnv1a64_u64(payload_hash(checkpoint_of(er.adapter, 0, 0)), parents);
    experts.push_back(std::move(er.adapter));
  }

  const LoraF merged = merge(experts);
  save_checkpoint(checkpoint_of(merged, cfg.seed, 0, hex64(parents)),
                  in_workdir(cfg, "merged.ck").string());

  const SuiteSet suites = build_all_suites(cfg.eval_n, cfg.seed);
  const EvalReport base_r = evaluate_model(base, AdapterCtxF{}, suites, cfg.sampler);
  AdapterCtxF mctx;
  mctx.lora = &merged;
  const EvalReport merged_r = evaluate_model(base, mctx, suites, cfg.sampler);
  write_file(in_workdir(cfg, "report_base.json"), report_to_json(base_r));
  write_file(in_workdir(cfg, "report_merged.json"), report_to_json(merged_r));
  const Comparison c = compare({base_r, merged_r}, {"base", "merged"});
  write_file(in_workdir(cfg, "report.txt"), c.text);
  write_file(in_workdir(cfg, "report.json"), c.json);
  write_file(in_workdir(cfg, "report.csv"), c.csv);
  std::cout << c.text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skill experts for a toy text-to-image diffusion model"};
  app.require_subcommand(0, 1);
  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "master random seed")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--workdir", g.workdir, "artifact directory");
  app.add_flag("--verbose", g.verbose, "print config provenance and progress");
  app.add_flag("--offline", g.offline, "force the offline prompt generator");
  app.add_flag("--live", g.live, "use the live LLM endpoint (SELMA_LLM_*)");

  // prompts
  auto* sc_prompts = app.add_subcommand("prompts", "generate a prompt pool");
  std::string p_skill;
  int p_count = -1;
  double p_threshold = -1;
  std::string p_out;
  sc_prompts->add_option("--skill", p_skill, "skill name")->required();
  sc_prompts->add_option("--count", p_count, "prompts to accept");
  sc_prompts->add_option("--threshold", p_threshold, "ROUGE-L cutoff");
  sc_prompts->add_option("--out", p_out, "output JSONL path");

  // pretrain
  auto* sc_pre = app.add_subcommand("pretrain", "pretrain the base denoiser");
  int pre_hidden = -1;
  std::string pre_out;
  sc_pre->add_option("--hidden", pre_hidden, "hidden width override");
  sc_pre->add_option("--out", pre_out, "output checkpoint path");

  // synth
  auto* sc_synth = app.add_subcommand("synth", "synthesize a skill dataset");
  std::string sy_mode = "self", sy_prompts, sy_model, sy_out;
  sc_synth->add_option("--mode", sy_mode, "self|gt|weak");
  sc_synth->add_option("--prompts", sy_prompts, "prompt JSONL")->required();
  sc_synth->add_option("--model", sy_model, "generator checkpoint");
  sc_synth->add_option("--out", sy_out, "output dataset path");

  // train
  auto* sc_train = app.add_subcommand("train", "train a skill expert");
  std::string tr_skill, tr_base, tr_data, tr_out;
  sc_train->add_option("--skill", tr_skill, "skill name")->required();
  sc_train->add_option("--base", tr_base, "base checkpoint");
  sc_train->add_option("--data", tr_data, "dataset path");
  sc_train->add_option("--out", tr_out, "output adapter checkpoint");

  // merge
  auto* sc_merge = app.add_subcommand("merge", "merge expert adapters");
  std::vector<std::string> mg_inputs;
  std::string mg_out;
  sc_merge->add_option("--inputs", mg_inputs, "adapter checkpoints");
  sc_merge->add_option("--out", mg_out, "output checkpoint path");

  // eval
  auto* sc_eval = app.add_subcommand("eval", "score a model on the suites");
  std::string ev_model, ev_adapter, ev_suites = "all", ev_out;
  sc_eval->add_option("--model", ev_model, "base checkpoint")->required();
  sc_eval->add_option("--adapter", ev_adapter, "adapter checkpoint");
  sc_eval->add_option("--suites", ev_suites, "all or comma list of skills");
  sc_eval->add_option("--out", ev_out, "report JSON path");

  // report
  auto* sc_rep = app.add_subcommand("report", "compare evaluation reports");
  std::vector<std::string> rp_inputs, rp_labels;
  std::string rp_out;
  sc_rep->add_option("--inputs", rp_inputs, "report JSON files");
  sc_rep->add_option("--labels", rp_labels, "row labels");
  sc_rep->add_option("--out", rp_out, "table output path");

  // experiment
  auto* sc_exp = app.add_subcommand("experiment", "run an experiment recipe");
  std::string ex_recipe, ex_out;
  sc_exp->add_option("--recipe", ex_recipe, "recipe name")->required();
  sc_exp->add_option("--out", ex_out, "experiment JSON path");

  // pipeline
  auto* sc_pipe =
      app.add_subcommand("pipeline", "prompts, pretrain, synth, train, merge, eval");

  // Global flags are accepted both before and after the subcommand name.
  for (CLI::App* sc : app.get_subcommands([](CLI::App*) { return true; }))
    sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (sc_prompts->parsed())
      return cmd_prompts(resolve_config(g), p_skill, p_count, p_threshold, p_out);
    if (sc_pre->parsed())
      return cmd_pretrain(resolve_config(g), pre_hidden, pre_out);
    if (sc_synth->parsed())
      return cmd_synth(resolve_config(g), sy_mode, sy_prompts, sy_model, sy_out);
    if (sc_train->parsed())
      return cmd_train(resolve_config(g), tr_skill, tr_base, tr_data, tr_out);
    if (sc_merge->parsed())
      return cmd_merge(resolve_config(g), mg_inputs, mg_out);
    if (sc_eval->parsed())
      return cmd_eval(resolve_config(g), ev_model, ev_adapter, ev_suites, ev_out);
    if (sc_rep->parsed()) return cmd_report(rp_inputs, rp_labels, rp_out);
    if (sc_exp->parsed())
      return cmd_experiment(resolve_config(g), ex_recipe, ex_out);
    if (sc_pipe->parsed()) {
      AppConfig cfg = resolve_config(g);
      if (!g.live) {
        cfg.offline = true;  // pipeline is offline unless explicitly live
        cfg.note("offline", g.offline ? "flag" : "default");
      }
      return cmd_pipeline(cfg);
    }
    std::cerr << app.help();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
