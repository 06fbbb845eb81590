#include "selma/train.hpp"

#include <algorithm>
#include <numeric>

#include "selma/checkpoint.hpp"

namespace selma {

namespace {

// Seed-stream allocation across the whole pipeline. Indices must never
// collide between purposes or the runs stop being independent draws:
//   kInit:  hidden (base init), 1 (adapter init, shared across skills)
//   kData:  0 pretrain batches, 100+skill pools, 200+skill expert batches,
//           300 joint batches, 400 gate batches
//   kNoise: 0 pretrain, 10+skill experts, 20 joint, 30 gate, 31 gate probe
//   kEval:  skill (held-out suites), 1000+skill (selection suites)
constexpr std::uint64_t kPoolStream = 100;
constexpr std::uint64_t kExpertDataStream = 200;
constexpr std::uint64_t kJointDataStream = 300;
constexpr std::uint64_t kGateDataStream = 400;
constexpr std::uint64_t kExpertNoiseStream = 10;
constexpr std::uint64_t kJointNoiseStream = 20;
constexpr std::uint64_t kGateNoiseStream = 30;
constexpr std::uint64_t kGateProbeStream = 31;

using ItemView = std::vector<const DatasetItem*>;

TrainBatch<float> draw_batch(const ItemView& items, int batch, Rng& rng) {
  TrainBatch<float> b;
  b.x0.resize(kImageDim, batch);
  b.prompts.resize(static_cast<std::size_t>(batch));
  for (int j = 0; j < batch; ++j) {
    const DatasetItem& it =
        *items[rng.bounded(static_cast<std::uint32_t>(items.size()))];
    b.x0.col(j) = it.image.data;
    b.prompts[static_cast<std::size_t>(j)] = it.prompt.text;
  }
  return b;
}

std::map<std::string, MatrixF*> lora_params(LoraF& a) {
  std::map<std::string, MatrixF*> p;
  for (auto& [name, e] : a.layers) {
    p["lora." + name + ".A"] = &e.A;
    p["lora." + name + ".B"] = &e.B;
  }
  return p;
}

std::map<std::string, MatrixF*> gate_params(MoeGateF& g) {
  std::map<std::string, MatrixF*> p;
  for (auto& [name, wg] : g.wg) p["gate." + name + ".Wg"] = &wg;
  return p;
}

double mean_tail(const std::vector<double>& v, std::size_t n) {
  if (v.empty()) return 0.0;
  const std::size_t k = std::min(n, v.size());
  return std::accumulate(v.end() - static_cast<long>(k), v.end(), 0.0) /
         static_cast<double>(k);
}

ItemView view_of(const SkillDataset& ds) {
  ItemView v;
  for (const DatasetItem& it : ds.items) v.push_back(&it);
  return v;
}

ItemView view_of(const std::vector<SkillDataset>& sets) {
  ItemView v;
  for (const SkillDataset& ds : sets)
    for (const DatasetItem& it : ds.items) v.push_back(&it);
  return v;
}

ExpertResult train_lora_impl(const ModelF& base, const ItemView& items,
                             const TrainConfig& tc, const SuiteSet& selection,
                             const SamplerConfig& sampler, std::uint64_t seed,
                             std::uint64_t data_idx, std::uint64_t noise_idx,
                             const std::string& skill_label) {
  if (items.empty())
    throw std::invalid_argument("train_expert: dataset is empty");
  if (tc.eval_every < 1 || tc.eval_every > tc.steps)
    throw std::invalid_argument("train_expert: eval_every outside [1, steps]");

  ExpertResult r;
  Rng init_rng = make_rng(seed, streams::kInit, 1);
  LoraF adapter = init_adapter(base, tc.rank, init_rng);
  adapter.skill = skill_label;

  const NameSet mask = lora_param_names(adapter);
  const auto params = lora_params(adapter);
  AdamState<float> opt;
  opt.lr = static_cast<float>(tc.lr);

  AdapterCtxF ctx;
  ctx.lora = &adapter;
  auto score_now = [&] {
    return evaluate_model(base, ctx, selection, sampler).aggregate;
  };

  // Step 0: the fresh adapter is a zero-delta no-op; it anchors selection.
  r.metrics.step0_score = score_now();
  r.metrics.snapshots.emplace_back(0, r.metrics.step0_score);
  r.adapter = adapter;
  r.metrics.best_step = 0;
  r.metrics.best_score = r.metrics.step0_score;

  Rng data_rng = make_rng(seed, streams::kData, data_idx);
  Rng noise_rng = make_rng(seed, streams::kNoise, noise_idx);
  for (int step = 1; step <= tc.steps; ++step) {
    const TrainBatch<float> batch = draw_batch(items, tc.batch, data_rng);
    const NoiseDraw<float> draw = draw_noise<float>(
        tc.batch, base.schedule.T, tc.cond_dropout, noise_rng);
    GradMap<float> grads;
    const float loss = diffusion_loss(base, ctx, batch, draw, &mask, &grads);
    r.metrics.losses.push_back(loss);
    adam_step(params, grads, opt);

    if (step % tc.eval_every == 0 || step == tc.steps) {
      const double score = score_now();
      r.metrics.snapshots.emplace_back(step, score);
      if (score > r.metrics.best_score) {  // strict: ties keep earlier/zero
        r.metrics.best_score = score;
        r.metrics.best_step = step;
        r.adapter = adapter;
      }
    }
  }
  r.metrics.initial_loss = r.metrics.losses.front();
  r.metrics.final_loss = mean_tail(r.metrics.losses, 10);
  return r;
}

MoeGateT<double> gate_to_double(const MoeGateF& g) {
  MoeGateT<double> d;
  d.k = g.k;
  for (const auto& [name, wg] : g.wg) d.wg[name] = wg.cast<double>();
  return d;
}

}  // namespace

ModelF pretrain_base(const AppConfig& cfg, int hidden, std::uint64_t seed,
                     TrainMetrics* metrics) {
  Rng init_rng =
      make_rng(seed, streams::kInit, static_cast<std::uint64_t>(hidden));
  ModelF model = init_model<float>(hidden, cfg.schedule(), init_rng);

  // Ground-truth pools, one stream per skill so pool contents do not depend
  // on pool size ordering elsewhere.
  std::vector<DatasetItem> pool;
  for (Skill s : kAllSkills) {
    Rng pool_rng = make_rng(
        seed, streams::kData,
        kPoolStream + static_cast<std::uint64_t>(skill_index(s)));
    for (int i = 0; i < cfg.pretrain_pool; ++i) {
      const ToyScene scene = sample_scene(s, pool_rng);
      DatasetItem item;
      item.prompt.id = static_cast<int>(pool.size());
      item.prompt.skill = s;
      item.prompt.text = caption(scene);
      item.image = render(scene);
      pool.push_back(std::move(item));
    }
  }
  ItemView items;
  for (const DatasetItem& it : pool) items.push_back(&it);

  const NameSet mask = available_param_names(model, AdapterCtxF{});
  const auto params = param_refs<float>(model, nullptr, nullptr);
  AdamState<float> opt;
  opt.lr = static_cast<float>(cfg.train.lr);

  TrainMetrics local;
  TrainMetrics& m = metrics ? *metrics : local;
  Rng data_rng = make_rng(seed, streams::kData, 0);
  Rng noise_rng = make_rng(seed, streams::kNoise, 0);
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    const TrainBatch<float> batch = draw_batch(items, cfg.train.batch, data_rng);
    const NoiseDraw<float> draw = draw_noise<float>(
        cfg.train.batch, model.schedule.T, cfg.train.cond_dropout, noise_rng);
    GradMap<float> grads;
    const float loss =
        diffusion_loss(model, AdapterCtxF{}, batch, draw, &mask, &grads);
    m.losses.push_back(loss);
    adam_step(params, grads, opt);
  }
  m.initial_loss = m.losses.front();
  m.final_loss = mean_tail(m.losses, 10);
  return model;
}

SkillDataset synth_dataset(const ModelF* generator,
                           const std::vector<Prompt>& prompts,
                           DatasetSource mode, const SamplerConfig& sampler,
                           std::uint64_t seed) {
  if (prompts.empty())
    throw std::invalid_argument("synth_dataset: prompts are empty");
  SkillDataset ds;
  ds.skill = prompts.front().skill;
  ds.source = mode;
  ds.prompts_hash = fnv1a64(prompts_to_jsonl(prompts));
  ds.seed = seed;
  for (const Prompt& p : prompts)
    if (p.skill != ds.skill)
      throw std::invalid_argument("synth_dataset: mixed skills in prompts");

  if (mode == DatasetSource::ground_truth) {
    for (const Prompt& p : prompts) {
      DatasetItem item;
      item.prompt = p;
      item.image = render(scene_from_caption(p.text));
      ds.items.push_back(std::move(item));
    }
    return ds;
  }

  if (!generator)
    throw std::invalid_argument("synth_dataset: sampling modes need a model");
  ds.generator_hash = payload_hash(checkpoint_of(*generator, 0, 0));
  for (const Prompt& p : prompts) {
    SamplerConfig cfg = sampler;
    cfg.seed = fnv1a64(
        p.text, fnv1a64_u64(static_cast<std::uint64_t>(p.id),
                            fnv1a64_u64(seed)));
    DatasetItem item;
    item.prompt = p;
    item.image = sample(*generator, AdapterCtxF{}, p.text, cfg);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

ExpertResult train_expert(const ModelF& base, const SkillDataset& data,
                          const TrainConfig& tc,
                          const std::vector<SuiteEntry>& selection,
                          const SamplerConfig& sampler, std::uint64_t seed) {
  SuiteSet sel;
  sel[data.skill] = selection;
  const std::uint64_t idx = static_cast<std::uint64_t>(skill_index(data.skill));
  return train_lora_impl(base, view_of(data), tc, sel, sampler, seed,
                         kExpertDataStream + idx, kExpertNoiseStream + idx,
                         skill_name(data.skill));
}

ExpertResult train_joint(const ModelF& base,
                         const std::vector<SkillDataset>& datasets,
                         const TrainConfig& tc, const SuiteSet& selection,
                         const SamplerConfig& sampler, std::uint64_t seed) {
  return train_lora_impl(base, view_of(datasets), tc, selection, sampler, seed,
                         kJointDataStream, kJointNoiseStream, "joint");
}

GateResult train_moe_gate(const ModelF& base, const std::vector<LoraF>& experts,
                          const std::vector<SkillDataset>& datasets,
                          const AppConfig& cfg, std::uint64_t seed) {
  if (experts.empty())
    throw std::invalid_argument("train_moe_gate: no experts");
  for (const LoraF& e : experts)
    if (!same_structure(experts.front(), e))
      throw std::invalid_argument("train_moe_gate: expert structure mismatch");
  const ItemView items = view_of(datasets);
  if (items.empty())
    throw std::invalid_argument("train_moe_gate: datasets are empty");

  GateResult r;
  const int E = static_cast<int>(experts.size());
  r.gate.k = E;  // activate all experts
  for (const DenseLayerF* l : {&base.dense1, &base.dense2, &base.dense3})
    r.gate.wg[l->name] = MatrixF::Zero(E, l->W.cols());

  AdapterCtxF ctx;
  ctx.gate = &r.gate;
  for (const LoraF& e : experts) ctx.experts.push_back(&e);

  const NameSet mask = gate_param_names(r.gate);
  const auto params = gate_params(r.gate);
  AdamState<float> opt;
  opt.lr = static_cast<float>(cfg.gate_lr);

  // Fixed probe batch, scored in 64-bit so the tiny gate-lr movement is
  // resolvable above float rounding.
  Rng probe_rng = make_rng(seed, streams::kNoise, kGateProbeStream);
  const TrainBatch<float> probe = draw_batch(items, 64, probe_rng);
  const NoiseDraw<float> probe_draw = draw_noise<float>(
      static_cast<int>(probe.x0.cols()), base.schedule.T, 0.0, probe_rng);
  const ModelD base_d = to_double(base);
  std::vector<LoraT<double>> experts_d;
  for (const LoraF& e : experts) experts_d.push_back(lora_to_double(e));
  TrainBatch<double> probe_d;
  probe_d.x0 = probe.x0.cast<double>();
  probe_d.prompts = probe.prompts;
  NoiseDraw<double> probe_draw_d;
  probe_draw_d.t = probe_draw.t;
  probe_draw_d.eps = probe_draw.eps.cast<double>();
  probe_draw_d.dropped = probe_draw.dropped;
  auto probe_loss = [&] {
    const MoeGateT<double> gate_d = gate_to_double(r.gate);
    AdapterCtx<double> ctx_d;
    ctx_d.gate = &gate_d;
    for (const auto& e : experts_d) ctx_d.experts.push_back(&e);
    return diffusion_loss<double>(base_d, ctx_d, probe_d, probe_draw_d,
                                  nullptr, nullptr);
  };
  r.metrics.probe_initial = probe_loss();

  Rng data_rng = make_rng(seed, streams::kData, kGateDataStream);
  Rng noise_rng = make_rng(seed, streams::kNoise, kGateNoiseStream);
  for (int step = 0; step < cfg.train.steps; ++step) {
    const TrainBatch<float> batch = draw_batch(items, cfg.train.batch, data_rng);
    const NoiseDraw<float> draw = draw_noise<float>(
        cfg.train.batch, base.schedule.T, cfg.train.cond_dropout, noise_rng);
    GradMap<float> grads;
    const float loss = diffusion_loss(base, ctx, batch, draw, &mask, &grads);
    r.metrics.losses.push_back(loss);
    adam_step(params, grads, opt);
  }
  r.metrics.probe_final = probe_loss();
  r.metrics.initial_loss = r.metrics.losses.front();
  r.metrics.final_loss = mean_tail(r.metrics.losses, 10);
  return r;
}

}  // namespace selma
