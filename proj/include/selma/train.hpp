#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "selma/config.hpp"
#include "selma/dataset.hpp"
#include "selma/evalharness.hpp"
#include "selma/model.hpp"

namespace selma {

struct TrainMetrics {
  std::vector<double> losses;  // one entry per optimization step
  double initial_loss = 0.0;   // loss of the first step's batch, pre-update
  double final_loss = 0.0;     // mean over the last 10 steps
  std::vector<std::pair<int, double>> snapshots;  // (step, selection score)
  int best_step = 0;
  double best_score = 0.0;
  double step0_score = 0.0;    // zero-delta adapter score on selection suite
  double probe_initial = 0.0;  // fixed-batch loss before/after training,
  double probe_final = 0.0;    // used by gate training (64-bit evaluation)
};

// Short-budget pretraining on ground-truth renders mixed across all skills.
// Deliberately leaves per-skill headroom; deterministic given (cfg, hidden,
// seed).
ModelF pretrain_base(const AppConfig& cfg, int hidden, std::uint64_t seed,
                     TrainMetrics* metrics = nullptr);

// One image per prompt. self_generated/weak_model sample from `generator`
// with per-prompt seeds; ground_truth renders the scene parsed from each
// caption and needs no generator. Throws std::invalid_argument for empty
// prompt lists, mixed skills, a missing generator, or (in ground-truth mode)
// non-grammar captions.
SkillDataset synth_dataset(const ModelF* generator,
                           const std::vector<Prompt>& prompts,
                           DatasetSource mode, const SamplerConfig& sampler,
                           std::uint64_t seed);

struct ExpertResult {
  LoraF adapter;  // best snapshot by selection score
  TrainMetrics metrics;
};

// LoRA fine-tuning with the base frozen. Every eval_every steps (and at step
// 0 and the final step) the adapter is scored on the selection suite; the
// best strictly-improving snapshot is returned, so the result never scores
// below the zero-delta step-0 adapter.
ExpertResult train_expert(const ModelF& base, const SkillDataset& data,
                          const TrainConfig& tc,
                          const std::vector<SuiteEntry>& selection,
                          const SamplerConfig& sampler, std::uint64_t seed);

// Same loop over the union of all skill datasets, selected on all suites.
ExpertResult train_joint(const ModelF& base,
                         const std::vector<SkillDataset>& datasets,
                         const TrainConfig& tc, const SuiteSet& selection,
                         const SamplerConfig& sampler, std::uint64_t seed);

struct GateResult {
  MoeGateF gate;
  TrainMetrics metrics;
};

// Appendix-style gate training: experts and base frozen, only the per-layer
// gate weights move, at cfg.gate_lr over the union of the datasets. The gate
// starts at zero weights (uniform expert mixing) with K = |experts|.
GateResult train_moe_gate(const ModelF& base, const std::vector<LoraF>& experts,
                          const std::vector<SkillDataset>& datasets,
                          const AppConfig& cfg, std::uint64_t seed);

}  // namespace selma
