#pragma once

#include <map>
#include <string>
#include <vector>

#include "selma/train.hpp"

namespace selma {

enum class Recipe { expert_vs_joint_vs_merged, gt_vs_auto, weak_to_strong };

std::string recipe_name(Recipe r);
Recipe parse_recipe(const std::string& s);  // throws std::invalid_argument

struct ExperimentReport {
  Recipe recipe = Recipe::expert_vs_joint_vs_merged;
  std::uint64_t seed = 0;
  std::string config_json;  // effective config, for exact rerun
  std::vector<std::string> labels;
  std::vector<EvalReport> reports;  // one per row, aligned with labels
  Comparison table;
  std::map<std::string, TrainMetrics> metrics;  // keyed by row label
};

// expert_vs_joint_vs_merged: base, 5 skill experts, one joint adapter on the
// mixture, and the uniform merge, all scored on all suites (8 rows).
// gt_vs_auto: per skill one expert on ground-truth renders and one on
// self-generated images; each arm is reported as the composite of its five
// experts scored on their own skills (2 rows).
// weak_to_strong: weak/strong bases plus the strong base fine-tuned on
// weak-generated and strong-generated data (4 rows).
ExperimentReport run_experiment(Recipe recipe, const AppConfig& cfg);

// Full machine-readable dump: recipe, seed, config, table, and per-row
// training metrics.
std::string experiment_to_json(const ExperimentReport& r);

}  // namespace selma
