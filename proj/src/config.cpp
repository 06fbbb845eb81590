#include "selma/config.hpp"

#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>
#include <vector>

namespace selma {

namespace {

using json = nlohmann::json;

// Field table driving file parsing, provenance, and printing.
struct Binding {
  std::string key;  // dotted: section.name or bare name
  std::function<void(AppConfig&, const json&)> set;
  std::function<std::string(const AppConfig&)> get;
};

template <typename T>
std::string show(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) return v;
  else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
  else {
    std::ostringstream o;
    o << v;
    return o.str();
  }
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = {
      {"train.lr", [](AppConfig& c, const json& j) { c.train.lr = j.get<double>(); },
       [](const AppConfig& c) { return show(c.train.lr); }},
      {"train.batch", [](AppConfig& c, const json& j) { c.train.batch = j.get<int>(); },
       [](const AppConfig& c) { return show(c.train.batch); }},
      {"train.steps", [](AppConfig& c, const json& j) { c.train.steps = j.get<int>(); },
       [](const AppConfig& c) { return show(c.train.steps); }},
      {"train.rank", [](AppConfig& c, const json& j) { c.train.rank = j.get<int>(); },
       [](const AppConfig& c) { return show(c.train.rank); }},
      {"train.cond_dropout",
       [](AppConfig& c, const json& j) { c.train.cond_dropout = j.get<double>(); },
       [](const AppConfig& c) { return show(c.train.cond_dropout); }},
      {"train.eval_every",
       [](AppConfig& c, const json& j) { c.train.eval_every = j.get<int>(); },
       [](const AppConfig& c) { return show(c.train.eval_every); }},
      {"sampler.steps",
       [](AppConfig& c, const json& j) { c.sampler.steps = j.get<int>(); },
       [](const AppConfig& c) { return show(c.sampler.steps); }},
      {"sampler.cfg_scale",
       [](AppConfig& c, const json& j) { c.sampler.cfg_scale = j.get<float>(); },
       [](const AppConfig& c) { return show(c.sampler.cfg_scale); }},
      {"schedule.T", [](AppConfig& c, const json& j) { c.T = j.get<int>(); },
       [](const AppConfig& c) { return show(c.T); }},
      {"schedule.beta_min",
       [](AppConfig& c, const json& j) { c.beta_min = j.get<double>(); },
       [](const AppConfig& c) { return show(c.beta_min); }},
      {"schedule.beta_max",
       [](AppConfig& c, const json& j) { c.beta_max = j.get<double>(); },
       [](const AppConfig& c) { return show(c.beta_max); }},
      {"model.hidden", [](AppConfig& c, const json& j) { c.hidden = j.get<int>(); },
       [](const AppConfig& c) { return show(c.hidden); }},
      {"model.weak_hidden",
       [](AppConfig& c, const json& j) { c.weak_hidden = j.get<int>(); },
       [](const AppConfig& c) { return show(c.weak_hidden); }},
      {"pretrain.steps",
       [](AppConfig& c, const json& j) { c.pretrain_steps = j.get<int>(); },
       [](const AppConfig& c) { return show(c.pretrain_steps); }},
      {"pretrain.pool",
       [](AppConfig& c, const json& j) { c.pretrain_pool = j.get<int>(); },
       [](const AppConfig& c) { return show(c.pretrain_pool); }},
      {"prompts.target_count",
       [](AppConfig& c, const json& j) { c.target_count = j.get<int>(); },
       [](const AppConfig& c) { return show(c.target_count); }},
      {"prompts.threshold",
       [](AppConfig& c, const json& j) { c.threshold = j.get<double>(); },
       [](const AppConfig& c) { return show(c.threshold); }},
      {"eval.eval_n", [](AppConfig& c, const json& j) { c.eval_n = j.get<int>(); },
       [](const AppConfig& c) { return show(c.eval_n); }},
      {"eval.select_n",
       [](AppConfig& c, const json& j) { c.select_n = j.get<int>(); },
       [](const AppConfig& c) { return show(c.select_n); }},
      {"gate.lr", [](AppConfig& c, const json& j) { c.gate_lr = j.get<double>(); },
       [](const AppConfig& c) { return show(c.gate_lr); }},
      {"seed",
       [](AppConfig& c, const json& j) { c.seed = j.get<std::uint64_t>(); },
       [](const AppConfig& c) { return show(c.seed); }},
      {"workdir",
       [](AppConfig& c, const json& j) { c.workdir = j.get<std::string>(); },
       [](const AppConfig& c) { return show(c.workdir); }},
      {"offline", [](AppConfig& c, const json& j) { c.offline = j.get<bool>(); },
       [](const AppConfig& c) { return show(c.offline); }},
  };
  return b;
}

// Accepts both spellings: nested {"train":{"lr":...}} and flat {"train.lr":...}.
const json* find_key(const json& root, const std::string& dotted) {
  if (root.contains(dotted)) return &root.at(dotted);
  const std::size_t dot = dotted.find('.');
  if (dot == std::string::npos) return nullptr;
  const std::string section = dotted.substr(0, dot);
  const std::string name = dotted.substr(dot + 1);
  if (!root.contains(section)) return nullptr;
  const json& s = root.at(section);
  return s.contains(name) ? &s.at(name) : nullptr;
}

}  // namespace

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  for (const Binding& b : bindings()) cfg.note(b.key, "default");
  if (path.empty()) {
    cfg.sampler.seed = cfg.seed;
    return cfg;
  }

  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_config: cannot open " + path);
  json root;
  try {
    f >> root;
  } catch (const std::exception& e) {
    throw std::runtime_error("load_config: bad JSON in " + path + ": " +
                             e.what());
  }
  if (!root.is_object())
    throw std::runtime_error("load_config: top level must be an object");

  // Reject unknown keys: typos should fail loudly, not silently no-op.
  for (const auto& [section, value] : root.items()) {
    const auto known = [&](const std::string& dotted) {
      for (const Binding& b : bindings())
        if (b.key == dotted) return true;
      return false;
    };
    if (value.is_object()) {
      for (const auto& [name, v] : value.items())
        if (!known(section + "." + name))
          throw std::invalid_argument("load_config: unknown key " + section +
                                      "." + name);
    } else if (!known(section)) {
      throw std::invalid_argument("load_config: unknown key " + section);
    }
  }

  for (const Binding& b : bindings()) {
    if (const json* v = find_key(root, b.key)) {
      try {
        b.set(cfg, *v);
      } catch (const std::exception& e) {
        throw std::invalid_argument("load_config: bad value for " + b.key +
                                    ": " + e.what());
      }
      cfg.note(b.key, "file");
    }
  }
  cfg.sampler.seed = cfg.seed;
  validate_config(cfg);
  return cfg;
}

void validate_config(const AppConfig& cfg) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (cfg.train.lr <= 0) fail("train.lr must be positive");
  if (cfg.train.batch < 1) fail("train.batch must be positive");
  if (cfg.train.steps < 1) fail("train.steps must be positive");
  if (cfg.train.rank < 1) fail("train.rank must be positive");
  if (cfg.train.cond_dropout < 0 || cfg.train.cond_dropout > 1)
    fail("train.cond_dropout must lie in [0,1]");
  if (cfg.train.eval_every < 1) fail("train.eval_every must be positive");
  if (cfg.train.eval_every > cfg.train.steps)
    fail("train.eval_every must not exceed train.steps");
  if (cfg.T < 1) fail("schedule.T must be positive");
  if (!(cfg.beta_min > 0) || cfg.beta_min > cfg.beta_max || cfg.beta_max >= 1)
    fail("schedule betas need 0 < beta_min <= beta_max < 1");
  if (cfg.sampler.steps < 1 || cfg.sampler.steps > cfg.T)
    fail("sampler.steps must lie in [1, schedule.T]");
  if (cfg.sampler.cfg_scale < 0) fail("sampler.cfg_scale must be >= 0");
  if (cfg.hidden < 1 || cfg.weak_hidden < 1)
    fail("model widths must be positive");
  if (cfg.pretrain_steps < 1) fail("pretrain.steps must be positive");
  if (cfg.pretrain_pool < 1) fail("pretrain.pool must be positive");
  if (cfg.target_count < 0) fail("prompts.target_count must be >= 0");
  if (cfg.threshold < 0 || cfg.threshold > 1)
    fail("prompts.threshold must lie in [0,1]");
  if (cfg.eval_n < 1) fail("eval.eval_n must be positive");
  if (cfg.select_n < 1) fail("eval.select_n must be positive");
  if (cfg.gate_lr <= 0) fail("gate.lr must be positive");
}

std::string config_to_json(const AppConfig& cfg) {
  const json root = {
      {"train",
       {{"lr", cfg.train.lr},
        {"batch", cfg.train.batch},
        {"steps", cfg.train.steps},
        {"rank", cfg.train.rank},
        {"cond_dropout", cfg.train.cond_dropout},
        {"eval_every", cfg.train.eval_every}}},
      {"sampler",
       {{"steps", cfg.sampler.steps}, {"cfg_scale", cfg.sampler.cfg_scale}}},
      {"schedule",
       {{"T", cfg.T}, {"beta_min", cfg.beta_min}, {"beta_max", cfg.beta_max}}},
      {"model", {{"hidden", cfg.hidden}, {"weak_hidden", cfg.weak_hidden}}},
      {"pretrain", {{"steps", cfg.pretrain_steps}, {"pool", cfg.pretrain_pool}}},
      {"prompts",
       {{"target_count", cfg.target_count}, {"threshold", cfg.threshold}}},
      {"eval", {{"eval_n", cfg.eval_n}, {"select_n", cfg.select_n}}},
      {"gate", {{"lr", cfg.gate_lr}}},
      {"seed", cfg.seed},
      {"workdir", cfg.workdir},
      {"offline", cfg.offline},
  };
  return root.dump(2);
}

std::string provenance_table(const AppConfig& cfg) {
  std::ostringstream o;
  for (const Binding& b : bindings()) {
    const auto it = cfg.provenance.find(b.key);
    const std::string origin =
        it == cfg.provenance.end() ? "default" : it->second;
    o << b.key;
    for (std::size_t i = b.key.size(); i < 22; ++i) o << ' ';
    const std::string val = b.get(cfg);
    o << val;
    for (std::size_t i = val.size(); i < 14; ++i) o << ' ';
    o << origin << "\n";
  }
  return o.str();
}

}  // namespace selma
