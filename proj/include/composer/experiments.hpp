// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// Experiment registry and the compose / audit / run drivers behind the CLI.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "composer/config.hpp"
#include "composer/golden.hpp"
#include "composer/layers.hpp"
#include "composer/mesh_plan.hpp"
#include "composer/module.hpp"
#include "composer/rng.hpp"

namespace composer {

/// Registers layers, factories and modifier kinds. Idempotent.
inline void register_all() {
  layers::register_builtins();
  static std::once_flag once;
  std::call_once(once, [] { register_mesh_plan_kinds(Registry::global()); });
}

/// Digest over every registered schema and layer behavior.
inline std::string module_registry_digest(const Registry& reg = Registry::global(),
                                          const LayerRegistry& layers = LayerRegistry::global()) {
  return content_digest(reg.describe() + layers.describe());
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

struct ModelSpec {
  std::int64_t vocab_size = 32;
  std::int64_t dim = 16;
  std::int64_t num_heads = 2;
  std::int64_t num_layers = 2;
  std::vector<std::string> activation{"nn.gelu"};
  /// Int or a FunctionSpec.
  ConfigValue hidden_dim = std::int64_t{64};
  double learning_rate = 1e-3;
};

/// Trainer config for a causal LM, with the default mesh rules embedded.
inline ConfigNode build_trainer(const ModelSpec& m, const Registry& reg = Registry::global()) {
  ConfigNode layer = reg.default_config(layers::kTransformerLayer);
  layer = set(layer, "self_attention.num_heads", m.num_heads, reg);
  layer = set(layer, "self_attention.causal", true, reg);
  Sequence acts;
  for (const auto& a : m.activation) acts.emplace_back(a);
  layer = set(layer, "feed_forward.activation", acts, reg);
  layer = set(layer, "feed_forward.hidden_dim", m.hidden_dim, reg);

  ConfigNode cfg = reg.default_config(layers::kTrainer);
  cfg = set(cfg, "model.decoder.vocab_size", m.vocab_size, reg);
  cfg = set(cfg, "model.decoder.dim", m.dim, reg);
  cfg = set(cfg, "model.decoder.transformer.layer", Sequence(static_cast<std::size_t>(m.num_layers), ConfigValue(layer)),
            reg);
  cfg = set(cfg, "optimizer.lr", m.learning_rate, reg);
  cfg = set(cfg, "mesh_rules", mesh_rules_to_config(default_mesh_rules(), reg), reg);
  return cfg;
}

using ExperimentBuilder = std::function<ConfigNode()>;

class ExperimentRegistry {
 public:
  void add(std::string name, ExperimentBuilder builder) {
    if (!builders_.emplace(name, std::move(builder)).second) throw Error(ErrorCode::kDuplicateKind, name);
  }
  bool has(std::string_view name) const { return builders_.count(std::string(name)) > 0; }
  ConfigNode build(std::string_view name) const {
    auto it = builders_.find(std::string(name));
    if (it == builders_.end()) throw Error(ErrorCode::kUnknownExperiment, std::string(name));
    return it->second();
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, b] : builders_) out.push_back(n);
    return out;
  }
  std::size_t size() const { return builders_.size(); }

  /// One experiment per "<name>.golden" file in `dir`.
  static ExperimentRegistry from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIo, dir.string(), "not a directory");
    ExperimentRegistry out;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".golden") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      std::stringstream buf;
      buf << in.rdbuf();
      const std::string text = buf.str();
      ConfigNode cfg = config_from_golden(text);
      out.add(f.stem().string(), [cfg] { return cfg; });
    }
    return out;
  }

 private:
  std::map<std::string, ExperimentBuilder> builders_;
};

/// 24 desk-scale experiments: dim {16,32} x heads {2,4} x activation
/// {gelu, swiglu} x hidden {4*dim, scaled 4.0, scaled 8/3}. The 32/4/gelu/4x
/// point is named "txf_base".
inline ExperimentRegistry builtin_experiments() {
  register_all();
  ExperimentRegistry reg;
  struct Hidden {
    std::string tag;
    std::function<ConfigValue(std::int64_t)> value;
  };
  const std::vector<Hidden> hiddens{
      {"h4x", [](std::int64_t d) { return ConfigValue(4 * d); }},
      {"fn4", [](std::int64_t) { return ConfigValue(layers::scaled_hidden_dim_spec(4.0)); }},
      {"fn83", [](std::int64_t) { return ConfigValue(layers::scaled_hidden_dim_spec(8.0 / 3.0)); }},
  };
  const std::vector<std::pair<std::string, std::vector<std::string>>> acts{
      {"gelu", {"nn.gelu"}}, {"swiglu", {"linear", "nn.silu"}}};
  for (std::int64_t dim : {16, 32})
    for (std::int64_t heads : {2, 4})
      for (const auto& [act_name, act] : acts)
        for (const auto& h : hiddens) {
          ModelSpec spec;
          spec.dim = dim;
          spec.num_heads = heads;
          spec.activation = act;
          spec.hidden_dim = h.value(dim);
          std::string name = "txf_d" + std::to_string(dim) + "_h" + std::to_string(heads) + "_" + act_name + "_" + h.tag;
          if (dim == 32 && heads == 4 && act_name == "gelu" && h.tag == "h4x") name = "txf_base";
          reg.add(name, [spec] { return build_trainer(spec); });
        }
  return reg;
}

/// Writes "<name>.golden" for every experiment.
inline void export_registry(const ExperimentRegistry& reg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& name : reg.names()) {
    std::ofstream out(dir / (name + ".golden"));
    if (!out) throw Error(ErrorCode::kIo, (dir / name).string(), "cannot write golden file");
    out << serialize_golden(reg.build(name));
  }
}

// ---------------------------------------------------------------------------
// compose
// ---------------------------------------------------------------------------

/// Applies the first matching mesh rule for the instance type, then fills a
/// mesh wildcard from the catalog's device count. `rules` overrides the
/// rules embedded in the config.
inline ConfigNode compose_config(const ConfigNode& trainer_cfg, std::string_view instance_type, const DeviceCatalog& catalog,
                                 const std::optional<std::vector<MeshRule>>& rules = std::nullopt) {
  const DeviceType& dev = catalog.find(instance_type);
  const std::vector<MeshRule> active = rules ? *rules : mesh_rules_from_config(trainer_cfg.get("mesh_rules"));
  ConfigNode cfg = apply_modifiers(trainer_cfg, select_mesh_rule(active, instance_type));
  cfg = resolve_trainer_mesh(cfg, dev.devices);
  (void)instantiate(cfg);
  return cfg;
}

inline ConfigNode compose(const ExperimentRegistry& reg, std::string_view experiment, std::string_view instance_type,
                          const DeviceCatalog& catalog,
                          const std::optional<std::vector<MeshRule>>& rules = std::nullopt) {
  return compose_config(reg.build(experiment), instance_type, catalog, rules);
}

/// A rules file is the golden text of a MeshRuleSet.
inline std::vector<MeshRule> load_rules_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, file.string(), "cannot open rules file");
  std::stringstream buf;
  buf << in.rdbuf();
  const ConfigNode set_cfg = config_from_golden(buf.str());
  if (set_cfg.kind() != kMeshRuleSet) throw Error(ErrorCode::kTypeMismatch, file.string(), "expected a MeshRuleSet");
  return mesh_rules_from_config(set_cfg.get("rules"));
}

// ---------------------------------------------------------------------------
// Forward driver
// ---------------------------------------------------------------------------

struct RunOptions {
  std::int64_t steps = 1;
  std::uint64_t seed = 0;
  std::int64_t batch = 2;
  std::int64_t seq_len = 8;
};

struct StepSummary {
  std::int64_t step = 0;
  /// "<module path>/<key>" -> scalar value.
  std::map<std::string, double> scalars;
};

inline nlohmann::json to_json(const StepSummary& s) {
  nlohmann::json j;
  j["step"] = s.step;
  j["summaries"] = s.scalars;
  return j;
}

/// Token ids for one step, uniform over the vocabulary.
inline Tensor synthetic_tokens(const RngKey& key, std::int64_t batch, std::int64_t seq_len, std::int64_t vocab) {
  Tensor ids({batch, seq_len});
  UniformStream u(key);
  for (std::int64_t i = 0; i < ids.size(); ++i)
    ids[i] = static_cast<double>(std::min<std::int64_t>(vocab - 1, static_cast<std::int64_t>(u.next() * vocab)));
  return ids;
}

/// Runs `opts.steps` forward passes of the trainer's model on synthetic data.
/// Shapes are checked before the first step.
inline std::vector<StepSummary> run_forward(const ConfigNode& trainer_cfg, const RunOptions& opts) {
  if (opts.steps < 0) throw Error(ErrorCode::kInvalidArgument, "steps", "must be >= 0");
  if (opts.batch <= 0 || opts.seq_len <= 0) throw Error(ErrorCode::kShape, "workload", "batch and seq_len must be positive");
  const ModuleTree tree = instantiate(trainer_cfg);
  const std::int64_t vocab = get(trainer_cfg, "model.decoder.vocab_size").as_int();
  const RngKey root = RngKey::from_seed(opts.seed);
  const StateTree state = init_state(tree, child_key(root, "init", 0));
  std::vector<StepSummary> out;
  for (std::int64_t step = 0; step < opts.steps; ++step) {
    const auto u = static_cast<std::uint64_t>(step);
    const Tensor ids = synthetic_tokens(child_key(root, "data", u), opts.batch, opts.seq_len, vocab);
    const InvokeResult r = invoke(tree, state, child_key(root, "step", u), ids);
    StepSummary s{step, {}};
    for (const auto& [path, entries] : r.collection.summaries)
      for (const auto& [k, v] : entries)
        if (const double* d = std::get_if<double>(&v)) s.scalars[path.empty() ? k : path + "/" + k] = *d;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

struct MutationResult {
  ConfigNode config;
  ReplaceReport report;
};

/// A feature integration expressed only as config-tree operations.
struct Mutator {
  std::string feature;
  /// Kind whose nodes are swapped out; replaced subtrees own the diff.
  std::string target_kind;
  std::function<MutationResult(const ConfigNode&)> apply;
};

inline Mutator moe_mutator() {
  return {"moe", std::string(layers::kFeedForward), [](const ConfigNode& cfg) {
            ConfigNode tmpl = default_config(layers::kMoE);
            tmpl = set(tmpl, "num_experts", 4);
            tmpl = set(tmpl, "top_k", 2);
            auto [out, report] = replace_config(cfg, layers::kFeedForward, tmpl);
            return MutationResult{std::move(out), std::move(report)};
          }};
}

inline Mutator rope_mutator() {
  return {"rope", std::string(layers::kNoPos), [](const ConfigNode& cfg) {
            auto [out, report] = replace_config(cfg, layers::kNoPos, default_config(layers::kRoPE));
            return MutationResult{std::move(out), std::move(report)};
          }};
}

inline Mutator mutator_for_feature(std::string_view feature) {
  if (feature == "moe") return moe_mutator();
  if (feature == "rope") return rope_mutator();
  throw Error(ErrorCode::kInvalidArgument, std::string(feature), "unknown feature");
}

/// True when `path` equals `prefix` or lies beneath it.
inline bool path_under(std::string_view path, std::string_view prefix) {
  if (!path.starts_with(prefix)) return false;
  if (path.size() == prefix.size()) return true;
  const char c = path[prefix.size()];
  return c == '.' || c == '[';
}

struct ExperimentAudit {
  std::string experiment;
  std::vector<std::string> replaced_paths;
  std::size_t diff_lines = 0;
  bool diff_contained = false;
  bool forward_ok = false;
  std::string error;
};

struct AuditReport {
  std::string feature;
  std::size_t num_experiments = 0;
  std::size_t num_modules = 0;
  std::size_t num_variants = 0;
  std::size_t nodes_replaced = 0;
  std::size_t mutators_used = 0;
  std::string digest_before;
  std::string digest_after;
  std::vector<ExperimentAudit> experiments;
  bool passed = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"feature", feature},
                     {"num_experiments", num_experiments},
                     {"num_modules", num_modules},
                     {"num_variants", num_variants},
                     {"nodes_replaced", nodes_replaced},
                     {"mutators_used", mutators_used},
                     {"module_registry_digest_before", digest_before},
                     {"module_registry_digest_after", digest_after},
                     {"passed", passed}};
    j["experiments"] = nlohmann::json::array();
    for (const auto& e : experiments)
      j["experiments"].push_back({{"experiment", e.experiment},
                                  {"replaced_paths", e.replaced_paths},
                                  {"diff_lines", e.diff_lines},
                                  {"diff_contained", e.diff_contained},
                                  {"forward_ok", e.forward_ok},
                                  {"error", e.error}});
    return j;
  }
};

inline std::size_t count_module_kinds(const Registry& reg = Registry::global()) {
  std::size_t n = 0;
  for (const auto& k : reg.kinds())
    if (layer_for_kind(k, reg)) ++n;
  return n;
}

/// Applies one mutator to every experiment. Each mutated config must
/// instantiate, run one forward step, and differ from the original only under
/// replaced paths; layer definitions must be untouched.
inline AuditReport audit(const ExperimentRegistry& reg, const Mutator& mutator, const RunOptions& run = {}) {
  register_all();
  AuditReport r;
  r.feature = mutator.feature;
  r.digest_before = module_registry_digest();
  r.num_modules = count_module_kinds();
  r.mutators_used = reg.size() > 0 ? 1 : 0;
  for (const auto& name : reg.names()) {
    ExperimentAudit e;
    e.experiment = name;
    try {
      const ConfigNode before = reg.build(name);
      const MutationResult m = mutator.apply(before);
      e.replaced_paths = m.report.replaced_paths;
      if (!m.report.replaced_paths.empty()) ++r.num_variants;
      r.nodes_replaced += m.report.replaced_paths.size();
      const auto diff = golden_diff(serialize_golden(before), serialize_golden(m.config));
      e.diff_lines = diff.size();
      e.diff_contained = std::all_of(diff.begin(), diff.end(), [&](const GoldenDiffEntry& d) {
        return std::any_of(e.replaced_paths.begin(), e.replaced_paths.end(),
                           [&](const std::string& p) { return path_under(d.path, p); });
      });
      RunOptions one = run;
      one.steps = 1;
      (void)run_forward(m.config, one);
      e.forward_ok = true;
    } catch (const Error& err) {
      e.error = Error(ErrorCode::kBrokenConfig, name, err.what()).what();
    }
    r.experiments.push_back(std::move(e));
  }
  r.num_experiments = r.experiments.size();
  r.digest_after = module_registry_digest();
  r.passed = r.digest_before == r.digest_after &&
             std::all_of(r.experiments.begin(), r.experiments.end(),
                         [](const ExperimentAudit& e) { return e.forward_ok && e.diff_contained; });
  return r;
}

}  // namespace composer
