// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// Mesh rules, config modifiers and AOT analysis.
//
// Modifiers are plain config nodes so that rules can live inside a trainer
// config and show up in its golden file:
//
//   MeshRule          instance_type, modifiers[]
//   MeshShapeModifier mesh_shape, mesh_axis_names
//   RematSpecModifier remat_policies {module-path glob -> ["tag=decision", ...]}
//   DtypeModifier     dtype, params {...}
//
// A remat rule is "<tag glob>=<save|recompute|offload>". A module inherits
// the rules of its ancestors; the last matching rule wins and unmatched tags
// are saved.

#pragma once

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "composer/config.hpp"
#include "composer/golden.hpp"
#include "composer/layers.hpp"
#include "composer/module.hpp"
#include "composer/sharding.hpp"

namespace composer {

inline constexpr std::string_view kMeshRule = "MeshRule";
inline constexpr std::string_view kMeshRuleSet = "MeshRuleSet";
inline constexpr std::string_view kMeshShapeModifier = "MeshShapeModifier";
inline constexpr std::string_view kRematSpecModifier = "RematSpecModifier";
inline constexpr std::string_view kDtypeModifier = "DtypeModifier";

inline bool glob_match(std::string_view pattern, std::string_view text) {
  return fnmatch(std::string(pattern).c_str(), std::string(text).c_str(), 0) == 0;
}

inline bool has_glob(std::string_view pattern) { return pattern.find_first_of("*?[") != std::string_view::npos; }

/// "a.layer[3].b" -> "a.layer.b". Remat patterns address list fields by name.
inline std::string strip_indices(std::string_view path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] == '[') {
      while (i < path.size() && path[i] != ']') ++i;
      continue;
    }
    out += path[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remat policies
// ---------------------------------------------------------------------------

enum class RematDecision { kSave, kRecompute, kOffload };

inline std::string_view remat_decision_name(RematDecision d) {
  switch (d) {
    case RematDecision::kSave:
      return "save";
    case RematDecision::kRecompute:
      return "recompute";
    case RematDecision::kOffload:
      return "offload";
  }
  return "?";
}

struct RematRule {
  std::string tag;
  RematDecision decision = RematDecision::kSave;

  std::string to_string() const { return tag + "=" + std::string(remat_decision_name(decision)); }
  friend bool operator==(const RematRule&, const RematRule&) = default;
};

inline RematRule parse_remat_rule(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw Error(ErrorCode::kInvalidArgument, std::string(text), "expected tag=decision");
  const std::string_view d = text.substr(eq + 1);
  RematRule rule{std::string(text.substr(0, eq))};
  if (d == "save") {
    rule.decision = RematDecision::kSave;
  } else if (d == "recompute") {
    rule.decision = RematDecision::kRecompute;
  } else if (d == "offload") {
    rule.decision = RematDecision::kOffload;
  } else {
    throw Error(ErrorCode::kInvalidArgument, std::string(text), "unknown remat decision");
  }
  return rule;
}

inline std::vector<RematRule> parse_remat_rules(const ConfigValue& v) {
  std::vector<RematRule> out;
  for (const auto& item : v.as_sequence()) out.push_back(parse_remat_rule(item.as_text()));
  return out;
}

inline Sequence remat_rules_to_config(const std::vector<RematRule>& rules) {
  Sequence out;
  for (const auto& r : rules) out.emplace_back(r.to_string());
  return out;
}

inline RematDecision remat_decide(const std::vector<RematRule>& rules, std::string_view tag) {
  RematDecision d = RematDecision::kSave;
  for (const auto& r : rules)
    if (glob_match(r.tag, tag)) d = r.decision;
  return d;
}

/// Named policies. offload_dots: matmul outputs go to host, the rest is
/// recomputed. save_qkvoflash: QKVO projections and the attention context
/// stay in HBM, the rest is recomputed.
inline std::vector<RematRule> named_remat_policy(std::string_view name) {
  using D = RematDecision;
  if (name == "save_all") return {{"*", D::kSave}};
  if (name == "recompute_all") return {{"*", D::kRecompute}};
  if (name == "offload_dots")
    return {{"*", D::kRecompute}, {"*_proj", D::kOffload}, {"linear*", D::kOffload},
            {"router*", D::kOffload}, {"expert_*", D::kOffload}, {"logits*", D::kOffload}};
  if (name == "save_qkvoflash")
    return {{"*", D::kRecompute}, {"q_proj", D::kSave}, {"k_proj", D::kSave},
            {"v_proj", D::kSave},  {"o_proj", D::kSave}, {"context", D::kSave}};
  throw Error(ErrorCode::kInvalidArgument, std::string(name), "unknown remat policy");
}

// ---------------------------------------------------------------------------
// Modifiers
// ---------------------------------------------------------------------------

struct MeshShapeMod {
  std::vector<std::int64_t> shape;
  std::vector<std::string> axis_names;
};

struct RematSpecMod {
  std::vector<std::pair<std::string, std::vector<RematRule>>> policies;
};

struct DtypeMod {
  std::string dtype;
  Mapping params;
};

using ConfigModifier = std::variant<MeshShapeMod, RematSpecMod, DtypeMod>;

/// Keyword-style mesh helper: mesh({{"fsdp", -1}, {"model", 8}}).
inline MeshShapeMod mesh(std::initializer_list<std::pair<std::string, std::int64_t>> axes) {
  MeshShapeMod m;
  for (const auto& [name, size] : axes) {
    m.axis_names.push_back(name);
    m.shape.push_back(size);
  }
  return m;
}

inline void register_mesh_plan_kinds(Registry& reg = Registry::global()) {
  using F = FieldSpec;
  using V = ValueKind;
  auto add = [&](std::string_view kind, std::vector<FieldSpec> fields) {
    if (!reg.has_kind(kind)) reg.register_component(ComponentSchema{std::string(kind), std::move(fields), ""});
  };
  add(kMeshShapeModifier, {F::value("mesh_shape", V::kSequence, Sequence{}),
                           F::value("mesh_axis_names", V::kSequence, Sequence{})});
  add(kRematSpecModifier, {F::value("remat_policies", V::kMapping, Mapping{})});
  add(kDtypeModifier, {F::value("dtype", V::kText, "f32"), F::value("params", V::kMapping, Mapping{})});
  add(kMeshRule, {F::required("instance_type", V::kText), F::children("modifiers")});
  add(kMeshRuleSet, {F::children("rules")});
}

inline ConfigNode modifier_to_config(const ConfigModifier& m, const Registry& reg = Registry::global()) {
  return std::visit(
      [&](const auto& mod) -> ConfigNode {
        using T = std::decay_t<decltype(mod)>;
        if constexpr (std::is_same_v<T, MeshShapeMod>) {
          Sequence shape, names;
          for (auto s : mod.shape) shape.emplace_back(s);
          for (const auto& n : mod.axis_names) names.emplace_back(n);
          return reg.default_config(kMeshShapeModifier).with("mesh_shape", shape).with("mesh_axis_names", names);
        } else if constexpr (std::is_same_v<T, RematSpecMod>) {
          Mapping policies;
          for (const auto& [pattern, rules] : mod.policies) policies.insert_or_assign(pattern, remat_rules_to_config(rules));
          return reg.default_config(kRematSpecModifier).with("remat_policies", policies);
        } else {
          return reg.default_config(kDtypeModifier).with("dtype", mod.dtype).with("params", mod.params);
        }
      },
      m);
}

inline ConfigModifier modifier_from_config(const ConfigNode& node) {
  if (node.kind() == kMeshShapeModifier) {
    MeshShapeMod m;
    for (const auto& s : node.get("mesh_shape").as_sequence()) m.shape.push_back(s.as_int());
    for (const auto& n : node.get("mesh_axis_names").as_sequence()) m.axis_names.push_back(n.as_text());
    if (m.shape.size() != m.axis_names.size())
      throw Error(ErrorCode::kInvalidArgument, "mesh_shape", "shape and axis names differ in length");
    return m;
  }
  if (node.kind() == kRematSpecModifier) {
    RematSpecMod m;
    for (const auto& [pattern, rules] : node.get("remat_policies").as_mapping().entries)
      m.policies.emplace_back(pattern, parse_remat_rules(rules));
    return m;
  }
  if (node.kind() == kDtypeModifier) {
    const std::string& dtype = node.get("dtype").as_text();
    (void)layers::dtype_bytes(dtype);
    return DtypeMod{dtype, node.get("params").as_mapping()};
  }
  throw Error(ErrorCode::kUnknownKind, node.kind(), "not a config modifier");
}

struct ApplyOptions {
  /// When false, a remat pattern matching no module becomes a warning.
  bool no_match_is_error = true;
  std::vector<std::string>* warnings = nullptr;
};

namespace detail {

/// Every remat tag name declared in the config subtree rooted at `node`.
inline std::set<std::string> subtree_tag_names(const ConfigNode& node, const Registry& reg) {
  std::set<std::string> tags;
  visit(node, [&](const std::string&, const ConfigNode& n) {
    if (auto layer = layer_for_kind(n.kind(), reg)) {
      for (auto& t : layer->tag_names(n)) tags.insert(std::move(t));
    }
    return VisitResult::kContinue;
  });
  return tags;
}

inline ConfigNode apply_remat(const ConfigNode& cfg, const RematSpecMod& mod, const ApplyOptions& opts,
                              const Registry& reg) {
  ConfigNode out = cfg;
  for (const auto& [pattern, rules] : mod.policies) {
    std::vector<std::pair<std::string, ConfigNode>> matches;
    visit(out, [&](const std::string& path, const ConfigNode& n) {
      if (!path.empty() && glob_match(pattern, strip_indices(path)) && reg.schema(n.kind()).field("remat_policy"))
        matches.emplace_back(path, n);
      return VisitResult::kContinue;
    });
    if (matches.empty()) {
      if (opts.no_match_is_error) throw Error(ErrorCode::kNoMatch, pattern, "remat pattern matches no module");
      if (opts.warnings) opts.warnings->push_back("E_NO_MATCH(" + pattern + ")");
      continue;
    }
    for (const auto& [path, node] : matches) {
      const auto tags = subtree_tag_names(node, reg);
      for (const auto& r : rules) {
        const bool found = has_glob(r.tag) ? true : tags.count(r.tag) > 0;
        if (!found) throw Error(ErrorCode::kUnknownTag, join_path(path, r.tag), "no such remat tag");
      }
      out = set(out, join_path(path, "remat_policy"), remat_rules_to_config(rules), reg);
    }
  }
  return out;
}

inline ConfigNode apply_dtype(const ConfigNode& cfg, const DtypeMod& mod, const Registry& reg) {
  std::vector<std::string> paths;
  visit(cfg, [&](const std::string& path, const ConfigNode& n) {
    if (!path.empty() && layer_for_kind(n.kind(), reg) && n.has("dtype")) paths.push_back(path);
    return VisitResult::kContinue;
  });
  ConfigNode out = cfg;
  for (const auto& p : paths) out = set(out, join_path(p, "dtype"), mod.dtype, reg);
  if (out.has("dtype_params")) out = set(out, "dtype_params", mod.params, reg);
  return out;
}

}  // namespace detail

/// Pure rewrite of a trainer config by one modifier.
inline ConfigNode apply_modifier(const ConfigNode& trainer_cfg, const ConfigModifier& m, const ApplyOptions& opts = {},
                                 const Registry& reg = Registry::global()) {
  return std::visit(
      [&](const auto& mod) -> ConfigNode {
        using T = std::decay_t<decltype(mod)>;
        if constexpr (std::is_same_v<T, MeshShapeMod>) {
          Sequence shape, names;
          for (auto s : mod.shape) shape.emplace_back(s);
          for (const auto& n : mod.axis_names) names.emplace_back(n);
          return set(set(trainer_cfg, "mesh_shape", shape, reg), "mesh_axis_names", names, reg);
        } else if constexpr (std::is_same_v<T, RematSpecMod>) {
          return detail::apply_remat(trainer_cfg, mod, opts, reg);
        } else {
          return detail::apply_dtype(trainer_cfg, mod, reg);
        }
      },
      m);
}

/// Left to right; later modifiers win on conflict.
inline ConfigNode apply_modifiers(const ConfigNode& trainer_cfg, const std::vector<ConfigModifier>& mods,
                                  const ApplyOptions& opts = {}, const Registry& reg = Registry::global()) {
  ConfigNode out = trainer_cfg;
  for (const auto& m : mods) out = apply_modifier(out, m, opts, reg);
  return out;
}

// ---------------------------------------------------------------------------
// Mesh rules
// ---------------------------------------------------------------------------

struct MeshRule {
  std::string instance_type;
  std::vector<ConfigModifier> modifiers;
};

inline ConfigNode mesh_rule_to_config(const MeshRule& rule, const Registry& reg = Registry::global()) {
  Sequence mods;
  for (const auto& m : rule.modifiers) mods.emplace_back(modifier_to_config(m, reg));
  return reg.default_config(kMeshRule).with("instance_type", rule.instance_type).with("modifiers", mods);
}

inline MeshRule mesh_rule_from_config(const ConfigNode& node) {
  MeshRule rule{node.get("instance_type").as_text(), {}};
  if (rule.instance_type.empty()) throw Error(ErrorCode::kInvalidArgument, "instance_type", "empty pattern");
  for (const auto& m : node.get("modifiers").as_sequence()) rule.modifiers.push_back(modifier_from_config(m.as_node()));
  return rule;
}

inline std::vector<MeshRule> mesh_rules_from_config(const ConfigValue& list) {
  std::vector<MeshRule> out;
  for (const auto& r : list.as_sequence()) out.push_back(mesh_rule_from_config(r.as_node()));
  return out;
}

inline Sequence mesh_rules_to_config(const std::vector<MeshRule>& rules, const Registry& reg = Registry::global()) {
  Sequence out;
  for (const auto& r : rules) out.emplace_back(mesh_rule_to_config(r, reg));
  return out;
}

/// Modifiers of the first rule whose pattern matches; empty when none does.
inline std::vector<ConfigModifier> select_mesh_rule(const std::vector<MeshRule>& rules, std::string_view instance_type) {
  for (const auto& r : rules)
    if (glob_match(r.instance_type, instance_type)) return r.modifiers;
  return {};
}

/// TPU v5e: FSDP within a 256-chip slice, data parallel across slices, dot
/// outputs offloaded, int8. H100: 8-way tensor parallel within a node, FSDP
/// across nodes, QKVO saved, fp8 with an amax history of 128.
inline std::vector<MeshRule> default_mesh_rules() {
  const std::string layer_path = "model.decoder.transformer.layer";
  Mapping fp8;
  fp8.insert_or_assign("fp8_amax_history_length", 128);
  return {
      {"tpu-v5e-256-*",
       {mesh({{"data", -1}, {"fsdp", 256}}), RematSpecMod{{{layer_path, named_remat_policy("offload_dots")}}},
        DtypeMod{"int8", {}}}},
      {"gpu-H100-*",
       {mesh({{"fsdp", -1}, {"model", 8}}), RematSpecMod{{{layer_path, named_remat_policy("save_qkvoflash")}}},
        DtypeMod{"fp8", fp8}}},
  };
}

// ---------------------------------------------------------------------------
// Device catalog
// ---------------------------------------------------------------------------

struct DeviceType {
  std::string instance_type;
  std::int64_t devices = 0;
  double hbm_bytes = 0;
  double peak_flops = 0;
  double interconnect_bps = 0;
  double hostlink_bps = 0;
};

struct DeviceCatalog {
  std::vector<DeviceType> entries;

  const DeviceType& find(std::string_view instance_type) const {
    for (const auto& e : entries)
      if (e.instance_type == instance_type) return e;
    throw Error(ErrorCode::kUnknownInstance, std::string(instance_type));
  }
};

/// Lines of "instance_type devices hbm_bytes flops interconnect_Bps hostlink_Bps";
/// '#' starts a comment.
inline DeviceCatalog parse_catalog(std::string_view text) {
  DeviceCatalog cat;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    DeviceType d;
    if (!(ls >> d.instance_type)) continue;
    if (!(ls >> d.devices >> d.hbm_bytes >> d.peak_flops >> d.interconnect_bps >> d.hostlink_bps))
      throw Error(ErrorCode::kInvalidArgument, "catalog:" + std::to_string(lineno), "expected 6 columns");
    if (d.devices <= 0 || d.hbm_bytes <= 0 || d.peak_flops <= 0 || d.interconnect_bps <= 0 || d.hostlink_bps <= 0)
      throw Error(ErrorCode::kInvalidArgument, "catalog:" + std::to_string(lineno), "values must be positive");
    cat.entries.push_back(d);
  }
  return cat;
}

inline DeviceCatalog load_catalog(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, file, "cannot open catalog");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_catalog(buf.str());
}

inline constexpr std::string_view kBuiltinCatalog = R"(# instance_type devices hbm_bytes flops interconnect_Bps hostlink_Bps
tpu-v5e-256-4 1024 16e9 1.97e14 1.6e11 2.5e10
gpu-H100-8 64 80e9 9.89e14 4.5e11 6.4e10
desk-cpu-1 1 8e9 1e11 1e10 1e10
tiny-hbm-8 8 1e9 1e12 1e10 1e10
)";

inline DeviceCatalog builtin_catalog() { return parse_catalog(kBuiltinCatalog); }

// ---------------------------------------------------------------------------
// Trainer mesh
// ---------------------------------------------------------------------------

/// The trainer's mesh over `devices`. An empty mesh_shape is one data axis.
inline Mesh trainer_mesh(const ConfigNode& trainer_cfg, std::int64_t devices) {
  std::vector<std::int64_t> shape;
  std::vector<std::string> names;
  for (const auto& s : trainer_cfg.get("mesh_shape").as_sequence()) shape.push_back(s.as_int());
  for (const auto& n : trainer_cfg.get("mesh_axis_names").as_sequence()) names.push_back(n.as_text());
  if (shape.empty() && names.empty()) return resolve_mesh({-1}, {"data"}, devices);
  return resolve_mesh(std::move(shape), std::move(names), devices);
}

/// Writes the resolved mesh back into the config when it holds a wildcard.
inline ConfigNode resolve_trainer_mesh(const ConfigNode& trainer_cfg, std::int64_t devices,
                                       const Registry& reg = Registry::global()) {
  const auto& shape = trainer_cfg.get("mesh_shape").as_sequence();
  const bool wildcard = std::any_of(shape.begin(), shape.end(), [](const ConfigValue& v) { return v.as_int() == -1; });
  if (!wildcard) {
    if (!shape.empty()) (void)trainer_mesh(trainer_cfg, devices);
    return trainer_cfg;
  }
  const Mesh m = trainer_mesh(trainer_cfg, devices);
  Sequence resolved;
  for (auto s : m.shape) resolved.emplace_back(s);
  return set(trainer_cfg, "mesh_shape", resolved, reg);
}

// ---------------------------------------------------------------------------
// AOT analysis
// ---------------------------------------------------------------------------

struct AotReport {
  std::string instance_type;
  Mesh mesh;
  // Per device.
  std::int64_t param_bytes = 0;
  std::int64_t optimizer_bytes = 0;
  std::int64_t activation_bytes = 0;
  std::int64_t host_bytes = 0;
  std::int64_t hbm_total_bytes = 0;
  double hbm_capacity = 0;
  // Global, before dividing over batch-parallel axes.
  std::int64_t saved_activation_bytes_global = 0;
  std::int64_t offloaded_activation_bytes_global = 0;
  std::int64_t param_count = 0;
  // Per step.
  double model_flops = 0;
  double recompute_flops = 0;
  double total_flops = 0;
  double comm_bytes = 0;
  double offload_seconds = 0;
  double step_seconds = 0;
  double mfu = 0;
  bool oom = false;

  nlohmann::json to_json() const {
    return {{"instance_type", instance_type},
            {"mesh_axis_names", mesh.axis_names},
            {"mesh_shape", mesh.shape},
            {"param_bytes", param_bytes},
            {"optimizer_bytes", optimizer_bytes},
            {"activation_bytes", activation_bytes},
            {"host_bytes", host_bytes},
            {"hbm_total_bytes", hbm_total_bytes},
            {"hbm_capacity", hbm_capacity},
            {"param_count", param_count},
            {"model_flops", model_flops},
            {"recompute_flops", recompute_flops},
            {"total_flops", total_flops},
            {"comm_bytes", comm_bytes},
            {"offload_seconds", offload_seconds},
            {"step_seconds", step_seconds},
            {"mfu", mfu},
            {"oom", oom}};
  }
};

/// Axes that split the batch.
inline std::int64_t batch_shards(const Mesh& m) { return m.axis_size("data") * m.axis_size("fsdp"); }

namespace detail {

/// Drops axes the mesh does not have; such dimensions count as replicated.
inline PartitionSpec project_spec(const PartitionSpec& spec, const Mesh& mesh) {
  PartitionSpec out = spec;
  for (auto& d : out.dims)
    if (d && !mesh.has_axis(*d)) d.reset();
  return out;
}

struct AotWalk {
  const Mesh& mesh;
  const Workload& work;
  AotReport& r;

  void run(const ModuleTree& node, std::vector<RematRule> rules) {
    if (node.config.has("remat_policy")) {
      auto own = parse_remat_rules(node.config.get("remat_policy"));
      rules.insert(rules.end(), own.begin(), own.end());
    }
    for (const auto& p : node.params()) {
      const std::int64_t bytes_per = layers::dtype_bytes(p.dtype);
      const Shape local = shard_shape(p.shape, project_spec(p.partition, mesh), mesh);
      r.param_bytes += num_elements(local) * bytes_per;
      r.param_count += num_elements(p.shape);
      if (p.partition.uses_axis("fsdp") && mesh.has_axis("fsdp"))
        r.comm_bytes += 2.0 * static_cast<double>(num_elements(p.shape) * bytes_per);
    }
    r.model_flops += 3.0 * static_cast<double>(node.behavior->own_flops(node, work));
    for (const auto& tag : node.behavior->remat_tags(node, work)) {
      switch (remat_decide(rules, tag.name)) {
        case RematDecision::kSave:
          r.saved_activation_bytes_global += tag.activation_bytes;
          break;
        case RematDecision::kRecompute:
          r.recompute_flops += static_cast<double>(tag.recompute_flops);
          break;
        case RematDecision::kOffload:
          r.offloaded_activation_bytes_global += tag.activation_bytes;
          break;
      }
    }
    for (const auto& c : node.children) run(c, rules);
  }
};

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace detail

/// Estimates per-device memory, FLOPs and step time of a trainer config on
/// an instance type. Builds the module tree only; no parameter is allocated.
inline AotReport aot_analyze(const ConfigNode& trainer_cfg, std::string_view instance_type, const DeviceCatalog& catalog,
                             std::int64_t batch, std::int64_t seq_len, const Registry& reg = Registry::global()) {
  if (batch <= 0 || seq_len <= 0) throw Error(ErrorCode::kInvalidArgument, "workload", "batch and seq_len must be positive");
  const DeviceType& dev = catalog.find(instance_type);
  const ModuleTree tree = instantiate(trainer_cfg, reg);

  AotReport r;
  r.instance_type = std::string(instance_type);
  r.mesh = trainer_mesh(trainer_cfg, dev.devices);
  r.hbm_capacity = dev.hbm_bytes;
  const Workload work{batch, seq_len, layers::dtype_bytes(trainer_cfg.get("activation_dtype").as_text())};

  detail::AotWalk{r.mesh, work, r}.run(tree, {});

  const std::int64_t shards = batch_shards(r.mesh);
  r.activation_bytes = detail::ceil_div(r.saved_activation_bytes_global, shards);
  const std::int64_t offloaded = detail::ceil_div(r.offloaded_activation_bytes_global, shards);
  r.optimizer_bytes = trainer_cfg.get("optimizer_state_multiplier").as_int() * r.param_bytes;
  r.host_bytes = offloaded;
  double host_transfer = static_cast<double>(offloaded);
  if (trainer_cfg.get("offload_optimizer").as_bool()) {
    r.host_bytes += r.optimizer_bytes;
    host_transfer += static_cast<double>(r.optimizer_bytes);
    r.hbm_total_bytes = r.param_bytes + r.activation_bytes;
  } else {
    r.hbm_total_bytes = r.param_bytes + r.optimizer_bytes + r.activation_bytes;
  }

  r.total_flops = r.model_flops + r.recompute_flops;
  const double devices = static_cast<double>(dev.devices);
  const double compute_s = r.total_flops / devices / dev.peak_flops;
  const double comm_s = r.comm_bytes / dev.interconnect_bps;
  r.offload_seconds = host_transfer / dev.hostlink_bps;
  r.step_seconds = std::max(compute_s, comm_s) + r.offload_seconds;
  r.mfu = r.step_seconds > 0 ? (r.model_flops / devices) / (r.step_seconds * dev.peak_flops) : 0.0;
  r.oom = static_cast<double>(r.hbm_total_bytes) > dev.hbm_bytes;
  return r;
}

}  // namespace composer
