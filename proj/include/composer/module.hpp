// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "composer/config.hpp"
#include "composer/golden.hpp"
#include "composer/rng.hpp"
#include "composer/sharding.hpp"
#include "composer/tensor.hpp"

namespace composer {

class ModuleTree;

// ---------------------------------------------------------------------------
// Layer behaviors
// ---------------------------------------------------------------------------

enum class ParamInit { kUniformFanIn, kZeros, kOnes };

struct ParamSpec {
  std::string name;
  Shape shape;
  PartitionSpec partition;
  ParamInit init = ParamInit::kUniformFanIn;
  std::int64_t fan_in = 1;
  std::string dtype = "f32";
};

/// Batch geometry for analysis. `activation_bytes` is bytes per element.
struct Workload {
  std::int64_t batch = 1;
  std::int64_t seq_len = 1;
  std::int64_t activation_bytes = 4;

  std::int64_t tokens() const { return batch * seq_len; }
};

/// A named activation checkpoint inside a layer.
struct RematTag {
  std::string name;
  std::int64_t activation_bytes = 0;
  std::int64_t recompute_flops = 0;
};

struct ChildConfig {
  std::string name;
  ConfigNode config;
};

/// Behavior of one module kind. Implementations are stateless; everything a
/// call needs comes from the ModuleTree node and the ambient context.
class Layer {
 public:
  virtual ~Layer() = default;

  /// Checks the node's resolved fields before children are built.
  virtual void validate(const ConfigNode& cfg, const std::string& path) const {
    (void)cfg;
    (void)path;
  }

  /// Child configs to instantiate, after propagating parent fields into them.
  /// Default: every module-kind sub-config field, unchanged.
  virtual std::vector<ChildConfig> children(const ConfigNode& cfg, const std::string& path) const;

  virtual std::vector<ParamSpec> params(const ModuleTree& self) const {
    (void)self;
    return {};
  }

  /// Remat tag names declared by a (possibly partial) config.
  virtual std::vector<std::string> tag_names(const ConfigNode& cfg) const {
    (void)cfg;
    return {};
  }

  virtual std::vector<RematTag> remat_tags(const ModuleTree& self, const Workload& w) const {
    (void)self;
    (void)w;
    return {};
  }

  /// Forward FLOPs of this module excluding its children.
  virtual std::int64_t own_flops(const ModuleTree& self, const Workload& w) const {
    (void)self;
    (void)w;
    return 0;
  }

  virtual Tensor forward(const ModuleTree& self, const Tensor& x) const = 0;
};

/// Factory id -> behavior.
class LayerRegistry {
 public:
  static LayerRegistry& global() {
    static LayerRegistry instance;
    return instance;
  }

  void add(std::string factory_id, std::shared_ptr<const Layer> layer) {
    std::unique_lock lock(mu_);
    if (layers_.count(factory_id)) throw Error(ErrorCode::kDuplicateKind, factory_id);
    layers_.emplace(std::move(factory_id), std::move(layer));
  }

  std::shared_ptr<const Layer> find(std::string_view factory_id) const {
    std::shared_lock lock(mu_);
    auto it = layers_.find(std::string(factory_id));
    return it == layers_.end() ? nullptr : it->second;
  }

  std::string describe() const {
    std::shared_lock lock(mu_);
    std::string out;
    for (const auto& [id, layer] : layers_) out += "behavior " + id + " " + typeid(*layer).name() + "\n";
    return out;
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const Layer>> layers_;
};

/// Behavior for a component kind, or null when the kind is not a module
/// (factory nodes, modifiers).
inline std::shared_ptr<const Layer> layer_for_kind(std::string_view kind,
                                                   const Registry& reg = Registry::global(),
                                                   const LayerRegistry& layers = LayerRegistry::global()) {
  if (!reg.has_kind(kind)) return nullptr;
  return layers.find(reg.schema(kind).factory_id);
}

inline bool is_module_kind(std::string_view kind) { return layer_for_kind(kind) != nullptr; }

inline std::vector<ChildConfig> Layer::children(const ConfigNode& cfg, const std::string& path) const {
  (void)path;
  std::vector<ChildConfig> out;
  for (const auto& [name, value] : cfg.fields()) {
    if (value.is_node() && is_module_kind(value.as_node().kind())) {
      out.push_back({name, value.as_node()});
    } else if (value.is_sequence()) {
      const auto& seq = value.as_sequence();
      for (std::size_t i = 0; i < seq.size(); ++i)
        if (seq[i].is_node() && is_module_kind(seq[i].as_node().kind()))
          out.push_back({index_path(name, i), seq[i].as_node()});
    }
  }
  return out;
}

/// Sets `field` on a child config, as a parent does during instantiation.
inline ConfigNode propagate(const ConfigNode& child, std::string_view field, ConfigValue value) {
  return set(child, field, std::move(value));
}

// ---------------------------------------------------------------------------
// ModuleTree
// ---------------------------------------------------------------------------

/// An instantiated module. `config` holds the node's own resolved fields;
/// sub-configs live on as `children`. Holds no reference to any context.
class ModuleTree {
 public:
  std::string kind;
  std::string name;
  std::string path;
  std::string factory_id;
  ConfigNode config;
  std::vector<ModuleTree> children;
  std::shared_ptr<const Layer> behavior;

  const ModuleTree* find_child(std::string_view child_name) const {
    for (const auto& c : children)
      if (c.name == child_name) return &c;
    return nullptr;
  }
  const ModuleTree& child(std::string_view child_name) const {
    if (const ModuleTree* c = find_child(child_name)) return *c;
    throw Error(ErrorCode::kBadPath, join_path(path, child_name), "no such child");
  }

  std::int64_t int_field(std::string_view f) const { return config.get(f).as_int(); }
  double float_field(std::string_view f) const { return config.get(f).as_double(); }
  bool bool_field(std::string_view f) const { return config.get(f).as_bool(); }
  const std::string& text_field(std::string_view f) const { return config.get(f).as_text(); }

  std::vector<ParamSpec> params() const { return behavior->params(*this); }

  /// Number of modules in this subtree, including this one.
  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& c : children) n += c.size();
    return n;
  }
};

inline nlohmann::json to_json(const ModuleTree& tree) {
  nlohmann::json j;
  j["kind"] = tree.kind;
  j["name"] = tree.name;
  j["path"] = tree.path;
  j["factory"] = tree.factory_id;
  j["config"] = serialize_golden(tree.config);
  j["children"] = nlohmann::json::array();
  for (const auto& c : tree.children) j["children"].push_back(to_json(c));
  return j;
}

namespace detail {

inline ModuleTree instantiate_node(const ConfigNode& cfg, const std::string& name,
                                   const std::string& path, const Registry& reg) {
  const ComponentSchema schema = reg.schema(cfg.kind());
  auto behavior = layer_for_kind(cfg.kind(), reg);
  if (!behavior) throw Error(ErrorCode::kUnknownKind, cfg.kind(), "not a module kind");

  ConfigNode node = cfg;
  for (const auto& f : schema.fields) {
    const ConfigValue& v = node.get(f.name);
    const std::string where = join_path(path, f.name);
    if (v.is_function()) {
      ConfigValue resolved;
      try {
        resolved = reg.resolve_function(v.as_function(), node);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kUnknownFunction) throw;
        throw Error(ErrorCode::kResolve, where, e.what());
      }
      if (resolved.is_required() || resolved.is_function()) throw Error(ErrorCode::kResolve, where);
      node = node.with(f.name, coerce_field_value(f, std::move(resolved), where));
    }
  }
  for (const auto& f : schema.fields) {
    const ConfigValue& v = node.get(f.name);
    const std::string where = join_path(path, f.name);
    if (v.is_required()) throw Error(ErrorCode::kUnset, where);
    if (v.is_node() && v.as_node().kind().starts_with("fn:"))
      (void)instantiate_factory(v.as_node(), where, reg);
  }
  behavior->validate(node, path);

  ModuleTree tree;
  tree.kind = cfg.kind();
  tree.name = name;
  tree.path = path;
  tree.factory_id = schema.factory_id;
  tree.behavior = behavior;

  std::vector<ChildConfig> kids = behavior->children(node, path);
  std::vector<ConfigNode::Field> own;
  for (const auto& [fname, value] : node.fields()) {
    const FieldSpec* f = schema.field(fname);
    if (f->kind == ValueKind::kSubConfig || f->kind == ValueKind::kSubConfigList) continue;
    own.emplace_back(fname, value);
  }
  tree.config = ConfigNode(cfg.kind(), std::move(own));

  std::set<std::string> names;
  for (auto& kid : kids) {
    if (!names.insert(kid.name).second)
      throw Error(ErrorCode::kInvalidArgument, join_path(path, kid.name), "duplicate child name");
    tree.children.push_back(instantiate_node(kid.config, kid.name, join_path(path, kid.name), reg));
  }
  return tree;
}

}  // namespace detail

/// Materializes a config tree into modules. Parents propagate fields into
/// children first; each node then resolves its FunctionSpecs and must have
/// no Required left.
inline ModuleTree instantiate(const ConfigNode& cfg, const Registry& reg = Registry::global()) {
  return detail::instantiate_node(cfg, "", "", reg);
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// Parameters nested by module path.
struct StateTree {
  std::map<std::string, Tensor> params;
  std::map<std::string, StateTree> children;

  const Tensor& param(std::string_view name) const {
    auto it = params.find(std::string(name));
    if (it == params.end()) throw Error(ErrorCode::kBadPath, std::string(name), "no such param");
    return it->second;
  }
  const StateTree& child(std::string_view name) const {
    auto it = children.find(std::string(name));
    if (it == children.end()) throw Error(ErrorCode::kBadPath, std::string(name), "no such child state");
    return it->second;
  }
  StateTree& mutable_child(std::string_view path);

  friend bool operator==(const StateTree&, const StateTree&) = default;
};

/// Splits a module path into child names: "a.layer[0].b" -> a, layer[0], b.
inline std::vector<std::string> module_path_names(std::string_view path) {
  std::vector<std::string> out;
  if (path.empty()) return out;
  for (const auto& seg : parse_path(path)) {
    if (seg.type == PathSegment::Type::kField) {
      out.push_back(seg.name);
    } else if (seg.type == PathSegment::Type::kIndex && !out.empty()) {
      out.back() = index_path(out.back(), seg.index);
    } else {
      throw Error(ErrorCode::kBadPath, std::string(path));
    }
  }
  return out;
}

inline StateTree& StateTree::mutable_child(std::string_view path) {
  StateTree* cur = this;
  for (const auto& n : module_path_names(path)) {
    auto it = cur->children.find(n);
    if (it == cur->children.end()) throw Error(ErrorCode::kBadPath, std::string(path));
    cur = &it->second;
  }
  return *cur;
}

inline std::string param_key_name(std::string_view param) { return "param:" + std::string(param); }

namespace detail {

inline void init_state_node(const ModuleTree& tree, const RngKey& key, StateTree& out) {
  for (const auto& p : tree.params()) {
    Tensor t(p.shape);
    switch (p.init) {
      case ParamInit::kZeros: break;
      case ParamInit::kOnes:
        for (auto& v : t.data()) v = 1.0;
        break;
      case ParamInit::kUniformFanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
        UniformStream stream(child_key(key, param_key_name(p.name), 0));
        for (auto& v : t.data()) v = (2.0 * stream.next() - 1.0) * bound;
        break;
      }
    }
    out.params.emplace(p.name, std::move(t));
  }
  for (const auto& c : tree.children)
    init_state_node(c, child_key(key, c.name, 0), out.children[c.name]);
}

}  // namespace detail

/// Initializes every declared param from keys derived along the module tree:
/// module key = child_key(parent key, child name, 0); param key =
/// child_key(module key, "param:<name>", 0). Weights ~ U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)); biases zero; norm scales one.
inline StateTree init_state(const ModuleTree& tree, const RngKey& root) {
  StateTree out;
  detail::init_state_node(tree, root, out);
  return out;
}

/// Checks that `state` carries every declared param of `tree` at its shape.
inline void check_state(const ModuleTree& tree, const StateTree& state) {
  for (const auto& p : tree.params()) {
    auto it = state.params.find(p.name);
    if (it == state.params.end())
      throw Error(ErrorCode::kBadPath, tree.path + "/" + p.name, "missing param");
    if (it->second.shape() != p.shape)
      throw Error(ErrorCode::kShape, tree.path + "/" + p.name,
                  "expected " + shape_string(p.shape) + ", got " + shape_string(it->second.shape()));
  }
  for (const auto& c : tree.children) {
    auto it = state.children.find(c.name);
    if (it == state.children.end()) throw Error(ErrorCode::kBadPath, c.path, "missing child state");
    check_state(c, it->second);
  }
}

// ---------------------------------------------------------------------------
// Invocation
// ---------------------------------------------------------------------------

using SummaryValue = std::variant<double, Tensor>;

/// Side outputs gathered during one invocation, keyed by module path.
struct OutputCollection {
  std::map<std::string, std::vector<std::pair<std::string, SummaryValue>>> summaries;
  std::map<std::string, Tensor> module_outputs;
  std::map<std::string, Tensor> state_updates;

  /// Flattened "<module path>/<key>" names; root-level keys have no prefix.
  std::vector<std::string> summary_keys() const {
    std::vector<std::string> out;
    for (const auto& [path, entries] : summaries)
      for (const auto& [k, v] : entries) out.push_back(path.empty() ? k : path + "/" + k);
    return out;
  }

  void merge_from(OutputCollection&& child) {
    for (auto& [path, entries] : child.summaries) {
      auto& dst = summaries[path];
      for (auto& e : entries) dst.push_back(std::move(e));
    }
    for (auto& [k, v] : child.module_outputs) module_outputs.insert_or_assign(k, std::move(v));
    for (auto& [k, v] : child.state_updates) state_updates.insert_or_assign(k, std::move(v));
  }

  friend bool operator==(const OutputCollection&, const OutputCollection&) = default;
};

/// Ambient per-call record. Contexts point at modules, never the reverse.
class InvocationContext {
 public:
  InvocationContext(const ModuleTree& module, const StateTree& state, RngKey key,
                    InvocationContext* parent)
      : module_(&module), state_(&state), key_(key), parent_(parent) {}

  const ModuleTree& module() const { return *module_; }
  const std::string& path() const { return module_->path; }
  const StateTree& state() const { return *state_; }
  const RngKey& key() const { return key_; }
  InvocationContext* parent() const { return parent_; }
  OutputCollection& outputs() { return outputs_; }

  std::uint64_t next_call_index(const std::string& child) { return calls_[child]++; }

 private:
  const ModuleTree* module_;
  const StateTree* state_;
  RngKey key_;
  InvocationContext* parent_;
  OutputCollection outputs_;
  std::map<std::string, std::uint64_t> calls_;
};

namespace detail {

inline std::vector<InvocationContext*>& context_stack() {
  thread_local std::vector<InvocationContext*> stack;
  return stack;
}

/// Pushes on construction, pops on destruction.
class ContextScope {
 public:
  explicit ContextScope(InvocationContext& ctx) { context_stack().push_back(&ctx); }
  ~ContextScope() { context_stack().pop_back(); }
  ContextScope(const ContextScope&) = delete;
  ContextScope& operator=(const ContextScope&) = delete;
};

}  // namespace detail

inline bool has_context() { return !detail::context_stack().empty(); }

inline InvocationContext& current_context() {
  auto& stack = detail::context_stack();
  if (stack.empty()) throw Error(ErrorCode::kNoContext, "", "no active invocation context");
  return *stack.back();
}

/// Ambient context paths from the root to the current module.
inline std::vector<std::string> context_path_chain() {
  std::vector<std::string> out;
  for (auto* c : detail::context_stack()) out.push_back(c->path());
  return out;
}

inline std::size_t context_depth() { return detail::context_stack().size(); }

/// Param of the current module.
inline const Tensor& param(std::string_view name) { return current_context().state().param(name); }

inline bool has_param(std::string_view name) {
  return current_context().state().params.count(std::string(name)) > 0;
}

inline void add_summary(std::string_view key, SummaryValue value) {
  auto& ctx = current_context();
  ctx.outputs().summaries[ctx.path()].emplace_back(std::string(key), std::move(value));
}

inline void add_module_output(std::string_view key, Tensor value) {
  auto& ctx = current_context();
  ctx.outputs().module_outputs.insert_or_assign(ctx.path().empty() ? std::string(key)
                                                                   : ctx.path() + "/" + std::string(key),
                                                std::move(value));
}

/// Records a new value for one of the current module's own params.
/// `param_path` is "<module path>/<param>".
inline void add_state_update(std::string_view param_path, Tensor value) {
  auto& ctx = current_context();
  const auto slash = param_path.rfind('/');
  const std::string module = slash == std::string_view::npos ? "" : std::string(param_path.substr(0, slash));
  const std::string name(slash == std::string_view::npos ? param_path : param_path.substr(slash + 1));
  if (module != ctx.path() || !ctx.state().params.count(name))
    throw Error(ErrorCode::kBadPath, std::string(param_path), "state update outside the current module");
  ctx.outputs().state_updates.insert_or_assign(std::string(param_path), std::move(value));
}

/// State slice of any module under the root context, by absolute module path.
inline const StateTree& get_shared_state(std::string_view path) {
  auto& stack = detail::context_stack();
  if (stack.empty()) throw Error(ErrorCode::kNoContext, std::string(path));
  const InvocationContext* root = stack.front();
  const std::vector<std::string> root_names = module_path_names(root->path());
  std::vector<std::string> names;
  try {
    names = module_path_names(path);
  } catch (const Error&) {
    throw Error(ErrorCode::kBadPath, std::string(path));
  }
  if (names.size() < root_names.size() || !std::equal(root_names.begin(), root_names.end(), names.begin()))
    throw Error(ErrorCode::kBadPath, std::string(path), "outside the invoked tree");
  const StateTree* cur = &root->state();
  for (std::size_t i = root_names.size(); i < names.size(); ++i) {
    auto it = cur->children.find(names[i]);
    if (it == cur->children.end()) throw Error(ErrorCode::kBadPath, std::string(path));
    cur = &it->second;
  }
  return *cur;
}

/// One tensor by "<module path>/<param>".
inline const Tensor& get_shared_param(std::string_view path) {
  const auto slash = path.rfind('/');
  if (slash == std::string_view::npos) throw Error(ErrorCode::kBadPath, std::string(path), "expected <module>/<param>");
  const StateTree& slice = get_shared_state(path.substr(0, slash));
  auto it = slice.params.find(std::string(path.substr(slash + 1)));
  if (it == slice.params.end()) throw Error(ErrorCode::kBadPath, std::string(path));
  return it->second;
}

/// Key of the current context.
inline const RngKey& current_key() { return current_context().key(); }

/// Invokes a child of the current module: pushes its context with a key split
/// from the parent's (by child name and per-child call index), runs it, and
/// folds its outputs into the parent's collection.
inline Tensor call_child(std::string_view name, const Tensor& x) {
  auto& parent = current_context();
  const ModuleTree& child = parent.module().child(name);
  auto it = parent.state().children.find(std::string(name));
  if (it == parent.state().children.end()) throw Error(ErrorCode::kBadPath, child.path, "missing child state");
  const std::uint64_t index = parent.next_call_index(child.name);
  InvocationContext ctx(child, it->second, child_key(parent.key(), child.name, index), &parent);
  Tensor y;
  {
    detail::ContextScope scope(ctx);
    y = child.behavior->forward(child, x);
  }
  parent.outputs().merge_from(std::move(ctx.outputs()));
  return y;
}

struct InvokeResult {
  Tensor output;
  OutputCollection collection;
};

/// Runs `tree` on `input` as a pure function of its arguments.
inline InvokeResult invoke(const ModuleTree& tree, const StateTree& state, const RngKey& key,
                           const Tensor& input) {
  check_state(tree, state);
  InvocationContext ctx(tree, state, key, has_context() ? &current_context() : nullptr);
  InvokeResult result;
  {
    detail::ContextScope scope(ctx);
    result.output = tree.behavior->forward(tree, input);
  }
  result.collection = std::move(ctx.outputs());
  return result;
}

}  // namespace composer
