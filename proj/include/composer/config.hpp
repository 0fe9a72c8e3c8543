// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <any>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "composer/config_value.hpp"
#include "composer/error.hpp"

namespace composer {

// ---------------------------------------------------------------------------
// Schemas
// ---------------------------------------------------------------------------

/// Declared shape of one config field. Sub-config fields name the kind they
/// default to; `default_kind` empty means the field defaults to Required.
struct FieldSpec {
  std::string name;
  ValueKind kind = ValueKind::kInt;
  ConfigValue default_value;
  std::string default_kind;

  static FieldSpec required(std::string name, ValueKind kind) {
    return FieldSpec{std::move(name), kind, Required{}, {}};
  }
  static FieldSpec value(std::string name, ValueKind kind, ConfigValue def) {
    return FieldSpec{std::move(name), kind, std::move(def), {}};
  }
  static FieldSpec child(std::string name, std::string default_kind) {
    return FieldSpec{std::move(name), ValueKind::kSubConfig, Required{},
                     std::move(default_kind)};
  }
  static FieldSpec children(std::string name) {
    return FieldSpec{std::move(name), ValueKind::kSubConfigList, Sequence{}, {}};
  }
};

struct ComponentSchema {
  std::string kind;
  std::vector<FieldSpec> fields;
  std::string factory_id;

  const FieldSpec* field(std::string_view name) const {
    for (const auto& f : fields)
      if (f.name == name) return &f;
    return nullptr;
  }
};

/// Reserved for the golden-format kind line.
inline constexpr std::string_view kKindField = "klass";

namespace detail {

inline bool contains_node(const ConfigValue& v) {
  if (v.is_node()) return true;
  if (v.is_sequence()) {
    for (const auto& item : v.as_sequence())
      if (contains_node(item)) return true;
  }
  if (v.is_mapping()) {
    for (const auto& [k, item] : v.as_mapping().entries)
      if (contains_node(item)) return true;
  }
  return false;
}

}  // namespace detail

/// Checks `value` against a declared field kind, returning the stored form.
/// Required is accepted everywhere; FunctionSpec only for numeric fields.
/// Integers widen into float fields.
inline ConfigValue coerce_field_value(const FieldSpec& field, ConfigValue value,
                                      std::string_view path) {
  auto mismatch = [&] {
    return Error(ErrorCode::kTypeMismatch, std::string(path),
                 "field expects " + std::string(value_kind_name(field.kind)) + ", got " +
                     std::string(value_kind_name(value.kind())));
  };
  if (value.is_required()) return value;
  switch (field.kind) {
    case ValueKind::kInt:
      if (value.is_int() || value.is_function()) return value;
      throw mismatch();
    case ValueKind::kFloat:
      if (value.is_float() || value.is_function()) return value;
      if (value.is_int()) return ConfigValue(value.as_double());
      throw mismatch();
    case ValueKind::kBool:
      if (value.is_bool()) return value;
      throw mismatch();
    case ValueKind::kText:
      if (value.is_text()) return value;
      throw mismatch();
    case ValueKind::kSequence:
    case ValueKind::kMapping:
      if ((field.kind == ValueKind::kSequence && !value.is_sequence()) ||
          (field.kind == ValueKind::kMapping && !value.is_mapping()))
        throw mismatch();
      if (detail::contains_node(value))
        throw Error(ErrorCode::kTypeMismatch, std::string(path),
                    "plain collections may not hold sub-configs");
      return value;
    case ValueKind::kSubConfig:
      if (value.is_node()) return value;
      throw mismatch();
    case ValueKind::kSubConfigList:
      if (!value.is_sequence()) throw mismatch();
      for (const auto& item : value.as_sequence())
        if (!item.is_node())
          throw Error(ErrorCode::kTypeMismatch, std::string(path),
                      "config list elements must be sub-configs");
      return value;
    case ValueKind::kFunction:
    case ValueKind::kRequired:
      break;
  }
  throw mismatch();
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Resolves a FunctionSpec against the node that owns it.
using FunctionResolver =
    std::function<ConfigValue(const FunctionSpec& spec, const ConfigNode& owner)>;

/// Invocation adapter for an external factory; receives fully resolved fields.
using FactoryAdapter = std::function<std::any(const std::map<std::string, ConfigValue>&)>;

inline std::string factory_kind(std::string_view factory_id) {
  return "fn:" + std::string(factory_id);
}

/// Component schemas, deferred-value functions and external factories.
/// Thread-safe; reads take a shared lock.
class Registry {
 public:
  static Registry& global() {
    static Registry instance;
    return instance;
  }

  void register_component(ComponentSchema schema) {
    std::set<std::string> seen;
    for (auto& f : schema.fields) {
      if (f.name.empty() || f.name == kKindField || f.name.find_first_of(".[]\": ") != std::string::npos)
        throw Error(ErrorCode::kInvalidArgument, schema.kind + "." + f.name, "reserved or malformed field name");
      if (!seen.insert(f.name).second)
        throw Error(ErrorCode::kInvalidArgument, schema.kind + "." + f.name, "duplicate field");
      if (f.kind == ValueKind::kSubConfig) {
        if (!f.default_value.is_required())
          throw Error(ErrorCode::kTypeMismatch, schema.kind + "." + f.name,
                      "sub-config defaults are given by default_kind");
      } else {
        f.default_value = coerce_field_value(f, f.default_value, schema.kind + "." + f.name);
      }
    }
    std::unique_lock lock(mu_);
    if (schemas_.count(schema.kind))
      throw Error(ErrorCode::kDuplicateKind, schema.kind);
    schemas_.emplace(schema.kind, std::move(schema));
  }

  bool has_kind(std::string_view kind) const {
    std::shared_lock lock(mu_);
    return schemas_.find(std::string(kind)) != schemas_.end();
  }

  ComponentSchema schema(std::string_view kind) const {
    std::shared_lock lock(mu_);
    auto it = schemas_.find(std::string(kind));
    if (it == schemas_.end()) throw Error(ErrorCode::kUnknownKind, std::string(kind));
    return it->second;
  }

  std::vector<std::string> kinds() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [k, s] : schemas_) out.push_back(k);
    return out;
  }

  ConfigNode default_config(std::string_view kind) const {
    const ComponentSchema s = schema(kind);
    std::vector<ConfigNode::Field> fields;
    fields.reserve(s.fields.size());
    for (const auto& f : s.fields) {
      if (f.kind == ValueKind::kSubConfig && !f.default_kind.empty()) {
        fields.emplace_back(f.name, default_config(f.default_kind));
      } else {
        fields.emplace_back(f.name, f.default_value);
      }
    }
    return ConfigNode(s.kind, std::move(fields));
  }

  void register_function(std::string name, FunctionResolver fn) {
    std::unique_lock lock(mu_);
    if (functions_.count(name)) throw Error(ErrorCode::kDuplicateKind, name);
    functions_.emplace(std::move(name), std::move(fn));
  }

  ConfigValue resolve_function(const FunctionSpec& spec, const ConfigNode& owner) const {
    FunctionResolver fn;
    {
      std::shared_lock lock(mu_);
      auto it = functions_.find(spec.name);
      if (it == functions_.end()) throw Error(ErrorCode::kUnknownFunction, spec.name);
      fn = it->second;
    }
    return fn(spec, owner);
  }

  bool has_function(std::string_view name) const {
    std::shared_lock lock(mu_);
    return functions_.find(std::string(name)) != functions_.end();
  }

  void register_factory(std::string id, FactoryAdapter adapter) {
    std::unique_lock lock(mu_);
    if (factories_.count(id)) throw Error(ErrorCode::kDuplicateKind, factory_kind(id));
    factories_.emplace(std::move(id), std::move(adapter));
  }

  FactoryAdapter factory(std::string_view id) const {
    std::shared_lock lock(mu_);
    auto it = factories_.find(std::string(id));
    if (it == factories_.end()) throw Error(ErrorCode::kUnknownFactory, std::string(id));
    return it->second;
  }

  /// Canonical description of every registered schema and name; feeds the
  /// module-definition digest.
  std::string describe() const {
    std::shared_lock lock(mu_);
    std::ostringstream out;
    for (const auto& [kind, s] : schemas_) {
      out << "kind " << kind << " factory " << s.factory_id << "\n";
      for (const auto& f : s.fields) {
        out << "  " << f.name << " " << value_kind_name(f.kind) << " " << f.default_kind << " "
            << value_kind_name(f.default_value.kind()) << "\n";
      }
    }
    for (const auto& [name, fn] : functions_) out << "function " << name << "\n";
    for (const auto& [name, fn] : factories_) out << "factory " << name << "\n";
    return out.str();
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, ComponentSchema> schemas_;
  std::map<std::string, FunctionResolver> functions_;
  std::map<std::string, FactoryAdapter> factories_;
};

inline void register_component(ComponentSchema schema, Registry& reg = Registry::global()) {
  reg.register_component(std::move(schema));
}

inline ConfigNode default_config(std::string_view kind,
                                 const Registry& reg = Registry::global()) {
  return reg.default_config(kind);
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

/// One step of a dotted path: `name`, `[3]` or `["key"]`.
struct PathSegment {
  enum class Type { kField, kIndex, kKey };
  Type type = Type::kField;
  std::string name;
  std::size_t index = 0;

  friend bool operator==(const PathSegment&, const PathSegment&) = default;
};

inline std::string quote_text(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

/// Parses a quoted string starting at `pos` (which must point at the opening
/// quote); advances `pos` past the closing quote.
inline std::string unquote_text(std::string_view s, std::size_t& pos) {
  if (pos >= s.size() || s[pos] != '"')
    throw Error(ErrorCode::kMalformedGolden, std::string(s), "expected quoted text");
  std::string out;
  for (++pos; pos < s.size(); ++pos) {
    char c = s[pos];
    if (c == '"') {
      ++pos;
      return out;
    }
    if (c == '\\') {
      if (++pos >= s.size()) break;
      switch (s[pos]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default:
          throw Error(ErrorCode::kMalformedGolden, std::string(s), "bad escape");
      }
    } else {
      out += c;
    }
  }
  throw Error(ErrorCode::kMalformedGolden, std::string(s), "unterminated text");
}

inline std::string join_path(std::string_view parent, std::string_view field) {
  if (parent.empty()) return std::string(field);
  return std::string(parent) + "." + std::string(field);
}

inline std::string index_path(std::string_view parent, std::size_t i) {
  return std::string(parent) + "[" + std::to_string(i) + "]";
}

inline std::string key_path(std::string_view parent, std::string_view key) {
  return std::string(parent) + "[" + quote_text(key) + "]";
}

/// Parses a dotted path. Throws E_BAD_PATH on malformed input.
inline std::vector<PathSegment> parse_path(std::string_view path) {
  std::vector<PathSegment> out;
  std::size_t i = 0;
  auto bad = [&](const char* why) { return Error(ErrorCode::kBadPath, std::string(path), why); };
  bool expect_field = true;
  while (i < path.size()) {
    char c = path[i];
    if (c == '.') {
      if (expect_field && i != 0) throw bad("empty segment");
      ++i;
      expect_field = true;
      continue;
    }
    if (c == '[') {
      ++i;
      PathSegment seg;
      if (i < path.size() && path[i] == '"') {
        seg.type = PathSegment::Type::kKey;
        try {
          seg.name = unquote_text(path, i);
        } catch (const Error&) {
          throw bad("bad key");
        }
      } else {
        seg.type = PathSegment::Type::kIndex;
        std::size_t start = i;
        while (i < path.size() && std::isdigit(static_cast<unsigned char>(path[i]))) ++i;
        if (start == i) throw bad("bad index");
        seg.index = std::stoull(std::string(path.substr(start, i - start)));
      }
      if (i >= path.size() || path[i] != ']') throw bad("unterminated bracket");
      ++i;
      out.push_back(std::move(seg));
      expect_field = false;
      continue;
    }
    if (!expect_field) throw bad("missing separator");
    std::size_t start = i;
    while (i < path.size() && path[i] != '.' && path[i] != '[') ++i;
    out.push_back(PathSegment{PathSegment::Type::kField, std::string(path.substr(start, i - start)), 0});
    expect_field = false;
  }
  if (!path.empty() && path.back() == '.') throw bad("trailing separator");
  return out;
}

// ---------------------------------------------------------------------------
// set
// ---------------------------------------------------------------------------

namespace detail {

inline ConfigValue set_in_value(const ConfigValue& current, std::span<const PathSegment> rest,
                                ConfigValue value, const std::string& full_path,
                                const FieldSpec* field, const Registry& reg);

inline ConfigNode set_in_node(const ConfigNode& node, std::span<const PathSegment> segs,
                              ConfigValue value, const std::string& full_path,
                              const Registry& reg) {
  const PathSegment& head = segs.front();
  if (head.type != PathSegment::Type::kField)
    throw Error(ErrorCode::kBadPath, full_path, "expected a field name on " + node.kind());
  const ConfigValue* current = node.find(head.name);
  if (current == nullptr)
    throw Error(ErrorCode::kBadPath, full_path, "no field '" + head.name + "' on " + node.kind());
  const ComponentSchema schema = reg.schema(node.kind());
  const FieldSpec* field = schema.field(head.name);
  if (field == nullptr)
    throw Error(ErrorCode::kBadPath, full_path, "field '" + head.name + "' not in schema");
  ConfigValue updated = set_in_value(*current, segs.subspan(1), std::move(value), full_path, field, reg);
  return node.with(head.name, std::move(updated));
}

inline ConfigValue set_in_value(const ConfigValue& current, std::span<const PathSegment> rest,
                                ConfigValue value, const std::string& full_path,
                                const FieldSpec* field, const Registry& reg) {
  if (rest.empty()) {
    return coerce_field_value(*field, std::move(value), full_path);
  }
  const PathSegment& head = rest.front();
  if (current.is_node()) {
    return ConfigValue(set_in_node(current.as_node(), rest, std::move(value), full_path, reg));
  }
  if (head.type == PathSegment::Type::kIndex && current.is_sequence()) {
    Sequence seq = current.as_sequence();
    if (head.index >= seq.size())
      throw Error(ErrorCode::kBadPath, full_path, "index out of range");
    if (field->kind == ValueKind::kSubConfigList) {
      if (rest.size() == 1) {
        if (!value.is_node())
          throw Error(ErrorCode::kTypeMismatch, full_path, "config list elements must be sub-configs");
        seq[head.index] = std::move(value);
      } else {
        seq[head.index] = ConfigValue(
            set_in_node(seq[head.index].as_node(), rest.subspan(1), std::move(value), full_path, reg));
      }
    } else {
      if (rest.size() != 1 || detail::contains_node(value))
        throw Error(ErrorCode::kBadPath, full_path, "cannot descend into plain sequence item");
      seq[head.index] = std::move(value);
    }
    return ConfigValue(std::move(seq));
  }
  if (head.type == PathSegment::Type::kKey && current.is_mapping() && rest.size() == 1) {
    if (detail::contains_node(value))
      throw Error(ErrorCode::kTypeMismatch, full_path, "plain collections may not hold sub-configs");
    Mapping m = current.as_mapping();
    m.insert_or_assign(head.name, std::move(value));
    return ConfigValue(std::move(m));
  }
  throw Error(ErrorCode::kBadPath, full_path, "path does not resolve");
}

}  // namespace detail

/// Returns a copy of `cfg` with the value at `path` replaced. Intermediate
/// segments must walk through sub-configs; the input tree is not modified.
inline ConfigNode set(const ConfigNode& cfg, std::string_view path, ConfigValue value,
                      const Registry& reg = Registry::global()) {
  auto segs = parse_path(path);
  if (segs.empty()) throw Error(ErrorCode::kBadPath, std::string(path), "empty path");
  return detail::set_in_node(cfg, segs, std::move(value), std::string(path), reg);
}

/// Reads the value at `path`.
inline const ConfigValue& get(const ConfigNode& cfg, std::string_view path) {
  auto segs = parse_path(path);
  if (segs.empty() || segs.front().type != PathSegment::Type::kField)
    throw Error(ErrorCode::kBadPath, std::string(path));
  const ConfigValue* cur = &cfg.get(segs.front().name);
  for (std::size_t i = 1; i < segs.size(); ++i) {
    const auto& s = segs[i];
    if (s.type == PathSegment::Type::kField && cur->is_node()) {
      cur = cur->as_node().find(s.name);
    } else if (s.type == PathSegment::Type::kIndex && cur->is_sequence()) {
      const auto& seq = cur->as_sequence();
      cur = s.index < seq.size() ? &seq[s.index] : nullptr;
    } else if (s.type == PathSegment::Type::kKey && cur->is_mapping()) {
      cur = cur->as_mapping().find(s.name);
    } else {
      cur = nullptr;
    }
    if (cur == nullptr) throw Error(ErrorCode::kBadPath, std::string(path));
  }
  return *cur;
}

// ---------------------------------------------------------------------------
// visit
// ---------------------------------------------------------------------------

enum class VisitResult { kContinue, kStop };

using VisitFn = std::function<VisitResult(const std::string& path, const ConfigNode& node)>;

namespace detail {

inline bool visit_node(const std::string& path, const ConfigNode& node, const VisitFn& enter,
                       const VisitFn& exit) {
  if (enter && enter(path, node) == VisitResult::kStop) return false;
  for (const auto& [name, value] : node.fields()) {
    if (value.is_node()) {
      if (!visit_node(join_path(path, name), value.as_node(), enter, exit)) return false;
    } else if (value.is_sequence()) {
      const auto& seq = value.as_sequence();
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i].is_node() &&
            !visit_node(index_path(join_path(path, name), i), seq[i].as_node(), enter, exit))
          return false;
      }
    }
  }
  if (exit && exit(path, node) == VisitResult::kStop) return false;
  return true;
}

}  // namespace detail

/// Depth-first traversal over every sub-config node. `enter` runs pre-order,
/// `exit` post-order; siblings follow field order. Either callback may return
/// kStop to end the traversal.
inline void visit(const ConfigNode& cfg, const VisitFn& enter, const VisitFn& exit = {}) {
  detail::visit_node("", cfg, enter, exit);
}

// ---------------------------------------------------------------------------
// replace_config
// ---------------------------------------------------------------------------

struct ReplaceReport {
  std::vector<std::string> replaced_paths;
  std::vector<std::pair<std::string, std::string>> dropped_fields;
  std::vector<std::pair<std::string, std::string>> copied_fields;
};

namespace detail {

struct Replacer {
  const std::set<std::string>& targets;
  const ConfigNode& tmpl;
  const ComponentSchema& tmpl_schema;
  const Registry& reg;
  ReplaceReport& report;

  ConfigNode replacement(const std::string& path, const ConfigNode& old) {
    const ComponentSchema old_schema = reg.schema(old.kind());
    ConfigNode out = tmpl;
    for (const auto& [name, value] : old.fields()) {
      const FieldSpec* mine = old_schema.field(name);
      const FieldSpec* theirs = tmpl_schema.field(name);
      if (mine != nullptr && theirs != nullptr && mine->kind == theirs->kind) {
        out = out.with(name, value);
        report.copied_fields.emplace_back(path, name);
      } else {
        report.dropped_fields.emplace_back(path, name);
      }
    }
    return out;
  }

  ConfigValue rewrite_value(const std::string& path, const ConfigValue& value, bool& changed) {
    if (value.is_node()) {
      const ConfigNode& child = value.as_node();
      if (targets.count(child.kind())) {
        report.replaced_paths.push_back(path);
        changed = true;
        return ConfigValue(replacement(path, child));
      }
      bool sub_changed = false;
      ConfigNode rewritten = rewrite_node(path, child, sub_changed);
      if (!sub_changed) return value;
      changed = true;
      return ConfigValue(std::move(rewritten));
    }
    if (value.is_sequence()) {
      const auto& seq = value.as_sequence();
      Sequence out;
      out.reserve(seq.size());
      bool seq_changed = false;
      for (std::size_t i = 0; i < seq.size(); ++i)
        out.push_back(rewrite_value(index_path(path, i), seq[i], seq_changed));
      if (!seq_changed) return value;
      changed = true;
      return ConfigValue(std::move(out));
    }
    return value;
  }

  ConfigNode rewrite_node(const std::string& path, const ConfigNode& node, bool& changed) {
    ConfigNode out = node;
    for (const auto& [name, value] : node.fields()) {
      bool field_changed = false;
      ConfigValue updated = rewrite_value(join_path(path, name), value, field_changed);
      if (field_changed) {
        out = out.with(name, std::move(updated));
        changed = true;
      }
    }
    return out;
  }
};

}  // namespace detail

/// Replaces every descendant sub-config whose kind is in `target_kinds` by a
/// clone of `tmpl`. Fields declared with the same name and value kind on both
/// schemas are carried over from the replaced node; the rest are reported as
/// dropped. Replacements are not searched again, and the root itself is never
/// a candidate.
inline std::pair<ConfigNode, ReplaceReport> replace_config(
    const ConfigNode& cfg, const std::set<std::string>& target_kinds, const ConfigNode& tmpl,
    const Registry& reg = Registry::global()) {
  for (const auto& k : target_kinds) (void)reg.schema(k);
  const ComponentSchema tmpl_schema = reg.schema(tmpl.kind());
  ReplaceReport report;
  detail::Replacer replacer{target_kinds, tmpl, tmpl_schema, reg, report};
  bool changed = false;
  ConfigNode out = replacer.rewrite_node("", cfg, changed);
  return {std::move(out), std::move(report)};
}

inline std::pair<ConfigNode, ReplaceReport> replace_config(
    const ConfigNode& cfg, std::string_view target_kind, const ConfigNode& tmpl,
    const Registry& reg = Registry::global()) {
  return replace_config(cfg, std::set<std::string>{std::string(target_kind)}, tmpl, reg);
}

// ---------------------------------------------------------------------------
// External factories
// ---------------------------------------------------------------------------

/// Builds a config node mirroring a factory's parameter list. The node's kind
/// is "fn:<id>", registered on first use.
inline ConfigNode config_from_factory(std::string_view factory_id,
                                      const std::vector<FieldSpec>& params,
                                      Registry& reg = Registry::global()) {
  (void)reg.factory(factory_id);
  const std::string kind = factory_kind(factory_id);
  if (!reg.has_kind(kind)) {
    try {
      reg.register_component(ComponentSchema{kind, params, std::string(factory_id)});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDuplicateKind) throw;
    }
  }
  const ComponentSchema existing = reg.schema(kind);
  if (existing.fields.size() != params.size())
    throw Error(ErrorCode::kDuplicateKind, kind, "registered with a different parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (existing.fields[i].name != params[i].name || existing.fields[i].kind != params[i].kind)
      throw Error(ErrorCode::kDuplicateKind, kind, "registered with a different parameter list");
  }
  std::vector<ConfigNode::Field> fields;
  for (const auto& p : params) {
    fields.emplace_back(p.name, coerce_field_value(p, p.default_value, p.name));
  }
  return ConfigNode(kind, std::move(fields));
}

/// Resolves a factory node's fields and calls its adapter. `path` prefixes
/// error subjects.
inline std::any instantiate_factory(const ConfigNode& node, std::string_view path = "",
                                    const Registry& reg = Registry::global()) {
  const ComponentSchema schema = reg.schema(node.kind());
  std::map<std::string, ConfigValue> resolved;
  for (const auto& [name, value] : node.fields()) {
    const std::string where = join_path(path, name);
    if (value.is_required()) throw Error(ErrorCode::kUnset, where);
    if (value.is_function()) {
      ConfigValue v = reg.resolve_function(value.as_function(), node);
      if (v.is_required() || v.is_function()) throw Error(ErrorCode::kResolve, where);
      resolved.emplace(name, std::move(v));
    } else {
      resolved.emplace(name, value);
    }
  }
  return reg.factory(schema.factory_id)(resolved);
}

}  // namespace composer
