// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "composer/error.hpp"

namespace composer {

class ConfigNode;
class ConfigValue;

/// Marker for a field that must be set before instantiation.
struct Required {
  friend bool operator==(const Required&, const Required&) = default;
};

using Scalar = std::variant<bool, std::int64_t, double, std::string>;

/// A deferred value, resolved at instantiation against its owning node.
struct FunctionSpec {
  std::string name;
  std::map<std::string, Scalar> args;

  friend bool operator==(const FunctionSpec&, const FunctionSpec&) = default;
};

using Sequence = std::vector<ConfigValue>;

/// Text-keyed mapping; entries are kept sorted by key.
struct Mapping {
  std::vector<std::pair<std::string, ConfigValue>> entries;

  const ConfigValue* find(std::string_view key) const;
  void insert_or_assign(std::string key, ConfigValue value);
  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  friend bool operator==(const Mapping& a, const Mapping& b);
};

enum class ValueKind {
  kBool,
  kInt,
  kFloat,
  kText,
  kSequence,
  kMapping,
  kSubConfig,
  kSubConfigList,
  kFunction,
  kRequired,
};

inline constexpr std::string_view value_kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::kBool: return "bool";
    case ValueKind::kInt: return "int";
    case ValueKind::kFloat: return "float";
    case ValueKind::kText: return "text";
    case ValueKind::kSequence: return "sequence";
    case ValueKind::kMapping: return "mapping";
    case ValueKind::kSubConfig: return "config";
    case ValueKind::kSubConfigList: return "config_list";
    case ValueKind::kFunction: return "function";
    case ValueKind::kRequired: return "required";
  }
  return "?";
}

/// One configuration value. Sub-configs are held through an immutable shared
/// pointer, so copying a value never lets two trees alias mutable state.
class ConfigValue {
 public:
  using NodePtr = std::shared_ptr<const ConfigNode>;
  using Storage = std::variant<Required, bool, std::int64_t, double, std::string,
                               Sequence, Mapping, NodePtr, FunctionSpec>;

  ConfigValue() : storage_(Required{}) {}
  ConfigValue(Required) : storage_(Required{}) {}
  ConfigValue(bool v) : storage_(v) {}
  template <typename I>
    requires(std::is_integral_v<I> && !std::is_same_v<I, bool>)
  ConfigValue(I v) : storage_(static_cast<std::int64_t>(v)) {}
  ConfigValue(double v) : storage_(v) {}
  ConfigValue(const char* v) : storage_(std::string(v)) {}
  ConfigValue(std::string v) : storage_(std::move(v)) {}
  ConfigValue(std::string_view v) : storage_(std::string(v)) {}
  ConfigValue(Sequence v) : storage_(std::move(v)) {}
  ConfigValue(Mapping v) : storage_(std::move(v)) {}
  ConfigValue(FunctionSpec v) : storage_(std::move(v)) {}
  ConfigValue(const ConfigNode& node);
  ConfigValue(ConfigNode&& node);
  ConfigValue(NodePtr node) : storage_(std::move(node)) {}
  static ConfigValue from_scalar(const Scalar& s) {
    return std::visit([](const auto& v) { return ConfigValue(v); }, s);
  }

  ValueKind kind() const;

  bool is_required() const { return std::holds_alternative<Required>(storage_); }
  bool is_node() const { return std::holds_alternative<NodePtr>(storage_); }
  bool is_sequence() const { return std::holds_alternative<Sequence>(storage_); }
  bool is_mapping() const { return std::holds_alternative<Mapping>(storage_); }
  bool is_function() const { return std::holds_alternative<FunctionSpec>(storage_); }
  bool is_text() const { return std::holds_alternative<std::string>(storage_); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(storage_); }
  bool is_float() const { return std::holds_alternative<double>(storage_); }
  bool is_bool() const { return std::holds_alternative<bool>(storage_); }
  bool is_scalar() const { return is_bool() || is_int() || is_float() || is_text(); }

  bool as_bool() const { return get<bool>("bool"); }
  std::int64_t as_int() const { return get<std::int64_t>("int"); }
  /// Integers promote to double.
  double as_double() const {
    if (is_int()) return static_cast<double>(std::get<std::int64_t>(storage_));
    return get<double>("float");
  }
  const std::string& as_text() const { return get<std::string>("text"); }
  const Sequence& as_sequence() const { return get<Sequence>("sequence"); }
  const Mapping& as_mapping() const { return get<Mapping>("mapping"); }
  const FunctionSpec& as_function() const { return get<FunctionSpec>("function"); }
  const ConfigNode& as_node() const { return *get<NodePtr>("config"); }
  const NodePtr& node_ptr() const { return get<NodePtr>("config"); }
  Scalar as_scalar() const;

  const Storage& storage() const { return storage_; }

  friend bool operator==(const ConfigValue& a, const ConfigValue& b);

 private:
  template <typename T>
  const T& get(std::string_view want) const {
    if (const T* p = std::get_if<T>(&storage_)) return *p;
    throw Error(ErrorCode::kTypeMismatch, std::string(want),
                "value holds " + std::string(value_kind_name(kind())));
  }

  Storage storage_;
};

/// Immutable node of a configuration tree: a component kind plus ordered fields.
class ConfigNode {
 public:
  using Field = std::pair<std::string, ConfigValue>;

  ConfigNode() = default;
  ConfigNode(std::string kind, std::vector<Field> fields)
      : kind_(std::move(kind)), fields_(std::move(fields)) {}

  const std::string& kind() const { return kind_; }
  const std::vector<Field>& fields() const { return fields_; }

  const ConfigValue* find(std::string_view name) const {
    for (const auto& [k, v] : fields_)
      if (k == name) return &v;
    return nullptr;
  }
  bool has(std::string_view name) const { return find(name) != nullptr; }
  const ConfigValue& get(std::string_view name) const {
    if (const ConfigValue* v = find(name)) return *v;
    throw Error(ErrorCode::kBadPath, std::string(name), "no field on " + kind_);
  }

  /// Copy with one existing field replaced. No schema check.
  ConfigNode with(std::string_view name, ConfigValue value) const {
    ConfigNode out = *this;
    for (auto& [k, v] : out.fields_) {
      if (k == name) {
        v = std::move(value);
        return out;
      }
    }
    throw Error(ErrorCode::kBadPath, std::string(name), "no field on " + kind_);
  }

  friend bool operator==(const ConfigNode& a, const ConfigNode& b) {
    return a.kind_ == b.kind_ && a.fields_ == b.fields_;
  }

 private:
  std::string kind_;
  std::vector<Field> fields_;
};

inline ConfigValue::ConfigValue(const ConfigNode& node)
    : storage_(std::make_shared<const ConfigNode>(node)) {}
inline ConfigValue::ConfigValue(ConfigNode&& node)
    : storage_(std::make_shared<const ConfigNode>(std::move(node))) {}

inline ValueKind ConfigValue::kind() const {
  switch (storage_.index()) {
    case 0: return ValueKind::kRequired;
    case 1: return ValueKind::kBool;
    case 2: return ValueKind::kInt;
    case 3: return ValueKind::kFloat;
    case 4: return ValueKind::kText;
    case 5: return ValueKind::kSequence;
    case 6: return ValueKind::kMapping;
    case 7: return ValueKind::kSubConfig;
    default: return ValueKind::kFunction;
  }
}

inline Scalar ConfigValue::as_scalar() const {
  if (is_bool()) return as_bool();
  if (is_int()) return as_int();
  if (is_float()) return std::get<double>(storage_);
  if (is_text()) return as_text();
  throw Error(ErrorCode::kTypeMismatch, "scalar",
              "value holds " + std::string(value_kind_name(kind())));
}

inline bool operator==(const Mapping& a, const Mapping& b) { return a.entries == b.entries; }

inline bool operator==(const ConfigValue& a, const ConfigValue& b) {
  if (a.storage_.index() != b.storage_.index()) return false;
  if (a.is_node()) {
    const auto& pa = std::get<ConfigValue::NodePtr>(a.storage_);
    const auto& pb = std::get<ConfigValue::NodePtr>(b.storage_);
    return pa == pb || *pa == *pb;
  }
  return a.storage_ == b.storage_;
}

inline const ConfigValue* Mapping::find(std::string_view key) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), key,
                             [](const auto& e, std::string_view k) { return e.first < k; });
  if (it != entries.end() && it->first == key) return &it->second;
  return nullptr;
}

inline void Mapping::insert_or_assign(std::string key, ConfigValue value) {
  auto it = std::lower_bound(entries.begin(), entries.end(), key,
                             [](const auto& e, const std::string& k) { return e.first < k; });
  if (it != entries.end() && it->first == key) {
    it->second = std::move(value);
  } else {
    entries.emplace(it, std::move(key), std::move(value));
  }
}

/// Builds a Sequence of text values.
inline Sequence text_sequence(std::initializer_list<std::string_view> items) {
  Sequence out;
  for (auto s : items) out.emplace_back(s);
  return out;
}

}  // namespace composer
