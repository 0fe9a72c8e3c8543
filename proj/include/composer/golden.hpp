// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// Golden config text: one "<path>: <value>" line per leaf plus one
// "<path>.klass: <kind>" line per node, sorted bytewise by path, LF-terminated.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "composer/config.hpp"

namespace composer {

/// Shortest round-trip decimal. Finite values always carry a '.' or exponent
/// so floats and integers stay distinguishable.
inline std::string render_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string out(buf, res.ptr);
  if (out.find_first_of(".e") == std::string::npos) out += ".0";
  return out;
}

inline std::string render_scalar(const Scalar& s) {
  struct {
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const { return render_double(d); }
    std::string operator()(const std::string& t) const { return quote_text(t); }
  } r;
  return std::visit(r, s);
}

inline std::string render_function(const FunctionSpec& fn) {
  std::string out = "fn:" + fn.name + "(";
  bool first = true;
  for (const auto& [k, v] : fn.args) {
    if (!first) out += ",";
    first = false;
    out += k + "=" + render_scalar(v);
  }
  return out + ")";
}

using GoldenLine = std::pair<std::string, std::string>;

namespace detail {

inline void golden_lines_for(const std::string& path, const ConfigValue& value,
                             std::vector<GoldenLine>& out);

inline void golden_lines_for_node(const std::string& path, const ConfigNode& node,
                                  std::vector<GoldenLine>& out) {
  out.emplace_back(path + "." + std::string(kKindField), node.kind());
  for (const auto& [name, value] : node.fields()) golden_lines_for(join_path(path, name), value, out);
}

inline void golden_lines_for(const std::string& path, const ConfigValue& value,
                             std::vector<GoldenLine>& out) {
  switch (value.kind()) {
    case ValueKind::kRequired: out.emplace_back(path, "REQUIRED"); return;
    case ValueKind::kFunction: out.emplace_back(path, render_function(value.as_function())); return;
    case ValueKind::kSubConfig: golden_lines_for_node(path, value.as_node(), out); return;
    case ValueKind::kSequence: {
      const auto& seq = value.as_sequence();
      if (seq.empty()) out.emplace_back(path, "[]");
      for (std::size_t i = 0; i < seq.size(); ++i) golden_lines_for(index_path(path, i), seq[i], out);
      return;
    }
    case ValueKind::kMapping: {
      const auto& m = value.as_mapping();
      if (m.empty()) out.emplace_back(path, "{}");
      for (const auto& [k, v] : m.entries) golden_lines_for(key_path(path, k), v, out);
      return;
    }
    default: out.emplace_back(path, render_scalar(value.as_scalar())); return;
  }
}

}  // namespace detail

/// (path, rendered value) pairs in golden order.
inline std::vector<GoldenLine> golden_lines(const ConfigNode& cfg) {
  std::vector<GoldenLine> out;
  detail::golden_lines_for_node("", cfg, out);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

inline std::string render_golden_lines(const std::vector<GoldenLine>& lines) {
  std::string out;
  for (const auto& [path, value] : lines) {
    out += path;
    out += ": ";
    out += value;
    out += '\n';
  }
  return out;
}

/// Canonical, byte-deterministic text for a config tree.
inline std::string serialize_golden(const ConfigNode& cfg) {
  return render_golden_lines(golden_lines(cfg));
}

namespace detail {

/// Index of the ": " separating path from value, skipping quoted keys.
inline std::size_t golden_separator(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '\\') ++i;
      else if (c == '"') quoted = false;
      continue;
    }
    if (c == '"') quoted = true;
    else if (c == ':' && line[i + 1] == ' ') return i;
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Splits golden text into lines. Throws E_MALFORMED_GOLDEN on missing
/// separators, a missing trailing LF, or duplicate paths.
inline std::vector<GoldenLine> parse_golden_lines(std::string_view text) {
  std::vector<GoldenLine> out;
  if (text.empty()) return out;
  if (text.back() != '\n')
    throw Error(ErrorCode::kMalformedGolden, "", "missing trailing newline");
  std::size_t start = 0;
  std::size_t lineno = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end - start);
    ++lineno;
    std::size_t sep = detail::golden_separator(line);
    if (sep == std::string_view::npos || sep == 0)
      throw Error(ErrorCode::kMalformedGolden, "line " + std::to_string(lineno),
                  "expected '<path>: <value>'");
    out.emplace_back(std::string(line.substr(0, sep)), std::string(line.substr(sep + 2)));
    start = end + 1;
  }
  std::vector<GoldenLine> sorted = out;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].first == sorted[i - 1].first)
      throw Error(ErrorCode::kMalformedGolden, sorted[i].first, "duplicate path");
  return out;
}

struct GoldenDiffEntry {
  std::string path;
  std::optional<std::string> old_value;
  std::optional<std::string> new_value;

  friend bool operator==(const GoldenDiffEntry&, const GoldenDiffEntry&) = default;
};

/// Path-keyed diff of two golden texts, sorted by path. Added and removed
/// lines carry an empty side.
inline std::vector<GoldenDiffEntry> golden_diff(std::string_view a, std::string_view b) {
  std::map<std::string, std::string> left, right;
  for (auto& [p, v] : parse_golden_lines(a)) left.emplace(std::move(p), std::move(v));
  for (auto& [p, v] : parse_golden_lines(b)) right.emplace(std::move(p), std::move(v));
  std::vector<GoldenDiffEntry> out;
  auto l = left.begin();
  auto r = right.begin();
  while (l != left.end() || r != right.end()) {
    if (r == right.end() || (l != left.end() && l->first < r->first)) {
      out.push_back({l->first, l->second, std::nullopt});
      ++l;
    } else if (l == left.end() || r->first < l->first) {
      out.push_back({r->first, std::nullopt, r->second});
      ++r;
    } else {
      if (l->second != r->second) out.push_back({l->first, l->second, r->second});
      ++l;
      ++r;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Golden text back to a config tree
// ---------------------------------------------------------------------------

/// Parses one rendered scalar or function value.
inline ConfigValue parse_golden_value(std::string_view text) {
  auto bad = [&] { return Error(ErrorCode::kMalformedGolden, std::string(text), "bad value"); };
  if (text == "REQUIRED") return Required{};
  if (text == "true") return true;
  if (text == "false") return false;
  if (text == "[]") return Sequence{};
  if (text == "{}") return Mapping{};
  if (!text.empty() && text.front() == '"') {
    std::size_t pos = 0;
    std::string s = unquote_text(text, pos);
    if (pos != text.size()) throw bad();
    return s;
  }
  if (text.starts_with("fn:")) {
    std::size_t open = text.find('(');
    if (open == std::string_view::npos || text.back() != ')') throw bad();
    FunctionSpec fn;
    fn.name = std::string(text.substr(3, open - 3));
    std::string_view body = text.substr(open + 1, text.size() - open - 2);
    std::size_t i = 0;
    while (i < body.size()) {
      std::size_t eq = body.find('=', i);
      if (eq == std::string_view::npos) throw bad();
      std::string key(body.substr(i, eq - i));
      i = eq + 1;
      std::size_t end = i;
      if (end < body.size() && body[end] == '"') {
        std::size_t q = end;
        (void)unquote_text(body, q);
        end = q;
      } else {
        end = body.find(',', i);
        if (end == std::string_view::npos) end = body.size();
      }
      ConfigValue v = parse_golden_value(body.substr(i, end - i));
      fn.args.emplace(std::move(key), v.as_scalar());
      i = end;
      if (i < body.size()) {
        if (body[i] != ',') throw bad();
        ++i;
      }
    }
    return fn;
  }
  bool is_float = text.find_first_of(".eEn") != std::string_view::npos;
  if (is_float) {
    double d = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), d);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw bad();
    return d;
  }
  std::int64_t i = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), i);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw bad();
  return i;
}

namespace detail {

/// Intermediate tree built from golden paths before schemas are applied.
struct GoldenTree {
  std::optional<std::string> kind;
  std::optional<std::string> leaf;
  std::map<std::string, GoldenTree> fields;
  std::map<std::size_t, GoldenTree> items;
  std::map<std::string, GoldenTree> keyed;
};

inline ConfigValue golden_tree_value(const GoldenTree& t, const std::string& path,
                                     const Registry& reg);

inline ConfigNode golden_tree_node(const GoldenTree& t, const std::string& path,
                                   const Registry& reg) {
  if (!t.kind) throw Error(ErrorCode::kMalformedGolden, path, "missing klass line");
  const ComponentSchema schema = reg.schema(*t.kind);
  std::vector<ConfigNode::Field> fields;
  for (const auto& f : schema.fields) {
    auto it = t.fields.find(f.name);
    const std::string where = join_path(path, f.name);
    if (it == t.fields.end()) throw Error(ErrorCode::kMalformedGolden, where, "missing field");
    fields.emplace_back(f.name, coerce_field_value(f, golden_tree_value(it->second, where, reg), where));
  }
  for (const auto& [name, sub] : t.fields)
    if (schema.field(name) == nullptr)
      throw Error(ErrorCode::kBadPath, join_path(path, name), "not in schema of " + *t.kind);
  return ConfigNode(*t.kind, std::move(fields));
}

inline ConfigValue golden_tree_value(const GoldenTree& t, const std::string& path,
                                     const Registry& reg) {
  int shapes = (t.leaf ? 1 : 0) + (t.kind || !t.fields.empty() ? 1 : 0) + (!t.items.empty() ? 1 : 0) +
               (!t.keyed.empty() ? 1 : 0);
  if (shapes != 1) throw Error(ErrorCode::kMalformedGolden, path, "ambiguous entry");
  if (t.leaf) return parse_golden_value(*t.leaf);
  if (t.kind || !t.fields.empty()) return ConfigValue(golden_tree_node(t, path, reg));
  if (!t.items.empty()) {
    Sequence seq;
    std::size_t expect = 0;
    for (const auto& [i, sub] : t.items) {
      if (i != expect++) throw Error(ErrorCode::kMalformedGolden, path, "sequence has a gap");
      seq.push_back(golden_tree_value(sub, index_path(path, i), reg));
    }
    return seq;
  }
  Mapping m;
  for (const auto& [k, sub] : t.keyed) m.insert_or_assign(k, golden_tree_value(sub, key_path(path, k), reg));
  return m;
}

}  // namespace detail

/// Rebuilds a config tree from golden text using the registered schemas.
inline ConfigNode config_from_golden(std::string_view text,
                                     const Registry& reg = Registry::global()) {
  detail::GoldenTree root;
  for (const auto& [path, value] : parse_golden_lines(text)) {
    std::string_view p = path;
    bool is_kind = false;
    const std::string suffix = "." + std::string(kKindField);
    if (p == suffix.substr(1) || p.ends_with(suffix)) {
      is_kind = true;
      p = p.size() >= suffix.size() ? p.substr(0, p.size() - suffix.size()) : std::string_view{};
    }
    std::vector<PathSegment> segs;
    try {
      segs = parse_path(p);
    } catch (const Error&) {
      throw Error(ErrorCode::kMalformedGolden, path, "bad path");
    }
    detail::GoldenTree* cur = &root;
    for (const auto& s : segs) {
      switch (s.type) {
        case PathSegment::Type::kField: cur = &cur->fields[s.name]; break;
        case PathSegment::Type::kIndex: cur = &cur->items[s.index]; break;
        case PathSegment::Type::kKey: cur = &cur->keyed[s.name]; break;
      }
    }
    if (is_kind) {
      cur->kind = value;
    } else {
      if (segs.empty()) throw Error(ErrorCode::kMalformedGolden, path, "leaf without path");
      cur->leaf = value;
    }
  }
  return detail::golden_tree_node(root, "", reg);
}

}  // namespace composer
