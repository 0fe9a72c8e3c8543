// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "composer/config_value.hpp"
#include "composer/error.hpp"
#include "composer/tensor.hpp"

namespace composer {

/// Named-axis device mesh. `shape` may hold one -1 wildcard before resolution.
struct Mesh {
  std::vector<std::string> axis_names;
  std::vector<std::int64_t> shape;

  std::int64_t total_devices() const {
    std::int64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
  /// Size of a named axis; 1 when the mesh lacks it.
  std::int64_t axis_size(std::string_view name) const {
    for (std::size_t i = 0; i < axis_names.size(); ++i)
      if (axis_names[i] == name) return shape[i];
    return 1;
  }
  bool has_axis(std::string_view name) const {
    for (const auto& a : axis_names)
      if (a == name) return true;
    return false;
  }

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

/// Per-dimension sharding: std::nullopt is unsharded, otherwise a mesh axis.
struct PartitionSpec {
  std::vector<std::optional<std::string>> dims;

  static PartitionSpec unsharded(std::size_t rank) {
    return PartitionSpec{std::vector<std::optional<std::string>>(rank)};
  }
  std::size_t rank() const { return dims.size(); }
  bool uses_axis(std::string_view axis) const {
    for (const auto& d : dims)
      if (d && *d == axis) return true;
    return false;
  }
  std::string to_string() const {
    std::string out = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) out += ", ";
      out += dims[i] ? "\"" + *dims[i] + "\"" : "None";
    }
    return out + ")";
  }

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

/// Validates a spec: no axis repeated.
inline void check_partition_spec(const PartitionSpec& spec) {
  std::set<std::string> seen;
  for (const auto& d : spec.dims)
    if (d && !seen.insert(*d).second)
      throw Error(ErrorCode::kInvalidArgument, spec.to_string(), "axis used twice");
}

/// Config encoding: a Sequence of text, "" marking an unsharded dimension.
/// An empty Sequence means fully unsharded at any rank.
inline PartitionSpec partition_spec_from_config(const ConfigValue& value, std::size_t rank) {
  const auto& seq = value.as_sequence();
  if (seq.empty()) return PartitionSpec::unsharded(rank);
  if (seq.size() != rank)
    throw Error(ErrorCode::kShape, "param_partition_spec",
                "spec has " + std::to_string(seq.size()) + " entries for a rank-" +
                    std::to_string(rank) + " tensor");
  PartitionSpec spec;
  for (const auto& item : seq) {
    const std::string& axis = item.as_text();
    spec.dims.push_back(axis.empty() ? std::nullopt : std::optional<std::string>(axis));
  }
  check_partition_spec(spec);
  return spec;
}

inline Sequence partition_spec_to_config(const PartitionSpec& spec) {
  Sequence out;
  for (const auto& d : spec.dims) out.emplace_back(d.value_or(""));
  return out;
}

/// Fills the single -1 wildcard so the mesh covers `total_devices` exactly.
inline Mesh resolve_mesh(std::vector<std::int64_t> shape, std::vector<std::string> axis_names,
                         std::int64_t total_devices) {
  if (shape.size() != axis_names.size())
    throw Error(ErrorCode::kInvalidArgument, "mesh", "shape and axis names differ in length");
  if (total_devices <= 0) throw Error(ErrorCode::kInvalidArgument, "mesh", "no devices");
  std::set<std::string> names(axis_names.begin(), axis_names.end());
  if (names.size() != axis_names.size())
    throw Error(ErrorCode::kInvalidArgument, "mesh", "duplicate axis name");
  int wildcards = 0;
  std::int64_t known = 1;
  for (auto s : shape) {
    if (s == -1) {
      ++wildcards;
    } else if (s <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "mesh", "axis sizes must be positive or -1");
    } else {
      known *= s;
    }
  }
  if (wildcards > 1) throw Error(ErrorCode::kMultipleWildcards, "mesh");
  if (total_devices % known != 0)
    throw Error(ErrorCode::kIndivisible, "mesh",
                std::to_string(total_devices) + " devices over fixed axes of product " +
                    std::to_string(known));
  if (wildcards == 1) {
    for (auto& s : shape)
      if (s == -1) s = total_devices / known;
  } else if (known != total_devices) {
    throw Error(ErrorCode::kIndivisible, "mesh",
                "mesh covers " + std::to_string(known) + " of " + std::to_string(total_devices) +
                    " devices");
  }
  return Mesh{std::move(axis_names), std::move(shape)};
}

/// Per-device shape of a tensor sharded by `spec` over `mesh`.
inline Shape shard_shape(const Shape& global_shape, const PartitionSpec& spec, const Mesh& mesh) {
  if (spec.rank() != global_shape.size())
    throw Error(ErrorCode::kShape, spec.to_string(),
                "spec arity does not match rank " + std::to_string(global_shape.size()));
  check_partition_spec(spec);
  Shape out(global_shape.size());
  for (std::size_t i = 0; i < global_shape.size(); ++i) {
    std::int64_t parts = 1;
    if (spec.dims[i]) {
      if (!mesh.has_axis(*spec.dims[i]))
        throw Error(ErrorCode::kInvalidArgument, *spec.dims[i], "axis not in mesh");
      parts = mesh.axis_size(*spec.dims[i]);
    }
    if (global_shape[i] % parts != 0)
      throw Error(ErrorCode::kIndivisible, shape_string(global_shape),
                  "dimension " + std::to_string(i) + " not divisible by " + std::to_string(parts));
    out[i] = global_shape[i] / parts;
  }
  return out;
}

/// Bias sharding follows the weight's output (last) dimension.
inline PartitionSpec infer_bias_spec(const PartitionSpec& weight_spec) {
  if (weight_spec.dims.empty())
    throw Error(ErrorCode::kInvalidArgument, "()", "weight spec must have rank >= 1");
  return PartitionSpec{{weight_spec.dims.back()}};
}

}  // namespace composer
