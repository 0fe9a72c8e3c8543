// Meshes, partition specs and shard shapes.

#include <gtest/gtest.h>

#include <random>

#include "composer/sharding.hpp"

namespace composer {
namespace {

using Axis = std::optional<std::string>;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kIo;
}

TEST(Mesh, ResolveWildcard) {
  EXPECT_EQ(resolve_mesh({-1, 8}, {"fsdp", "model"}, 64).shape, (Shape{8, 8}));
  EXPECT_EQ(resolve_mesh({-1, 256}, {"data", "fsdp"}, 1024).shape, (Shape{4, 256}));
  EXPECT_EQ(resolve_mesh({2, 4}, {"a", "b"}, 8).shape, (Shape{2, 4}));
  EXPECT_EQ(code_of([] { resolve_mesh({-1, -1}, {"a", "b"}, 8); }), ErrorCode::kMultipleWildcards);
  EXPECT_EQ(code_of([] { resolve_mesh({-1, 3}, {"a", "b"}, 8); }), ErrorCode::kIndivisible);
  EXPECT_EQ(code_of([] { resolve_mesh({2, 2}, {"a", "b"}, 8); }), ErrorCode::kIndivisible);
  EXPECT_EQ(code_of([] { resolve_mesh({2, 4}, {"a", "a"}, 8); }), ErrorCode::kInvalidArgument);
}

TEST(Sharding, Examples) {
  const Mesh m = resolve_mesh({4, 2}, {"fsdp", "model"}, 8);
  EXPECT_EQ(shard_shape({1024, 512}, PartitionSpec{{"fsdp", "model"}}, m), (Shape{256, 256}));
  EXPECT_EQ(shard_shape({1024, 512}, PartitionSpec::unsharded(2), m), (Shape{1024, 512}));
  EXPECT_EQ(shard_shape({10, 512}, PartitionSpec{{Axis{}, "model"}}, m), (Shape{10, 256}));
  EXPECT_EQ(code_of([&] { shard_shape({10, 3}, PartitionSpec{{Axis{}, "model"}}, m); }), ErrorCode::kIndivisible);
  EXPECT_EQ(code_of([&] { shard_shape({8}, PartitionSpec{{"fsdp", "model"}}, m); }), ErrorCode::kShape);
  EXPECT_EQ(code_of([&] { shard_shape({8, 8}, PartitionSpec{{"fsdp", "fsdp"}}, m); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { shard_shape({8, 8}, PartitionSpec{{"data", Axis{}}}, m); }), ErrorCode::kInvalidArgument);
}

TEST(Sharding, BiasSpec) {
  EXPECT_EQ(infer_bias_spec(PartitionSpec{{"fsdp", "model"}}), (PartitionSpec{{"model"}}));
  EXPECT_EQ(infer_bias_spec(PartitionSpec::unsharded(2)), PartitionSpec::unsharded(1));
  EXPECT_EQ(infer_bias_spec(PartitionSpec{{"fsdp", Axis{}}}), PartitionSpec::unsharded(1));
}

TEST(Sharding, ConfigEncoding) {
  const PartitionSpec spec{{"fsdp", Axis{}}};
  const Sequence enc = partition_spec_to_config(spec);
  EXPECT_EQ(enc, text_sequence({"fsdp", ""}));
  EXPECT_EQ(partition_spec_from_config(enc, 2), spec);
  EXPECT_EQ(partition_spec_from_config(Sequence{}, 3), PartitionSpec::unsharded(3));
  EXPECT_EQ(code_of([&] { partition_spec_from_config(enc, 3); }), ErrorCode::kShape);
}

// Shard shape times axis sizes reconstructs the global shape.
TEST(Sharding, RandomPartitionProperty) {
  std::mt19937_64 gen(2024);
  const std::vector<std::string> names = {"data", "fsdp", "model", "expert"};
  for (int c = 0; c < 1000; ++c) {
    const std::size_t axes = 1 + gen() % names.size();
    std::vector<std::int64_t> shape;
    std::vector<std::string> axis_names(names.begin(), names.begin() + static_cast<long>(axes));
    std::int64_t total = 1;
    for (std::size_t a = 0; a < axes; ++a) {
      shape.push_back(1 + static_cast<std::int64_t>(gen() % 4));
      total *= shape.back();
    }
    const Mesh mesh = resolve_mesh(shape, axis_names, total);
    const std::size_t rank = 1 + gen() % 3;
    PartitionSpec spec = PartitionSpec::unsharded(rank);
    std::vector<std::string> pool = axis_names;
    std::shuffle(pool.begin(), pool.end(), gen);
    for (std::size_t d = 0; d < rank && !pool.empty(); ++d)
      if (gen() % 2) {
        spec.dims[d] = pool.back();
        pool.pop_back();
      }
    Shape global(rank);
    for (std::size_t d = 0; d < rank; ++d)
      global[d] = (1 + static_cast<std::int64_t>(gen() % 5)) *
                  (spec.dims[d] ? mesh.axis_size(*spec.dims[d]) : 1);
    const Shape local = shard_shape(global, spec, mesh);
    for (std::size_t d = 0; d < rank; ++d)
      ASSERT_EQ(local[d] * (spec.dims[d] ? mesh.axis_size(*spec.dims[d]) : 1), global[d]);
  }
}

}  // namespace
}  // namespace composer
