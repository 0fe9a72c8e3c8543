// PRNG key derivation and uniform streams.

#include <gtest/gtest.h>

#include <set>
#include <string>

#include "composer/rng.hpp"

namespace composer {
namespace {

// Vectors computed with Python hashlib.blake2b(digest_size=32).
TEST(Rng, FrozenVectors) {
  const RngKey zero{};
  const RngKey ff = child_key(zero, "feed_forward", 0);
  EXPECT_EQ(ff.hex(), "5e5f6fd09bb33eb36ed0b7b3d98c65f51403be06084ef40d2a836bb9331a03fd");
  EXPECT_EQ(child_key(ff, "linear1_0", 3).hex(),
            "4c5848eee8904caca66ee405ced8a67b7bab8a48816e5c2713fd12359c57f911");
  UniformStream s(ff);
  EXPECT_EQ(s.next(), 0.30826739284224003);
  EXPECT_EQ(s.next(), 0.6202609005919983);
}

TEST(Rng, Deterministic) {
  const RngKey root = RngKey::from_seed(42);
  EXPECT_EQ(child_key(root, "attn", 1), child_key(root, "attn", 1));
  UniformStream a(root), b(root);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, DistinctChildren) {
  const RngKey root = RngKey::from_seed(1);
  std::set<RngKey> seen;
  for (const char* name : {"a", "b", "ab", "", "layer"})
    for (std::uint64_t i = 0; i < 50; ++i) EXPECT_TRUE(seen.insert(child_key(root, name, i)).second);
  // Length prefix separates ("a", ...) from ("ab", ...) style concatenations.
  EXPECT_NE(child_key(root, "ab", 0), child_key(root, "a", 0));
  EXPECT_NE(child_key(root, "x", 0), child_key(RngKey::from_seed(2), "x", 0));
}

TEST(Rng, UniformRange) {
  UniformStream s(RngKey::from_seed(9));
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = s.next();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, ContentDigest) {
  EXPECT_EQ(content_digest("abc"), content_digest("abc"));
  EXPECT_NE(content_digest("abc"), content_digest("abd"));
  EXPECT_EQ(content_digest("").size(), 64u);
}

}  // namespace
}  // namespace composer
