// Numeric kernels against hand-computed oracles.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "composer/nn.hpp"

namespace composer::nn {
namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kIo;
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(gen);
  return t;
}

TEST(Linear, HandOracle) {
  const Tensor x({1, 2}, std::vector<double>{1, 2});
  const Tensor w({2, 2}, std::vector<double>{1, 0, 0, 2});
  const Tensor b({2}, std::vector<double>{1, 1});
  EXPECT_EQ(linear_forward(x, w, &b), Tensor({1, 2}, std::vector<double>{2, 5}));
  EXPECT_EQ(linear_forward(x, w), Tensor({1, 2}, std::vector<double>{1, 4}));
}

TEST(Linear, IdentityAndShapes) {
  const Tensor x = random_tensor({3, 4}, 1);
  Tensor eye({4, 4});
  for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  const Tensor zero({4});
  EXPECT_EQ(linear_forward(x, eye, &zero), x);
  EXPECT_EQ(linear_forward(random_tensor({2, 84}, 2), random_tensor({84, 10}, 3)).shape(), (Shape{2, 10}));
  EXPECT_EQ(code_of([&] { linear_forward(x, random_tensor({3, 2}, 4)); }), ErrorCode::kShape);
  const Tensor bad_b({3});
  EXPECT_EQ(code_of([&] { linear_forward(x, eye, &bad_b); }), ErrorCode::kShape);
}

TEST(RMSNorm, Oracles) {
  const Tensor x({2}, std::vector<double>{3, 4});
  const Tensor one({2}, 1.0);
  const Tensor y = rmsnorm_forward(x, one, 0.0);
  EXPECT_NEAR(y[0], 3.0 / std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(y[1], 4.0 / std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(y[0], 0.848528, 1e-6);
  EXPECT_NEAR(y[1], 1.131371, 1e-6);
  const Tensor flat = rmsnorm_forward(Tensor({2, 5}, 7.0), Tensor({5}, 1.0), 0.0);
  for (double v : flat.data()) EXPECT_NEAR(v, 1.0, 1e-15);
  const Tensor zeroed = rmsnorm_forward(x, Tensor({2}), 1e-6);
  for (double v : zeroed.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(code_of([&] { rmsnorm_forward(x, Tensor({3}, 1.0), 0.0); }), ErrorCode::kShape);
}

// Solves silu(b) = 1 by Newton iteration.
double silu_inverse_of_one() {
  double b = 1.0;
  for (int i = 0; i < 60; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-b));
    const double f = b * s - 1.0;
    const double df = s + b * s * (1.0 - s);
    b -= f / df;
  }
  return b;
}

TEST(FeedForward, GatedReducesToLinearPath) {
  const Tensor x = random_tensor({3, 4}, 5);
  const Tensor w1a = random_tensor({4, 6}, 6), w2 = random_tensor({6, 4}, 7);
  const double b = silu_inverse_of_one();
  ASSERT_NEAR(silu(b), 1.0, 1e-15);
  FfnWeights gated{{w1a, Tensor({4, 6})}, {std::nullopt, Tensor({6}, b)}, w2, std::nullopt};
  FfnWeights plain{{w1a}, {std::nullopt}, w2, std::nullopt};
  const Tensor g = feed_forward_forward(x, gated, {"linear", "nn.silu"});
  const Tensor p = feed_forward_forward(x, plain, {"linear"});
  for (std::int64_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], p[i], 1e-12);
}

TEST(FeedForward, SingleActivationOracle) {
  const Tensor x({1, 2}, std::vector<double>{1, -2});
  FfnWeights w{{Tensor({2, 2}, std::vector<double>{1, 0, 0, 1})}, {std::nullopt},
               Tensor({2, 1}, std::vector<double>{1, 1}), std::nullopt};
  // relu(1, -2) = (1, 0), then summed.
  EXPECT_EQ(feed_forward_forward(x, w, {"nn.relu"})[0], 1.0);
  EXPECT_EQ(feed_forward_forward(x, w, {"linear"})[0], -1.0);
  EXPECT_EQ(code_of([&] { feed_forward_forward(x, w, {"swish2"}); }), ErrorCode::kUnknownActivation);
}

TEST(Rope, PositionZeroIsIdentity) {
  const Tensor q = random_tensor({2, 1, 8}, 8);
  EXPECT_EQ(rope_rotate(q, {0.0}), q);
}

TEST(Rope, TrigOracle) {
  const Tensor x({1, 2}, std::vector<double>{0.3, -0.7});
  const Tensor y = rope_rotate(x, {1.0});
  EXPECT_NEAR(y[0], 0.3 * std::cos(1.0) + 0.7 * std::sin(1.0), 1e-15);
  EXPECT_NEAR(y[1], 0.3 * std::sin(1.0) - 0.7 * std::cos(1.0), 1e-15);
  // Second pair of a d=4 vector rotates by pos * 10000^(-1/2).
  const Tensor z = rope_rotate(Tensor({1, 4}, std::vector<double>{0, 0, 1, 0}), {3.0});
  EXPECT_NEAR(z[2], std::cos(3.0 / 100.0), 1e-15);
  EXPECT_NEAR(z[3], std::sin(3.0 / 100.0), 1e-15);
}

TEST(Rope, PreservesPairNorms) {
  const Tensor x = random_tensor({3, 5, 6}, 9);
  const auto [q, k] = rope_apply(x, x, arange_positions(5));
  EXPECT_EQ(q, k);
  for (std::int64_t p = 0; p < x.size(); p += 2) {
    const double a = std::hypot(x[p], x[p + 1]), b = std::hypot(q[p], q[p + 1]);
    EXPECT_NEAR(a, b, 1e-12);
  }
  EXPECT_EQ(code_of([] { rope_rotate(Tensor({1, 3}), {0.0}); }), ErrorCode::kOddDim);
  EXPECT_EQ(code_of([] { rope_rotate(Tensor({2, 2}), {0.0}); }), ErrorCode::kShape);
}

TEST(Attention, HeadsRoundTrip) {
  const Tensor x = random_tensor({2, 3, 6}, 10);
  EXPECT_EQ(merge_heads(split_heads(x, 3)), x);
  EXPECT_EQ(split_heads(x, 3).shape(), (Shape{2, 3, 3, 2}));
}

TEST(Attention, SingleTokenReturnsValue) {
  const Tensor q = random_tensor({1, 1, 1, 4}, 11), v = random_tensor({1, 1, 1, 4}, 12);
  EXPECT_EQ(scaled_dot_product_attention(q, q, v, false).context, v);
}

TEST(Attention, BruteForceOracle) {
  const Tensor q({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  const Tensor k({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor v({1, 1, 2, 2}, std::vector<double>{10, 20, 30, 40});
  const auto r = scaled_dot_product_attention(q, k, v, false);
  const double s = 1.0 / std::sqrt(2.0);
  // Row 0: logits (1, 3) * s; row 1: (2, 4) * s.
  for (int row = 0; row < 2; ++row) {
    const double l0 = (row == 0 ? 1.0 : 2.0) * s, l1 = (row == 0 ? 3.0 : 4.0) * s;
    const double p0 = std::exp(l0) / (std::exp(l0) + std::exp(l1)), p1 = 1.0 - p0;
    EXPECT_NEAR(r.probs[row * 2], p0, 1e-15);
    EXPECT_NEAR(r.context[row * 2], p0 * 10 + p1 * 30, 1e-12);
    EXPECT_NEAR(r.context[row * 2 + 1], p0 * 20 + p1 * 40, 1e-12);
  }
  const auto c = scaled_dot_product_attention(q, k, v, true);
  EXPECT_EQ(c.probs[0], 1.0);
  EXPECT_EQ(c.probs[1], 0.0);
  EXPECT_EQ(c.context[0], 10.0);
}

TEST(Attention, ProbRowsSumToOne) {
  const Tensor q = random_tensor({2, 3, 5, 4}, 13, 3.0), k = random_tensor({2, 3, 5, 4}, 14, 3.0);
  for (bool causal : {false, true}) {
    const auto r = scaled_dot_product_attention(q, k, q, causal);
    for (std::int64_t row = 0; row < 2 * 3 * 5; ++row) {
      double sum = 0;
      for (int j = 0; j < 5; ++j) sum += r.probs[row * 5 + j];
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

MoeWeights identical_experts(const FfnWeights& f, std::int64_t e, const Tensor& router) {
  auto stack = [&](const Tensor& t) {
    Shape shape = t.shape();
    shape.insert(shape.begin(), e);
    Tensor out(shape);
    for (std::int64_t i = 0; i < e; ++i) std::copy(t.data().begin(), t.data().end(), out.data().begin() + i * t.size());
    return out;
  };
  MoeWeights w;
  w.router = router;
  for (std::size_t j = 0; j < f.w1.size(); ++j) {
    w.wi.push_back(stack(f.w1[j]));
    w.bi.push_back(stack(*f.b1[j]));
  }
  w.wo = stack(f.w2);
  w.bo = stack(*f.b2);
  return w;
}

TEST(MoE, IdenticalExpertsEqualFfn) {
  for (std::int64_t e : {2, 4, 8}) {
    FfnWeights f{{random_tensor({6, 10}, 20), random_tensor({6, 10}, 21)},
                 {random_tensor({10}, 22), random_tensor({10}, 23)},
                 random_tensor({10, 6}, 24),
                 random_tensor({6}, 25)};
    const MoeWeights w = identical_experts(f, e, random_tensor({6, e}, 26, 4.0));
    const Tensor x = random_tensor({3, 7, 6}, 27);
    const auto m = moe_forward(x, w, {"linear", "nn.silu"}, std::min<std::int64_t>(2, e));
    const Tensor ref = feed_forward_forward(x, f, {"linear", "nn.silu"});
    for (std::int64_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(m.output[i], ref[i], 1e-12);
  }
}

TEST(MoE, ForcedRoutingPicksExpert) {
  const Tensor wi = random_tensor({2, 3, 4}, 30), wo = random_tensor({2, 4, 3}, 31);
  const Tensor bi({2, 4}), bo({2, 3});
  MoeWeights w{Tensor({3, 2}), {wi}, {bi}, wo, bo};
  // Router bias via a constant feature: x[:, 0] = 1 and router row 0 favors expert 0.
  w.router[0] = 50.0;
  Tensor x = random_tensor({5, 3}, 32, 0.1);
  for (int t = 0; t < 5; ++t) x[t * 3] = 1.0;
  const auto m = moe_forward(x, w, {"nn.gelu"}, 1);
  const Tensor ref = feed_forward_forward(x, expert_weights(w, 0), {"nn.gelu"});
  for (std::int64_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(m.output[i], ref[i], 1e-12);
  for (const auto& idx : m.gate.expert_index) EXPECT_EQ(idx, (std::vector<std::int64_t>{0}));
}

TEST(MoE, GateInvariantsAndLoss) {
  const Tensor logits = random_tensor({40, 8}, 33, 3.0);
  const GateDecision g = route_tokens(logits, 3);
  double f_sum = 0;
  for (double f : g.dispatch_fraction) f_sum += f;
  EXPECT_NEAR(f_sum, 1.0, 1e-12);
  for (const auto& w : g.weight) {
    double s = 0;
    for (double v : w) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Token t prefers expert t: f_e = p_e = 1/E by symmetry.
  Tensor uniform({4, 4});
  for (int t = 0; t < 4; ++t) uniform[t * 4 + t] = 1.0;
  const GateDecision u = route_tokens(uniform, 1);
  EXPECT_DOUBLE_EQ(u.load_balance_loss(), 1.0);
  EXPECT_EQ(code_of([&] { route_tokens(logits, 9); }), ErrorCode::kBadK);
  EXPECT_EQ(code_of([&] { route_tokens(logits, 0); }), ErrorCode::kBadK);
}

}  // namespace
}  // namespace composer::nn
