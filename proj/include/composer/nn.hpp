// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// Reference numerics on float64 tensors. Layer behaviors call into these.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "composer/error.hpp"
#include "composer/tensor.hpp"

namespace composer::nn {

/// y = x W + b over the last axis. `w` is [in, out]; `b` is [out] or null.
inline Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b = nullptr) {
  if (w.rank() != 2) throw Error(ErrorCode::kShape, shape_string(w.shape()), "weight must be rank 2");
  const std::int64_t in = w.dim(0), out = w.dim(1);
  if (x.rank() < 1 || x.dim(-1) != in)
    throw Error(ErrorCode::kShape, shape_string(x.shape()),
                "last dim must be " + std::to_string(in));
  if (b != nullptr && (b->rank() != 1 || b->dim(0) != out))
    throw Error(ErrorCode::kShape, shape_string(b->shape()), "bias must be [" + std::to_string(out) + "]");
  Shape shape = x.shape();
  shape.back() = out;
  Tensor y(shape);
  const std::int64_t rows = x.size() / in;
  const auto xs = x.data();
  const auto ws = w.data();
  auto ys = y.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < in; ++i) acc += xs[r * in + i] * ws[i * out + j];
      if (b != nullptr) acc += (*b)[j];
      ys[r * out + j] = acc;
    }
  }
  return y;
}

/// y_i = x_i / sqrt(mean(x^2) + eps) * scale_i over the last axis.
inline Tensor rmsnorm_forward(const Tensor& x, const Tensor& scale, double eps) {
  if (scale.rank() != 1 || x.rank() < 1 || x.dim(-1) != scale.dim(0))
    throw Error(ErrorCode::kShape, shape_string(x.shape()),
                "scale " + shape_string(scale.shape()) + " does not match last dim");
  const std::int64_t d = scale.dim(0);
  Tensor y(x.shape());
  const std::int64_t rows = x.size() / d;
  for (std::int64_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::int64_t i = 0; i < d; ++i) ss += x[r * d + i] * x[r * d + i];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    for (std::int64_t i = 0; i < d; ++i) y[r * d + i] = x[r * d + i] * inv * scale[i];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Drops an optional "nn." prefix.
inline std::string_view activation_base_name(std::string_view name) {
  if (name.starts_with("nn.")) name.remove_prefix(3);
  return name;
}

inline bool is_known_activation(std::string_view name) {
  auto n = activation_base_name(name);
  return n == "linear" || n == "relu" || n == "silu" || n == "gelu" || n == "tanh" || n == "sigmoid";
}

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

inline double activate(std::string_view name, double v) {
  auto n = activation_base_name(name);
  if (n == "linear") return v;
  if (n == "relu") return v > 0.0 ? v : 0.0;
  if (n == "silu") return silu(v);
  if (n == "gelu") return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  if (n == "tanh") return std::tanh(v);
  if (n == "sigmoid") return 1.0 / (1.0 + std::exp(-v));
  throw Error(ErrorCode::kUnknownActivation, std::string(name));
}

inline Tensor apply_activation(std::string_view name, Tensor x) {
  if (!is_known_activation(name)) throw Error(ErrorCode::kUnknownActivation, std::string(name));
  for (auto& v : x.data()) v = activate(name, v);
  return x;
}

// ---------------------------------------------------------------------------
// Feed-forward
// ---------------------------------------------------------------------------

/// One branch per activation in `w1`/`b1`, then the output projection.
struct FfnWeights {
  std::vector<Tensor> w1;
  std::vector<std::optional<Tensor>> b1;
  Tensor w2;
  std::optional<Tensor> b2;
};

/// Single activation: W2(act(W1 x)). Several activations are gated: the
/// branch outputs act_i(W1_i x) are multiplied elementwise before W2, so
/// ("linear", "silu") gives W2((W1_0 x) * silu(W1_1 x)).
inline Tensor feed_forward_forward(const Tensor& x, const FfnWeights& w,
                                   const std::vector<std::string>& activation) {
  if (activation.empty() || activation.size() != w.w1.size() || w.b1.size() != w.w1.size())
    throw Error(ErrorCode::kShape, "feed_forward", "one input projection per activation required");
  std::optional<Tensor> gated;
  for (std::size_t i = 0; i < activation.size(); ++i) {
    const Tensor* bias = w.b1[i] ? &*w.b1[i] : nullptr;
    Tensor h = apply_activation(activation[i], linear_forward(x, w.w1[i], bias));
    if (!gated) {
      gated = std::move(h);
    } else {
      for (std::int64_t j = 0; j < h.size(); ++j) (*gated)[j] *= h[j];
    }
  }
  return linear_forward(*gated, w.w2, w.b2 ? &*w.b2 : nullptr);
}

// ---------------------------------------------------------------------------
// Rotary position embedding
// ---------------------------------------------------------------------------

inline constexpr double kRopeTheta = 10000.0;

/// Rotates each adjacent pair (x[2i], x[2i+1]) of the last axis by
/// pos * theta^(-2i/d), where pos is the position of the row along axis -2.
inline Tensor rope_rotate(const Tensor& x, const std::vector<double>& positions,
                          double theta = kRopeTheta) {
  if (x.rank() < 2) throw Error(ErrorCode::kShape, shape_string(x.shape()), "expected [..., T, d]");
  const std::int64_t d = x.dim(-1), t = x.dim(-2);
  if (d % 2 != 0) throw Error(ErrorCode::kOddDim, std::to_string(d));
  if (static_cast<std::int64_t>(positions.size()) != t)
    throw Error(ErrorCode::kShape, shape_string(x.shape()),
                std::to_string(positions.size()) + " positions for " + std::to_string(t) + " rows");
  Tensor y(x.shape());
  const std::int64_t rows = x.size() / d;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double pos = positions[static_cast<std::size_t>(r % t)];
    for (std::int64_t i = 0; i < d / 2; ++i) {
      const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = pos * freq;
      const double c = std::cos(angle), s = std::sin(angle);
      const double a = x[r * d + 2 * i], b = x[r * d + 2 * i + 1];
      y[r * d + 2 * i] = a * c - b * s;
      y[r * d + 2 * i + 1] = a * s + b * c;
    }
  }
  return y;
}

inline std::pair<Tensor, Tensor> rope_apply(const Tensor& q, const Tensor& k,
                                            const std::vector<double>& positions,
                                            double theta = kRopeTheta) {
  return {rope_rotate(q, positions, theta), rope_rotate(k, positions, theta)};
}

inline std::vector<double> arange_positions(std::int64_t n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// [B, T, H*dh] -> [B, H, T, dh].
inline Tensor split_heads(const Tensor& x, std::int64_t heads) {
  if (x.rank() != 3 || heads <= 0 || x.dim(2) % heads != 0)
    throw Error(ErrorCode::kShape, shape_string(x.shape()),
                "cannot split into " + std::to_string(heads) + " heads");
  const std::int64_t b = x.dim(0), t = x.dim(1), dh = x.dim(2) / heads;
  Tensor y({b, heads, t, dh});
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t ti = 0; ti < t; ++ti)
      for (std::int64_t h = 0; h < heads; ++h)
        for (std::int64_t e = 0; e < dh; ++e)
          y[((bi * heads + h) * t + ti) * dh + e] = x[(bi * t + ti) * heads * dh + h * dh + e];
  return y;
}

/// [B, H, T, dh] -> [B, T, H*dh].
inline Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 4) throw Error(ErrorCode::kShape, shape_string(x.shape()), "expected [B,H,T,dh]");
  const std::int64_t b = x.dim(0), heads = x.dim(1), t = x.dim(2), dh = x.dim(3);
  Tensor y({b, t, heads * dh});
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t h = 0; h < heads; ++h)
      for (std::int64_t ti = 0; ti < t; ++ti)
        for (std::int64_t e = 0; e < dh; ++e)
          y[(bi * t + ti) * heads * dh + h * dh + e] = x[((bi * heads + h) * t + ti) * dh + e];
  return y;
}

struct AttentionResult {
  Tensor context;  // [B, H, T, dh]
  Tensor probs;    // [B, H, T, T]
};

/// softmax(q k^T / sqrt(dh)) v per head; masked above the diagonal when causal.
inline AttentionResult scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                                    bool causal) {
  if (q.rank() != 4 || q.shape() != k.shape() || q.shape() != v.shape())
    throw Error(ErrorCode::kShape, shape_string(q.shape()), "q, k, v must share shape [B,H,T,dh]");
  const std::int64_t bh = q.dim(0) * q.dim(1), t = q.dim(2), dh = q.dim(3);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionResult out{Tensor(q.shape()), Tensor({q.dim(0), q.dim(1), t, t})};
  std::vector<double> logits(static_cast<std::size_t>(t));
  for (std::int64_t g = 0; g < bh; ++g) {
    for (std::int64_t i = 0; i < t; ++i) {
      const std::int64_t limit = causal ? i + 1 : t;
      double mx = -INFINITY;
      for (std::int64_t j = 0; j < limit; ++j) {
        double acc = 0.0;
        for (std::int64_t e = 0; e < dh; ++e) acc += q[(g * t + i) * dh + e] * k[(g * t + j) * dh + e];
        logits[j] = acc * scale;
        mx = std::max(mx, logits[j]);
      }
      double denom = 0.0;
      for (std::int64_t j = 0; j < limit; ++j) {
        logits[j] = std::exp(logits[j] - mx);
        denom += logits[j];
      }
      for (std::int64_t j = 0; j < t; ++j)
        out.probs[(g * t + i) * t + j] = j < limit ? logits[j] / denom : 0.0;
      for (std::int64_t e = 0; e < dh; ++e) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < limit; ++j)
          acc += out.probs[(g * t + i) * t + j] * v[(g * t + j) * dh + e];
        out.context[(g * t + i) * dh + e] = acc;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mixture of experts
// ---------------------------------------------------------------------------

/// Expert weights stacked on a leading expert axis.
/// router [D, E]; wi[j] [E, D, H]; bi[j] [E, H]; wo [E, H, D]; bo [E, D].
struct MoeWeights {
  Tensor router;
  std::vector<Tensor> wi;
  std::vector<Tensor> bi;
  Tensor wo;
  Tensor bo;
};

/// Top-k routing for a batch of tokens.
struct GateDecision {
  std::int64_t num_experts = 0;
  std::int64_t top_k = 0;
  std::vector<std::vector<std::int64_t>> expert_index;  // [N][k]
  std::vector<std::vector<double>> weight;              // [N][k], rows sum to 1
  std::vector<double> dispatch_fraction;                // f_e, sums to 1
  std::vector<double> mean_prob;                        // p_e

  /// E * sum_e f_e * p_e; equals 1 under perfectly uniform routing.
  double load_balance_loss() const {
    double acc = 0.0;
    for (std::int64_t e = 0; e < num_experts; ++e) acc += dispatch_fraction[e] * mean_prob[e];
    return static_cast<double>(num_experts) * acc;
  }
};

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = -INFINITY;
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    denom += out[i];
  }
  for (auto& v : out) v /= denom;
  return out;
}

/// Softmax over router logits [N, E], keeps the k largest probabilities per
/// token (ties to the lower expert index) and renormalizes them.
inline GateDecision route_tokens(const Tensor& logits, std::int64_t top_k) {
  if (logits.rank() != 2) throw Error(ErrorCode::kShape, shape_string(logits.shape()), "expected [N, E]");
  const std::int64_t n = logits.dim(0), e = logits.dim(1);
  if (top_k < 1 || top_k > e)
    throw Error(ErrorCode::kBadK, std::to_string(top_k), "top_k must be in [1, " + std::to_string(e) + "]");
  GateDecision g;
  g.num_experts = e;
  g.top_k = top_k;
  g.dispatch_fraction.assign(static_cast<std::size_t>(e), 0.0);
  g.mean_prob.assign(static_cast<std::size_t>(e), 0.0);
  std::vector<std::int64_t> order(static_cast<std::size_t>(e));
  for (std::int64_t t = 0; t < n; ++t) {
    auto probs = softmax(logits.data().subspan(static_cast<std::size_t>(t * e), static_cast<std::size_t>(e)));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return probs[a] > probs[b]; });
    std::vector<std::int64_t> idx(order.begin(), order.begin() + top_k);
    double total = 0.0;
    for (auto i : idx) total += probs[i];
    std::vector<double> w;
    for (auto i : idx) w.push_back(probs[i] / total);
    for (auto i : idx) g.dispatch_fraction[i] += 1.0;
    for (std::int64_t i = 0; i < e; ++i) g.mean_prob[i] += probs[i];
    g.expert_index.push_back(std::move(idx));
    g.weight.push_back(std::move(w));
  }
  for (auto& f : g.dispatch_fraction) f /= static_cast<double>(n * top_k);
  for (auto& p : g.mean_prob) p /= static_cast<double>(n);
  return g;
}

struct MoeResult {
  Tensor output;
  GateDecision gate;
};

/// Slice [e] of a tensor stacked on a leading expert axis.
inline Tensor expert_slice(const Tensor& stacked, std::int64_t e) {
  Shape shape(stacked.shape().begin() + 1, stacked.shape().end());
  const std::int64_t n = num_elements(shape);
  std::vector<double> data(stacked.data().begin() + e * n, stacked.data().begin() + (e + 1) * n);
  return Tensor(std::move(shape), std::move(data));
}

/// Expert e as plain feed-forward weights.
inline FfnWeights expert_weights(const MoeWeights& w, std::int64_t e) {
  FfnWeights f;
  for (std::size_t j = 0; j < w.wi.size(); ++j) {
    f.w1.push_back(expert_slice(w.wi[j], e));
    f.b1.emplace_back(expert_slice(w.bi[j], e));
  }
  f.w2 = expert_slice(w.wo, e);
  f.b2 = expert_slice(w.bo, e);
  return f;
}

/// y = sum over the selected experts of weight * expert(x). Same input and
/// output contract as feed_forward_forward.
inline MoeResult moe_forward(const Tensor& x, const MoeWeights& w,
                             const std::vector<std::string>& activation, std::int64_t top_k) {
  if (w.router.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.router.dim(0))
    throw Error(ErrorCode::kShape, shape_string(x.shape()), "input does not match router");
  const std::int64_t d = w.router.dim(0), num_experts = w.router.dim(1);
  const std::int64_t n = x.size() / d;
  const Tensor tokens = x.reshaped({n, d});
  MoeResult out{Tensor(x.shape()), route_tokens(linear_forward(tokens, w.router), top_k)};

  std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(num_experts));
  for (std::int64_t t = 0; t < n; ++t)
    for (auto e : out.gate.expert_index[t]) members[e].push_back(t);
  for (std::int64_t e = 0; e < num_experts; ++e) {
    if (members[e].empty()) continue;
    const auto& rows = members[e];
    Tensor batch({static_cast<std::int64_t>(rows.size()), d});
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(tokens.data().begin() + rows[r] * d, d, batch.data().begin() + static_cast<std::int64_t>(r) * d);
    const Tensor y = feed_forward_forward(batch, expert_weights(w, e), activation);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::int64_t t = rows[r];
      const auto& idx = out.gate.expert_index[t];
      const double weight = out.gate.weight[t][std::find(idx.begin(), idx.end(), e) - idx.begin()];
      for (std::int64_t i = 0; i < d; ++i) out.output[t * d + i] += weight * y[static_cast<std::int64_t>(r) * d + i];
    }
  }
  return out;
}

}  // namespace composer::nn
