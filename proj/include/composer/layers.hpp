// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// Builtin module kinds. Each kind is a schema in the config Registry plus a
// stateless behavior in the LayerRegistry, joined by factory id.
//
//   Linear, RMSNorm, NoPos, RoPE, Attention, FeedForward, MoE,
//   TransformerLayer, StackedTransformer, Embedding, LmHead, Decoder,
//   CausalLM, Trainer
//
// Parents only talk to children through the propagated fields below, which
// is what lets FeedForward/MoE and NoPos/RoPE swap by config alone.

#pragma once

#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "composer/config.hpp"
#include "composer/module.hpp"
#include "composer/nn.hpp"
#include "composer/sharding.hpp"

namespace composer::layers {

inline constexpr std::string_view kLinear = "Linear";
inline constexpr std::string_view kRMSNorm = "RMSNorm";
inline constexpr std::string_view kNoPos = "NoPos";
inline constexpr std::string_view kRoPE = "RoPE";
inline constexpr std::string_view kAttention = "Attention";
inline constexpr std::string_view kFeedForward = "FeedForward";
inline constexpr std::string_view kMoE = "MoE";
inline constexpr std::string_view kTransformerLayer = "TransformerLayer";
inline constexpr std::string_view kStackedTransformer = "StackedTransformer";
inline constexpr std::string_view kEmbedding = "Embedding";
inline constexpr std::string_view kLmHead = "LmHead";
inline constexpr std::string_view kDecoder = "Decoder";
inline constexpr std::string_view kCausalLM = "CausalLM";
inline constexpr std::string_view kTrainer = "Trainer";

/// Bytes per element for a dtype tag.
inline std::int64_t dtype_bytes(std::string_view dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "bf16") return 2;
  if (dtype == "int8" || dtype == "fp8") return 1;
  throw Error(ErrorCode::kInvalidArgument, std::string(dtype), "unknown dtype");
}

inline std::vector<std::string> text_list(const ConfigValue& v) {
  std::vector<std::string> out;
  for (const auto& item : v.as_sequence()) out.push_back(item.as_text());
  return out;
}

namespace detail {

inline void require_positive(const ConfigNode& cfg, const std::string& path,
                             std::initializer_list<std::string_view> fields) {
  for (auto f : fields)
    if (cfg.get(f).as_int() <= 0)
      throw Error(ErrorCode::kShape, join_path(path, f), "must be positive");
}

inline void check_activation(const ConfigNode& cfg, const std::string& path) {
  const auto acts = text_list(cfg.get("activation"));
  if (acts.empty()) throw Error(ErrorCode::kUnknownActivation, join_path(path, "activation"), "empty");
  for (const auto& a : acts)
    if (!nn::is_known_activation(a)) throw Error(ErrorCode::kUnknownActivation, a);
}

inline Tensor require_rank(const Tensor& x, std::int64_t rank, const std::string& who) {
  if (x.rank() != rank)
    throw Error(ErrorCode::kShape, who, "expected rank " + std::to_string(rank) + ", got " + shape_string(x.shape()));
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------

class LinearLayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"input_dim", "output_dim"});
    (void)partition_spec_from_config(cfg.get("param_partition_spec"), 2);
    (void)dtype_bytes(cfg.get("dtype").as_text());
  }
  std::vector<ParamSpec> params(const ModuleTree& self) const override {
    const auto in = self.int_field("input_dim"), out = self.int_field("output_dim");
    const auto spec = partition_spec_from_config(self.config.get("param_partition_spec"), 2);
    const auto& dtype = self.text_field("dtype");
    std::vector<ParamSpec> p{{"weight", {in, out}, spec, ParamInit::kUniformFanIn, in, dtype}};
    if (self.bool_field("bias")) p.push_back({"bias", {out}, infer_bias_spec(spec), ParamInit::kZeros, 1, dtype});
    return p;
  }
  std::int64_t own_flops(const ModuleTree& self, const Workload& w) const override {
    return 2 * w.tokens() * self.int_field("input_dim") * self.int_field("output_dim");
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    return nn::linear_forward(x, param("weight"), self.bool_field("bias") ? &param("bias") : nullptr);
  }
};

class RMSNormLayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"input_dim"});
  }
  std::vector<ParamSpec> params(const ModuleTree& self) const override {
    const auto d = self.int_field("input_dim");
    return {{"scale", {d}, PartitionSpec::unsharded(1), ParamInit::kOnes, 1, "f32"}};
  }
  std::vector<std::string> tag_names(const ConfigNode&) const override { return {"norm"}; }
  std::vector<RematTag> remat_tags(const ModuleTree& self, const Workload& w) const override {
    const auto d = self.int_field("input_dim");
    return {{"norm", w.tokens() * d * w.activation_bytes, 4 * w.tokens() * d}};
  }
  std::int64_t own_flops(const ModuleTree& self, const Workload& w) const override {
    return 4 * w.tokens() * self.int_field("input_dim");
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    return nn::rmsnorm_forward(x, param("scale"), self.float_field("eps"));
  }
};

/// Positional slot that leaves q and k unchanged.
class NoPosLayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"dim"});
  }
  Tensor forward(const ModuleTree&, const Tensor& x) const override { return x; }
};

/// Rotary embedding over [..., T, d]; positions are 0..T-1.
class RoPELayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"dim"});
    if (cfg.get("dim").as_int() % 2 != 0)
      throw Error(ErrorCode::kOddDim, join_path(path, "dim"), std::to_string(cfg.get("dim").as_int()));
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    if (x.dim(-1) != self.int_field("dim"))
      throw Error(ErrorCode::kShape, self.path, "expected last dim " + std::to_string(self.int_field("dim")));
    return nn::rope_rotate(x, nn::arange_positions(x.dim(-2)), self.float_field("theta"));
  }
};

class AttentionLayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"input_dim", "num_heads"});
    if (cfg.get("input_dim").as_int() % cfg.get("num_heads").as_int() != 0)
      throw Error(ErrorCode::kShape, join_path(path, "num_heads"), "input_dim not divisible by num_heads");
  }
  std::vector<ChildConfig> children(const ConfigNode& cfg, const std::string&) const override {
    const auto d = cfg.get("input_dim").as_int();
    const auto heads = cfg.get("num_heads").as_int();
    std::vector<ChildConfig> out;
    for (const char* proj : {"q_proj", "k_proj", "v_proj", "o_proj"}) {
      ConfigNode c = propagate(cfg.get(proj).as_node(), "input_dim", d);
      out.push_back({proj, propagate(c, "output_dim", d)});
    }
    out.push_back({"pos_emb", propagate(cfg.get("pos_emb").as_node(), "dim", d / heads)});
    return out;
  }
  std::vector<std::string> tag_names(const ConfigNode&) const override {
    return {"q_proj", "k_proj", "v_proj", "o_proj", "context"};
  }
  std::vector<RematTag> remat_tags(const ModuleTree& self, const Workload& w) const override {
    const auto d = self.int_field("input_dim");
    const std::int64_t bytes = w.tokens() * d * w.activation_bytes;
    const std::int64_t proj_flops = 2 * w.tokens() * d * d;
    return {{"q_proj", bytes, proj_flops},
            {"k_proj", bytes, proj_flops},
            {"v_proj", bytes, proj_flops},
            {"o_proj", bytes, proj_flops},
            {"context", bytes, own_flops(self, w)}};
  }
  std::int64_t own_flops(const ModuleTree& self, const Workload& w) const override {
    return 4 * w.batch * w.seq_len * w.seq_len * self.int_field("input_dim");
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    detail::require_rank(x, 3, self.path);
    const auto heads = self.int_field("num_heads");
    Tensor q = nn::split_heads(call_child("q_proj", x), heads);
    Tensor k = nn::split_heads(call_child("k_proj", x), heads);
    Tensor v = nn::split_heads(call_child("v_proj", x), heads);
    q = call_child("pos_emb", q);
    k = call_child("pos_emb", k);
    auto attn = nn::scaled_dot_product_attention(q, k, v, self.bool_field("causal"));
    return call_child("o_proj", nn::merge_heads(attn.context));
  }
};

class FeedForwardLayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"input_dim", "hidden_dim"});
    detail::check_activation(cfg, path);
  }
  std::vector<ChildConfig> children(const ConfigNode& cfg, const std::string&) const override {
    const auto d = cfg.get("input_dim").as_int();
    const auto h = cfg.get("hidden_dim").as_int();
    const auto acts = text_list(cfg.get("activation"));
    std::vector<ChildConfig> out;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      ConfigNode c = propagate(cfg.get("linear1").as_node(), "input_dim", d);
      out.push_back({"linear1_" + std::to_string(i), propagate(c, "output_dim", h)});
    }
    ConfigNode c = propagate(cfg.get("linear2").as_node(), "input_dim", h);
    out.push_back({"linear2", propagate(c, "output_dim", d)});
    return out;
  }
  std::vector<std::string> tag_names(const ConfigNode& cfg) const override {
    std::vector<std::string> out;
    const std::size_t n = cfg.get("activation").is_sequence() ? cfg.get("activation").as_sequence().size() : 1;
    for (std::size_t i = 0; i < n; ++i) out.push_back("linear1_" + std::to_string(i));
    out.push_back("linear2");
    return out;
  }
  std::vector<RematTag> remat_tags(const ModuleTree& self, const Workload& w) const override {
    const auto d = self.int_field("input_dim"), h = self.int_field("hidden_dim");
    std::vector<RematTag> out;
    const auto n = self.config.get("activation").as_sequence().size();
    for (std::size_t i = 0; i < n; ++i)
      out.push_back({"linear1_" + std::to_string(i), w.tokens() * h * w.activation_bytes, 2 * w.tokens() * d * h});
    out.push_back({"linear2", w.tokens() * d * w.activation_bytes, 2 * w.tokens() * h * d});
    return out;
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    const auto acts = text_list(self.config.get("activation"));
    std::optional<Tensor> gated;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      Tensor h = nn::apply_activation(acts[i], call_child("linear1_" + std::to_string(i), x));
      if (!gated) {
        gated = std::move(h);
      } else {
        for (std::int64_t j = 0; j < h.size(); ++j) (*gated)[j] *= h[j];
      }
    }
    return call_child("linear2", *gated);
  }
};

/// Mixture of experts with the FeedForward interface. Each expert has the
/// shape of a FeedForward with biased linears; weights are stacked on a
/// leading expert axis.
class MoELayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"input_dim", "hidden_dim", "num_experts"});
    detail::check_activation(cfg, path);
    const auto k = cfg.get("top_k").as_int();
    if (k < 1 || k > cfg.get("num_experts").as_int())
      throw Error(ErrorCode::kBadK, join_path(path, "top_k"), "top_k must be in [1, num_experts]");
    (void)dtype_bytes(cfg.get("dtype").as_text());
  }
  std::vector<ParamSpec> params(const ModuleTree& self) const override {
    const auto d = self.int_field("input_dim"), h = self.int_field("hidden_dim");
    const auto e = self.int_field("num_experts");
    const auto& dtype = self.text_field("dtype");
    const std::string& axis = self.text_field("expert_axis");
    auto stacked = [&](std::size_t rank) {
      PartitionSpec s = PartitionSpec::unsharded(rank);
      if (!axis.empty()) s.dims[0] = axis;
      return s;
    };
    std::vector<ParamSpec> p{{"router_weight", {d, e}, PartitionSpec::unsharded(2), ParamInit::kUniformFanIn, d, dtype}};
    const auto n = self.config.get("activation").as_sequence().size();
    for (std::size_t j = 0; j < n; ++j) {
      p.push_back({"wi_" + std::to_string(j), {e, d, h}, stacked(3), ParamInit::kUniformFanIn, d, dtype});
      p.push_back({"bi_" + std::to_string(j), {e, h}, stacked(2), ParamInit::kZeros, 1, dtype});
    }
    p.push_back({"wo", {e, h, d}, stacked(3), ParamInit::kUniformFanIn, h, dtype});
    p.push_back({"bo", {e, d}, stacked(2), ParamInit::kZeros, 1, dtype});
    return p;
  }
  std::vector<std::string> tag_names(const ConfigNode&) const override {
    return {"router", "expert_hidden", "expert_output"};
  }
  std::vector<RematTag> remat_tags(const ModuleTree& self, const Workload& w) const override {
    const auto d = self.int_field("input_dim"), h = self.int_field("hidden_dim");
    const auto e = self.int_field("num_experts"), k = self.int_field("top_k");
    const auto branches = static_cast<std::int64_t>(self.config.get("activation").as_sequence().size());
    return {{"router", w.tokens() * e * w.activation_bytes, 2 * w.tokens() * d * e},
            {"expert_hidden", w.tokens() * k * h * w.activation_bytes, branches * 2 * w.tokens() * k * d * h},
            {"expert_output", w.tokens() * k * d * w.activation_bytes, 2 * w.tokens() * k * h * d}};
  }
  std::int64_t own_flops(const ModuleTree& self, const Workload& w) const override {
    const auto d = self.int_field("input_dim"), h = self.int_field("hidden_dim");
    const auto e = self.int_field("num_experts"), k = self.int_field("top_k");
    const auto branches = static_cast<std::int64_t>(self.config.get("activation").as_sequence().size());
    return 2 * w.tokens() * d * e + k * (branches * 2 * w.tokens() * d * h + 2 * w.tokens() * h * d);
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    nn::MoeWeights w;
    w.router = param("router_weight");
    const auto n = self.config.get("activation").as_sequence().size();
    for (std::size_t j = 0; j < n; ++j) {
      w.wi.push_back(param("wi_" + std::to_string(j)));
      w.bi.push_back(param("bi_" + std::to_string(j)));
    }
    w.wo = param("wo");
    w.bo = param("bo");
    auto result = nn::moe_forward(x, w, text_list(self.config.get("activation")), self.int_field("top_k"));
    add_summary("load_balance_loss", result.gate.load_balance_loss());
    return std::move(result.output);
  }
};

/// Pre-norm residual block: h = x + attn(norm(x)); y = h + ffn(norm(h)).
class TransformerLayerImpl : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"input_dim"});
  }
  std::vector<ChildConfig> children(const ConfigNode& cfg, const std::string&) const override {
    const auto d = cfg.get("input_dim").as_int();
    return {{"self_attention", propagate(cfg.get("self_attention").as_node(), "input_dim", d)},
            {"feed_forward", propagate(cfg.get("feed_forward").as_node(), "input_dim", d)}};
  }
  std::vector<ParamSpec> params(const ModuleTree& self) const override {
    const auto d = self.int_field("input_dim");
    return {{"attn_norm_scale", {d}, PartitionSpec::unsharded(1), ParamInit::kOnes, 1, "f32"},
            {"ffn_norm_scale", {d}, PartitionSpec::unsharded(1), ParamInit::kOnes, 1, "f32"}};
  }
  std::vector<std::string> tag_names(const ConfigNode&) const override { return {"attn_norm", "ffn_norm"}; }
  std::vector<RematTag> remat_tags(const ModuleTree& self, const Workload& w) const override {
    const auto d = self.int_field("input_dim");
    return {{"attn_norm", w.tokens() * d * w.activation_bytes, 4 * w.tokens() * d},
            {"ffn_norm", w.tokens() * d * w.activation_bytes, 4 * w.tokens() * d}};
  }
  std::int64_t own_flops(const ModuleTree& self, const Workload& w) const override {
    return 8 * w.tokens() * self.int_field("input_dim");
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    const double eps = self.float_field("norm_eps");
    Tensor h = x;
    const Tensor a = call_child("self_attention", nn::rmsnorm_forward(x, param("attn_norm_scale"), eps));
    if (a.shape() != x.shape()) throw Error(ErrorCode::kShape, self.path, "attention changed the shape");
    for (std::int64_t i = 0; i < h.size(); ++i) h[i] += a[i];
    Tensor y = h;
    const Tensor f = call_child("feed_forward", nn::rmsnorm_forward(h, param("ffn_norm_scale"), eps));
    if (f.shape() != x.shape()) throw Error(ErrorCode::kShape, self.path, "feed-forward changed the shape");
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] += f[i];
    return y;
  }
};

class StackedTransformerLayer : public Layer {
 public:
  std::vector<ChildConfig> children(const ConfigNode& cfg, const std::string&) const override {
    const auto d = cfg.get("input_dim").as_int();
    std::vector<ChildConfig> out;
    const auto& layers = cfg.get("layer").as_sequence();
    for (std::size_t i = 0; i < layers.size(); ++i)
      out.push_back({index_path("layer", i), propagate(layers[i].as_node(), "input_dim", d)});
    return out;
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    Tensor h = x;
    for (const auto& c : self.children) h = call_child(c.name, h);
    return h;
  }
};

/// Token ids [B, T] (stored as doubles) to vectors [B, T, D].
class EmbeddingLayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"vocab_size", "dim"});
    (void)partition_spec_from_config(cfg.get("param_partition_spec"), 2);
    (void)dtype_bytes(cfg.get("dtype").as_text());
  }
  std::vector<ParamSpec> params(const ModuleTree& self) const override {
    const auto v = self.int_field("vocab_size"), d = self.int_field("dim");
    return {{"weight", {v, d}, partition_spec_from_config(self.config.get("param_partition_spec"), 2),
             ParamInit::kUniformFanIn, d, self.text_field("dtype")}};
  }
  Tensor forward(const ModuleTree& self, const Tensor& ids) const override {
    detail::require_rank(ids, 2, self.path);
    const auto v = self.int_field("vocab_size"), d = self.int_field("dim");
    const Tensor& table = param("weight");
    Tensor y({ids.dim(0), ids.dim(1), d});
    for (std::int64_t i = 0; i < ids.size(); ++i) {
      const double raw = ids[i];
      const auto id = static_cast<std::int64_t>(raw);
      if (raw != static_cast<double>(id) || id < 0 || id >= v)
        throw Error(ErrorCode::kShape, self.path, "token id out of range");
      std::copy_n(table.data().begin() + id * d, d, y.data().begin() + i * d);
    }
    return y;
  }
};

/// Logits [B, T, V] = x W^T. With `tied_weight_path` set, W is read from that
/// module's state through the context instead of being owned here.
class LmHeadLayer : public Layer {
 public:
  void validate(const ConfigNode& cfg, const std::string& path) const override {
    detail::require_positive(cfg, path, {"vocab_size", "dim"});
  }
  std::vector<ParamSpec> params(const ModuleTree& self) const override {
    if (!self.text_field("tied_weight_path").empty()) return {};
    const auto v = self.int_field("vocab_size"), d = self.int_field("dim");
    return {{"weight", {v, d}, PartitionSpec::unsharded(2), ParamInit::kUniformFanIn, d, "f32"}};
  }
  std::vector<std::string> tag_names(const ConfigNode&) const override { return {"logits"}; }
  std::vector<RematTag> remat_tags(const ModuleTree& self, const Workload& w) const override {
    const auto v = self.int_field("vocab_size"), d = self.int_field("dim");
    return {{"logits", w.tokens() * v * w.activation_bytes, 2 * w.tokens() * d * v}};
  }
  std::int64_t own_flops(const ModuleTree& self, const Workload& w) const override {
    return 2 * w.tokens() * self.int_field("dim") * self.int_field("vocab_size");
  }
  Tensor forward(const ModuleTree& self, const Tensor& x) const override {
    const std::string& tied = self.text_field("tied_weight_path");
    const Tensor& w = tied.empty() ? param("weight") : get_shared_param(tied);
    const auto v = self.int_field("vocab_size"), d = self.int_field("dim");
    if (w.shape() != Shape{v, d} || x.dim(-1) != d)
      throw Error(ErrorCode::kShape, self.path, "output weights do not match [vocab, dim]");
    Shape shape = x.shape();
    shape.back() = v;
    Tensor y(shape);
    const std::int64_t rows = x.size() / d;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < v; ++j) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < d; ++i) acc += x[r * d + i] * w[j * d + i];
        y[r * v + j] = acc;
      }
    return y;
  }
};

class DecoderLayer : public Layer {
 public:
  std::vector<ChildConfig> children(const ConfigNode& cfg, const std::string& path) const override {
    const auto v = cfg.get("vocab_size").as_int(), d = cfg.get("dim").as_int();
    ConfigNode emb = propagate(propagate(cfg.get("emb").as_node(), "vocab_size", v), "dim", d);
    ConfigNode head = propagate(propagate(cfg.get("lm_head").as_node(), "vocab_size", v), "dim", d);
    head = propagate(head, "tied_weight_path",
                     cfg.get("tie_embeddings").as_bool() ? join_path(path, "emb") + "/weight" : std::string());
    return {{"emb", emb},
            {"transformer", propagate(cfg.get("transformer").as_node(), "input_dim", d)},
            {"output_norm", propagate(cfg.get("output_norm").as_node(), "input_dim", d)},
            {"lm_head", head}};
  }
  Tensor forward(const ModuleTree&, const Tensor& ids) const override {
    Tensor h = call_child("emb", ids);
    h = call_child("transformer", h);
    h = call_child("output_norm", h);
    return call_child("lm_head", h);
  }
};

/// Decoder plus a next-token cross-entropy summary "loss".
class CausalLMLayer : public Layer {
 public:
  Tensor forward(const ModuleTree&, const Tensor& ids) const override {
    Tensor logits = call_child("decoder", ids);
    const std::int64_t b = ids.dim(0), t = ids.dim(1), v = logits.dim(-1);
    if (t >= 2) {
      double total = 0.0;
      for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ti = 0; ti + 1 < t; ++ti) {
          const auto row = logits.data().subspan(static_cast<std::size_t>((bi * t + ti) * v), static_cast<std::size_t>(v));
          const auto probs = nn::softmax(row);
          const auto target = static_cast<std::size_t>(ids[bi * t + ti + 1]);
          total -= std::log(probs[target]);
        }
      add_summary("loss", total / static_cast<double>(b * (t - 1)));
    }
    return logits;
  }
};

class TrainerLayer : public Layer {
 public:
  std::vector<ChildConfig> children(const ConfigNode& cfg, const std::string&) const override {
    return {{"model", cfg.get("model").as_node()}};
  }
  Tensor forward(const ModuleTree&, const Tensor& x) const override { return call_child("model", x); }
};

/// Options produced by the "adamw" factory adapter.
struct AdamWOptions {
  double learning_rate = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
};

// ---------------------------------------------------------------------------
// Registration
// ---------------------------------------------------------------------------

/// round(scale * input_dim), halves away from zero.
inline ConfigValue scaled_hidden_dim(const FunctionSpec& spec, const ConfigNode& owner) {
  auto it = spec.args.find("scale");
  if (it == spec.args.end()) throw Error(ErrorCode::kResolve, "scale", "missing argument");
  const double scale = std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, double>) {
          return static_cast<double>(v);
        } else {
          throw Error(ErrorCode::kResolve, "scale", "must be numeric");
        }
      },
      it->second);
  const ConfigValue& input = owner.get("input_dim");
  if (!input.is_int()) throw Error(ErrorCode::kResolve, "input_dim", "input_dim is not set");
  return static_cast<std::int64_t>(std::llround(scale * static_cast<double>(input.as_int())));
}

inline FunctionSpec scaled_hidden_dim_spec(double scale) {
  return FunctionSpec{"scaled_hidden_dim", {{"scale", scale}}};
}

inline std::vector<FieldSpec> adamw_params() {
  return {FieldSpec::required("lr", ValueKind::kFloat), FieldSpec::value("beta1", ValueKind::kFloat, 0.9),
          FieldSpec::value("beta2", ValueKind::kFloat, 0.999)};
}

namespace detail {

inline FieldSpec remat_field() { return FieldSpec::value("remat_policy", ValueKind::kSequence, Sequence{}); }

inline void register_into(Registry& reg, LayerRegistry& layers) {
  using F = FieldSpec;
  using V = ValueKind;
  auto add = [&](std::string_view kind, std::vector<FieldSpec> fields, std::shared_ptr<const Layer> layer) {
    const std::string factory = "layers." + std::string(kind);
    reg.register_component(ComponentSchema{std::string(kind), std::move(fields), factory});
    layers.add(factory, std::move(layer));
  };

  reg.register_function("scaled_hidden_dim", scaled_hidden_dim);
  reg.register_factory("adamw", [](const std::map<std::string, ConfigValue>& f) -> std::any {
    return AdamWOptions{f.at("lr").as_double(), f.at("beta1").as_double(), f.at("beta2").as_double()};
  });
  (void)config_from_factory("adamw", adamw_params(), reg);

  add(kLinear,
      {F::required("input_dim", V::kInt), F::required("output_dim", V::kInt), F::value("bias", V::kBool, true),
       F::value("param_partition_spec", V::kSequence, Sequence{}), F::value("dtype", V::kText, "f32")},
      std::make_shared<LinearLayer>());
  add(kRMSNorm, {F::required("input_dim", V::kInt), F::value("eps", V::kFloat, 1e-6)},
      std::make_shared<RMSNormLayer>());
  add(kNoPos, {F::required("dim", V::kInt)}, std::make_shared<NoPosLayer>());
  add(kRoPE, {F::required("dim", V::kInt), F::value("theta", V::kFloat, nn::kRopeTheta)},
      std::make_shared<RoPELayer>());
  add(kAttention,
      {F::required("input_dim", V::kInt), F::required("num_heads", V::kInt), F::value("causal", V::kBool, false),
       F::child("q_proj", std::string(kLinear)), F::child("k_proj", std::string(kLinear)),
       F::child("v_proj", std::string(kLinear)), F::child("o_proj", std::string(kLinear)),
       F::child("pos_emb", std::string(kNoPos)), remat_field()},
      std::make_shared<AttentionLayer>());
  add(kFeedForward,
      {F::required("input_dim", V::kInt), F::required("hidden_dim", V::kInt),
       F::value("activation", V::kSequence, text_sequence({"nn.relu"})), F::child("linear1", std::string(kLinear)),
       F::child("linear2", std::string(kLinear)), remat_field()},
      std::make_shared<FeedForwardLayer>());
  add(kMoE,
      {F::required("input_dim", V::kInt), F::required("hidden_dim", V::kInt),
       F::value("activation", V::kSequence, text_sequence({"nn.relu"})), F::value("num_experts", V::kInt, 8),
       F::value("top_k", V::kInt, 2), F::value("expert_axis", V::kText, ""), F::value("dtype", V::kText, "f32"),
       remat_field()},
      std::make_shared<MoELayer>());
  add(kTransformerLayer,
      {F::required("input_dim", V::kInt), F::value("norm_eps", V::kFloat, 1e-6),
       F::child("self_attention", std::string(kAttention)), F::child("feed_forward", std::string(kFeedForward)),
       remat_field()},
      std::make_shared<TransformerLayerImpl>());
  add(kStackedTransformer, {F::required("input_dim", V::kInt), F::children("layer"), remat_field()},
      std::make_shared<StackedTransformerLayer>());
  add(kEmbedding,
      {F::required("vocab_size", V::kInt), F::required("dim", V::kInt),
       F::value("param_partition_spec", V::kSequence, Sequence{}), F::value("dtype", V::kText, "f32")},
      std::make_shared<EmbeddingLayer>());
  add(kLmHead,
      {F::required("vocab_size", V::kInt), F::required("dim", V::kInt), F::value("tied_weight_path", V::kText, ""),
       remat_field()},
      std::make_shared<LmHeadLayer>());
  add(kDecoder,
      {F::required("vocab_size", V::kInt), F::required("dim", V::kInt), F::value("tie_embeddings", V::kBool, true),
       F::child("emb", std::string(kEmbedding)), F::child("transformer", std::string(kStackedTransformer)),
       F::child("output_norm", std::string(kRMSNorm)), F::child("lm_head", std::string(kLmHead))},
      std::make_shared<DecoderLayer>());
  add(kCausalLM, {F::child("decoder", std::string(kDecoder))}, std::make_shared<CausalLMLayer>());
  add(kTrainer,
      {F::value("mesh_shape", V::kSequence, Sequence{}), F::value("mesh_axis_names", V::kSequence, Sequence{}),
       F::children("mesh_rules"), F::child("model", std::string(kCausalLM)),
       F::child("optimizer", factory_kind("adamw")), F::value("optimizer_state_multiplier", V::kInt, 2),
       F::value("offload_optimizer", V::kBool, false), F::value("activation_dtype", V::kText, "f32"),
       F::value("dtype_params", V::kMapping, Mapping{})},
      std::make_shared<TrainerLayer>());
}

}  // namespace detail

/// Registers the builtin kinds into the global registries. Idempotent.
inline void register_builtins() {
  static std::once_flag once;
  std::call_once(once, [] { detail::register_into(Registry::global(), LayerRegistry::global()); });
}

/// Registry of builtin kinds plus their behaviors, for code that wants an
/// isolated registry.
inline void register_builtins_into(Registry& reg, LayerRegistry& layers) { detail::register_into(reg, layers); }

}  // namespace composer::layers
