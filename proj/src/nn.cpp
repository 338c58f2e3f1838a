// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/nn.hpp"

#include <cmath>

#include "latentformer/error.hpp"

namespace latentformer {

double BlockConfig::score_scale() const {
  return attn_scale ? 1.0 / std::sqrt(static_cast<double>(d_head())) : 1.0;
}

void BlockConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
}

LinearLayer make_linear(ParamStore& store, const std::string& name, std::size_t in,
                        std::size_t out, Rng& rng) {
  LinearLayer l;
  l.weight = store.add_uniform(name + ".weight", {in, out}, in, rng);
  l.bias = store.add_zeros(name + ".bias", {out});
  return l;
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t d) {
  return {store.add_constant(name + ".gain", {d}, 1.0), store.add_zeros(name + ".bias", {d})};
}

MultiHeadParams make_multi_head(ParamStore& store, const std::string& name,
                                const BlockConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model;
  return {make_linear(store, name + ".q", d, d, rng), make_linear(store, name + ".k", d, d, rng),
          make_linear(store, name + ".v", d, d, rng), make_linear(store, name + ".o", d, d, rng)};
}

FeedForward make_feed_forward(ParamStore& store, const std::string& name, std::size_t d_in,
                              std::size_t hidden, std::size_t d_out, Rng& rng) {
  return {make_linear(store, name + ".in", d_in, hidden, rng),
          make_linear(store, name + ".out", hidden, d_out, rng)};
}

Tensor attn(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask* mask,
            double score_scale) {
  return attention(q, k, v, 1, mask, score_scale);
}

ProjectedMemory project_memory(const MultiHeadParams& p, const Tensor& context) {
  return {p.k(context), p.v(context)};
}

ProjectedMemory concat_memory(const ProjectedMemory& a, const ProjectedMemory& b) {
  return {concat({a.keys, b.keys}, 0), concat({a.values, b.values}, 0)};
}

Tensor multi_head_attn(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionMask* mask, const MultiHeadParams& p,
                       const BlockConfig& cfg) {
  return p.o(attention(p.q(q), p.k(k), p.v(v), cfg.heads, mask, cfg.score_scale()));
}

Tensor self_attend(const Tensor& x, const AttentionMask* mask, const MultiHeadParams& p,
                   const BlockConfig& cfg) {
  return multi_head_attn(x, x, x, mask, p, cfg);
}

Tensor cross_attend(const Tensor& x, const ProjectedMemory& memory, const AttentionMask* mask,
                    const MultiHeadParams& p, const BlockConfig& cfg) {
  return p.o(attention(p.q(x), memory.keys, memory.values, cfg.heads, mask, cfg.score_scale()));
}

TEBlockParams make_te_block(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                            Rng& rng) {
  TEBlockParams p;
  p.self_attn = make_multi_head(store, name + ".self_attn", cfg, rng);
  p.norm_attn = make_layer_norm(store, name + ".norm_attn", cfg.d_model);
  p.ffn = make_feed_forward(store, name + ".ffn", cfg.d_model, cfg.ffn_mult * cfg.d_model,
                            cfg.d_model, rng);
  p.norm_ffn = make_layer_norm(store, name + ".norm_ffn", cfg.d_model);
  return p;
}

Tensor te_block(const Tensor& x, const TEBlockParams& p, const BlockConfig& cfg,
                const AttentionMask* mask) {
  const Tensor x1 = p.norm_attn(add(x, self_attend(x, mask, p.self_attn, cfg)));
  return p.norm_ffn(add(x1, p.ffn(x1)));
}

TDLdParams make_tdl_d(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                      bool with_map, Rng& rng) {
  TDLdParams p;
  p.self_attn = make_multi_head(store, name + ".self_attn", cfg, rng);
  p.norm_self = make_layer_norm(store, name + ".norm_self", cfg.d_model);
  p.cross_ctx = make_multi_head(store, name + ".cross_ctx", cfg, rng);
  p.norm_ctx = make_layer_norm(store, name + ".norm_ctx", cfg.d_model);
  if (with_map) {
    p.cross_map = make_multi_head(store, name + ".cross_map", cfg, rng);
    p.norm_map = make_layer_norm(store, name + ".norm_map", cfg.d_model);
  }
  p.ffn = make_feed_forward(store, name + ".ffn", cfg.d_model, cfg.ffn_mult * cfg.d_model,
                            cfg.d_model, rng);
  p.norm_ffn = make_layer_norm(store, name + ".norm_ffn", cfg.d_model);
  return p;
}

Tensor tdl_d(const Tensor& x, const ProjectedMemory& context, const ProjectedMemory* map,
             const TDLdParams& p, const BlockConfig& cfg, const DecoderMasks& masks) {
  const Tensor attended = self_attend(x, masks.self, p.self_attn, cfg);
  const Tensor x3 = p.norm_self(cfg.literal_eqs ? attended : add(x, attended));
  const Tensor x2 = p.norm_ctx(add(x3, cross_attend(x3, context, masks.context, p.cross_ctx, cfg)));
  Tensor x1 = x2;
  if (map != nullptr) {
    if (!p.cross_map) throw ContractError("tdl_d: map context given to a map-free layer");
    x1 = (*p.norm_map)(add(x2, cross_attend(x2, *map, masks.map, *p.cross_map, cfg)));
  }
  return p.norm_ffn(add(x1, p.ffn(x1)));
}

Tensor tdl_d(const Tensor& x, const Tensor& phi_s, const Tensor& phi_map, const TDLdParams& p,
             const BlockConfig& cfg, const DecoderMasks& masks) {
  const ProjectedMemory ctx = project_memory(p.cross_ctx, phi_s);
  if (!phi_map.defined()) return tdl_d(x, ctx, nullptr, p, cfg, masks);
  if (!p.cross_map) throw ContractError("tdl_d: map context given to a map-free layer");
  const ProjectedMemory map = project_memory(*p.cross_map, phi_map);
  return tdl_d(x, ctx, &map, p, cfg, masks);
}

TDLcParams make_tdl_c(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                      bool with_map, Rng& rng) {
  TDLcParams p;
  p.self_attn = make_multi_head(store, name + ".self_attn", cfg, rng);
  p.cross_ctx = make_multi_head(store, name + ".cross_ctx", cfg, rng);
  if (with_map) p.cross_map = make_multi_head(store, name + ".cross_map", cfg, rng);
  p.ffn = make_feed_forward(store, name + ".ffn", cfg.d_model, cfg.ffn_mult * cfg.d_model,
                            cfg.d_model, rng);
  return p;
}

Tensor tdl_c(const Tensor& x, const ProjectedMemory& context, const ProjectedMemory* map,
             const TDLcParams& p, const BlockConfig& cfg, const DecoderMasks& masks) {
  const Tensor attended = self_attend(x, masks.self, p.self_attn, cfg);
  const Tensor x3 = cfg.literal_eqs ? attended : add(x, attended);
  const Tensor x2 = add(x3, cross_attend(x3, context, masks.context, p.cross_ctx, cfg));
  Tensor x1 = x2;
  if (map != nullptr) {
    if (!p.cross_map) throw ContractError("tdl_c: map context given to a map-free layer");
    x1 = add(x2, cross_attend(x2, *map, masks.map, *p.cross_map, cfg));
  }
  return add(x1, p.ffn(x1));
}

Tensor tdl_c(const Tensor& x, const Tensor& phi_prime, const Tensor& phi_map,
             const TDLcParams& p, const BlockConfig& cfg, const DecoderMasks& masks) {
  const ProjectedMemory ctx = project_memory(p.cross_ctx, phi_prime);
  if (!phi_map.defined()) return tdl_c(x, ctx, nullptr, p, cfg, masks);
  if (!p.cross_map) throw ContractError("tdl_c: map context given to a map-free layer");
  const ProjectedMemory map = project_memory(*p.cross_map, phi_map);
  return tdl_c(x, ctx, &map, p, cfg, masks);
}

std::size_t multi_head_param_count(const BlockConfig& cfg) {
  return 4 * cfg.d_model * (cfg.d_model + 1);
}

std::size_t feed_forward_param_count(const BlockConfig& cfg) {
  const std::size_t d = cfg.d_model, f = cfg.ffn_mult * cfg.d_model;
  return d * f + f + f * d + d;
}

std::size_t te_block_param_count(const BlockConfig& cfg) {
  return multi_head_param_count(cfg) + feed_forward_param_count(cfg) + 4 * cfg.d_model;
}

std::size_t tdl_d_param_count(const BlockConfig& cfg, bool with_map) {
  const std::size_t attn_layers = with_map ? 3 : 2;
  return attn_layers * (multi_head_param_count(cfg) + 2 * cfg.d_model) +
         feed_forward_param_count(cfg) + 2 * cfg.d_model;
}

std::size_t tdl_c_param_count(const BlockConfig& cfg, bool with_map) {
  return (with_map ? 3 : 2) * multi_head_param_count(cfg) + feed_forward_param_count(cfg);
}

}  // namespace latentformer
