// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "latentformer/param_store.hpp"
#include "latentformer/tensor.hpp"

namespace latentformer {

inline constexpr double kLayerNormEps = 1e-5;

struct BlockConfig {
  std::size_t d_model = 256;
  std::size_t heads = 8;
  std::size_t ffn_mult = 4;
  /// Scale scores by 1/sqrt(d_head). Off reproduces the unscaled softmax(QK^T)V.
  bool attn_scale = true;
  /// Decoder layers omit the residual around their first self-attention.
  bool literal_eqs = true;

  std::size_t d_head() const { return d_model / heads; }
  double score_scale() const;
  /// Throws ConfigError when d_model % heads != 0 or ffn_mult < 1.
  void validate() const;
};

struct LinearLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

LinearLayer make_linear(ParamStore& store, const std::string& name, std::size_t in,
                        std::size_t out, Rng& rng);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, kLayerNormEps); }
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t d);

/// Per-head projections W_i^{Q,K,V} are the column blocks of q/k/v.
struct MultiHeadParams {
  LinearLayer q, k, v, o;
};

MultiHeadParams make_multi_head(ParamStore& store, const std::string& name,
                                const BlockConfig& cfg, Rng& rng);

struct FeedForward {
  LinearLayer in, out;
  Tensor operator()(const Tensor& x) const { return out(relu(in(x))); }
};

FeedForward make_feed_forward(ParamStore& store, const std::string& name, std::size_t d_in,
                              std::size_t hidden, std::size_t d_out, Rng& rng);

/// Single attention head: Softmax(Q K^T * scale) V, masked keys excluded.
Tensor attn(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask* mask,
            double score_scale);

/// Keys and values of a context sequence projected once and reused by every
/// query that cross-attends to it.
struct ProjectedMemory {
  Tensor keys;
  Tensor values;
};

ProjectedMemory project_memory(const MultiHeadParams& p, const Tensor& context);
ProjectedMemory concat_memory(const ProjectedMemory& a, const ProjectedMemory& b);

Tensor multi_head_attn(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionMask* mask, const MultiHeadParams& p,
                       const BlockConfig& cfg);
Tensor self_attend(const Tensor& x, const AttentionMask* mask, const MultiHeadParams& p,
                   const BlockConfig& cfg);
Tensor cross_attend(const Tensor& x, const ProjectedMemory& memory, const AttentionMask* mask,
                    const MultiHeadParams& p, const BlockConfig& cfg);

// ---- encoder block ----------------------------------------------------------

struct TEBlockParams {
  MultiHeadParams self_attn;
  LayerNormParams norm_attn;
  FeedForward ffn;
  LayerNormParams norm_ffn;
};

TEBlockParams make_te_block(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                            Rng& rng);

/// X' = LN(X + MS(X)); out = LN(X' + FFN(X')).
Tensor te_block(const Tensor& x, const TEBlockParams& p, const BlockConfig& cfg,
                const AttentionMask* mask = nullptr);

// ---- decoder layers ---------------------------------------------------------

struct DecoderMasks {
  const AttentionMask* self = nullptr;
  const AttentionMask* context = nullptr;
  const AttentionMask* map = nullptr;
};

/// TDL_d; `cross_map` is absent when the model runs without a map.
struct TDLdParams {
  MultiHeadParams self_attn;
  LayerNormParams norm_self;
  MultiHeadParams cross_ctx;
  LayerNormParams norm_ctx;
  std::optional<MultiHeadParams> cross_map;
  std::optional<LayerNormParams> norm_map;
  FeedForward ffn;
  LayerNormParams norm_ffn;
};

TDLdParams make_tdl_d(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                      bool with_map, Rng& rng);

Tensor tdl_d(const Tensor& x, const ProjectedMemory& context, const ProjectedMemory* map,
             const TDLdParams& p, const BlockConfig& cfg, const DecoderMasks& masks = {});
Tensor tdl_d(const Tensor& x, const Tensor& phi_s, const Tensor& phi_map, const TDLdParams& p,
             const BlockConfig& cfg, const DecoderMasks& masks = {});

/// TDL_c: the same sublayers as TDL_d with every layer normalization removed.
struct TDLcParams {
  MultiHeadParams self_attn;
  MultiHeadParams cross_ctx;
  std::optional<MultiHeadParams> cross_map;
  FeedForward ffn;
};

TDLcParams make_tdl_c(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                      bool with_map, Rng& rng);

Tensor tdl_c(const Tensor& x, const ProjectedMemory& context, const ProjectedMemory* map,
             const TDLcParams& p, const BlockConfig& cfg, const DecoderMasks& masks = {});
Tensor tdl_c(const Tensor& x, const Tensor& phi_prime, const Tensor& phi_map,
             const TDLcParams& p, const BlockConfig& cfg, const DecoderMasks& masks = {});

// ---- closed-form parameter counts --------------------------------------------

std::size_t multi_head_param_count(const BlockConfig& cfg);
std::size_t feed_forward_param_count(const BlockConfig& cfg);
std::size_t te_block_param_count(const BlockConfig& cfg);
std::size_t tdl_d_param_count(const BlockConfig& cfg, bool with_map);
std::size_t tdl_c_param_count(const BlockConfig& cfg, bool with_map);

}  // namespace latentformer
