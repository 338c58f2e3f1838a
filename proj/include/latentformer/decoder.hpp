// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "latentformer/config.hpp"
#include "latentformer/latent_intent.hpp"
#include "latentformer/nn.hpp"
#include "latentformer/scene.hpp"

namespace latentformer {

class Model;
struct SceneContext;

struct DecoderParams {
  LinearLayer embed;   // (x, y, agent index) -> d_m; not shared with the encoder
  Tensor time_pos;     // [T, d_m]
  Tensor agent_embed;  // [A_max, d_m]; non-autoregressive decoding only
  std::vector<TDLcParams> blocks;
  std::vector<LinearLayer> head;  // N layers, the last emitting 5 values
};

DecoderParams make_decoder(ParamStore& store, const ModelConfig& cfg, Rng& rng);

/// Token (t, a) sees every (t', a') with t' <= t.
AttentionMask build_time_causal_mask(std::size_t agents, std::size_t steps);

/// Decoder self-attention pattern; `causal` adds the time constraint and
/// interaction off restricts each agent to its own tokens.
AttentionMask build_decoder_mask(std::size_t agents, std::size_t steps, bool causal,
                                 bool interaction);

/// h [n, d_m] -> squashed Gaussians [n, 5]; `anchor` [n, 2] (may be undefined)
/// is added to the means.
Tensor gaussian_head(const Tensor& h, const std::vector<LinearLayer>& head, const Tensor& anchor);

/// Per-agent, per-step (mu_x, mu_y, sigma_x, sigma_y, rho).
struct GaussianSeq {
  std::size_t agents = 0;
  std::size_t steps = 0;
  std::vector<double> values;  // [A, T, 5]

  const double* at(std::size_t a, std::size_t t) const { return values.data() + (a * steps + t) * 5; }
  /// From time-major decoder rows [T * A, 5].
  static GaussianSeq from_tokens(const Tensor& rows, std::size_t agents, std::size_t steps);
  /// Back to time-major [T * A, 5] rows.
  Tensor to_tokens() const;
};

struct TrajectorySample {
  std::vector<Track> points;  // [A][T]
  ModeConfig modes;
};

/// Decoder rows for arbitrary input states. `inputs[a][t]` is the state fed
/// at step t (S_0 first); row t * A + a predicts the state after it.
Tensor decode_from_inputs(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                          const std::vector<Track>& inputs);

/// Shifted-right teacher forcing on the ground-truth future [A][T].
Tensor decode_teacher_forced(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                             const std::vector<Track>& future);

struct Rollout {
  TrajectorySample sample;
  Tensor gaussians;  // time-major rows [T * A, 5]
};

/// Sequential rollout feeding back means or seeded samples.
Rollout decode_autoregressive(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                              Feedback select, std::uint64_t seed);

/// All steps in one pass from time and agent-index embeddings alone.
Tensor decode_non_autoregressive(const Model& model, const SceneContext& ctx, const ModeConfig& z);

/// Mean trajectories from decoder rows.
std::vector<Track> gaussian_means(const Tensor& rows, std::size_t agents, std::size_t steps);

/// Per-agent negative log-likelihood summed over steps: rows [T * A, 5] vs
/// future [A][T]. Result [A].
Tensor per_agent_nll(const Tensor& rows, const std::vector<Track>& future);

/// One draw from a bivariate Gaussian row.
Vec2 sample_bivariate(const double* g, Rng& rng);

}  // namespace latentformer
