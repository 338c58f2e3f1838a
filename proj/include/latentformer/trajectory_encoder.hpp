// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "latentformer/config.hpp"
#include "latentformer/nn.hpp"
#include "latentformer/scene.hpp"

namespace latentformer {

/// Observed states of every agent slot. Slots flagged invalid are padding:
/// they are embedded but hidden from every query.
struct ObservationBatch {
  std::vector<Track> states;  // [A][tau + 1]
  std::vector<bool> valid;    // empty means all slots are real agents

  std::size_t agent_count() const { return states.size(); }
  std::size_t steps() const { return states.empty() ? 0 : states.front().size(); }
  bool is_valid(std::size_t a) const { return valid.empty() || valid[a]; }

  static ObservationBatch from_scene(const Scene& scene);
  /// Throws ContractError on ragged or non-finite input.
  void validate() const;
};

/// Time-major token layout: token t * A + a holds agent a at step t.
struct TokenIndex {
  std::size_t agents = 0;
  std::size_t steps = 0;

  std::size_t token(std::size_t t, std::size_t a) const { return t * agents + a; }
  std::pair<std::size_t, std::size_t> time_agent(std::size_t token) const {
    return {token / agents, token % agents};
  }
  std::size_t size() const { return agents * steps; }
};

struct ContextEncoding {
  Tensor phi_s;  // [A * (tau + 1), d_m]
  TokenIndex index;
};

struct TrajectoryEncoderParams {
  LinearLayer embed;  // (x, y, agent index) -> d_m
  Tensor time_pos;    // [tau + 1, d_m]
  std::vector<TEBlockParams> blocks;
};

TrajectoryEncoderParams make_trajectory_encoder(ParamStore& store, const ModelConfig& cfg, Rng& rng);

/// Rows of (x * s, y * s, a) in time-major token order.
Tensor state_features(const std::vector<Track>& states, double coord_scale);

/// Embedded tokens before the transformer blocks.
Tensor embed_states(const ObservationBatch& obs, const TrajectoryEncoderParams& p,
                    const ModelConfig& cfg);

/// Self-attention pattern over encoder tokens: padding hidden as keys, and
/// with interaction off each agent sees only its own tokens.
AttentionMask encoder_mask(const ObservationBatch& obs, bool interaction);

ContextEncoding encode_trajectories(const ObservationBatch& obs, const TrajectoryEncoderParams& p,
                                    const ModelConfig& cfg);

}  // namespace latentformer
