// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/trajectory_encoder.hpp"

#include <cmath>

#include "latentformer/error.hpp"

namespace latentformer {

namespace {
constexpr double kEmbeddingStddev = 0.02;
}

ObservationBatch ObservationBatch::from_scene(const Scene& scene) {
  ObservationBatch obs;
  for (const auto& a : scene.agents) obs.states.push_back(a.past);
  return obs;
}

void ObservationBatch::validate() const {
  if (states.empty()) throw ContractError("observation batch has no agents");
  if (!valid.empty() && valid.size() != states.size()) {
    throw ContractError("observation batch: validity mask length mismatch");
  }
  bool any = false;
  for (std::size_t a = 0; a < states.size(); ++a) {
    if (states[a].size() != steps() || states[a].empty()) {
      throw ContractError("observation batch: ragged agent tracks");
    }
    for (const auto& p : states[a]) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw ContractError("observation batch: non-finite coordinate");
      }
    }
    any = any || is_valid(a);
  }
  if (!any) throw ContractError("observation batch: every agent slot is padding");
}

TrajectoryEncoderParams make_trajectory_encoder(ParamStore& store, const ModelConfig& cfg,
                                                Rng& rng) {
  TrajectoryEncoderParams p;
  const std::size_t d = cfg.block.d_model;
  p.embed = make_linear(store, "encoder.embed", 3, d, rng);
  p.time_pos = store.add_normal("encoder.time_pos", {cfg.tau + 1, d}, kEmbeddingStddev, rng);
  for (std::size_t i = 0; i < cfg.encoder_depth; ++i) {
    p.blocks.push_back(make_te_block(store, "encoder.block" + std::to_string(i), cfg.block, rng));
  }
  return p;
}

Tensor state_features(const std::vector<Track>& states, double coord_scale) {
  const std::size_t agents = states.size();
  const std::size_t steps = states.front().size();
  std::vector<double> f(agents * steps * 3);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t a = 0; a < agents; ++a) {
      double* row = f.data() + (t * agents + a) * 3;
      row[0] = states[a][t].x * coord_scale;
      row[1] = states[a][t].y * coord_scale;
      row[2] = static_cast<double>(a);
    }
  }
  return Tensor::from({agents * steps, 3}, std::move(f));
}

Tensor embed_states(const ObservationBatch& obs, const TrajectoryEncoderParams& p,
                    const ModelConfig& cfg) {
  obs.validate();
  if (obs.agent_count() > cfg.max_agents) {
    throw CapacityError("scene has " + std::to_string(obs.agent_count()) +
                        " agents; the model accepts at most " + std::to_string(cfg.max_agents));
  }
  if (obs.steps() != cfg.tau + 1) {
    throw DimensionError("observation has " + std::to_string(obs.steps()) +
                         " states per agent, model expects " + std::to_string(cfg.tau + 1));
  }
  const std::size_t agents = obs.agent_count();
  std::vector<std::size_t> times(agents * obs.steps());
  for (std::size_t i = 0; i < times.size(); ++i) times[i] = i / agents;
  return add(p.embed(state_features(obs.states, cfg.coord_scale)), embedding(p.time_pos, times));
}

AttentionMask encoder_mask(const ObservationBatch& obs, bool interaction) {
  const TokenIndex idx{obs.agent_count(), obs.steps()};
  AttentionMask m(idx.size(), idx.size(), false);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t ai = idx.time_agent(i).second;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const std::size_t aj = idx.time_agent(j).second;
      bool ok = obs.is_valid(aj) && (interaction || ai == aj);
      // A padded slot keeps its own keys so its softmax stays defined.
      if (!obs.is_valid(ai)) ok = ai == aj;
      m.set(i, j, ok);
    }
  }
  return m;
}

ContextEncoding encode_trajectories(const ObservationBatch& obs, const TrajectoryEncoderParams& p,
                                    const ModelConfig& cfg) {
  Tensor x = embed_states(obs, p, cfg);
  const bool all_valid = obs.valid.empty() ||
                         std::all_of(obs.valid.begin(), obs.valid.end(), [](bool v) { return v; });
  AttentionMask mask;
  const AttentionMask* mp = nullptr;
  if (!all_valid || !cfg.interaction) {
    mask = encoder_mask(obs, cfg.interaction);
    mp = &mask;
  }
  for (const auto& block : p.blocks) x = te_block(x, block, cfg.block, mp);
  return {x, {obs.agent_count(), obs.steps()}};
}

}  // namespace latentformer
