// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/model.hpp"

#include <algorithm>

#include "latentformer/error.hpp"

namespace latentformer {

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  encoder = make_trajectory_encoder(store_, cfg_, rng);
  if (cfg_.map != MapMode::kNone) map_encoder = make_map_encoder(store_, cfg_, rng);
  intent = make_intent(store_, cfg_, rng);
  decoder = make_decoder(store_, cfg_, rng);
}

Tensor Model::encode_map(const DrivableMask& mask) const {
  if (!map_encoder) return {};
  return latentformer::encode_map(mask, *map_encoder, cfg_);
}

SceneContext Model::encode(const Scene& scene, const Tensor* phi_map) const {
  const ObservationBatch obs = ObservationBatch::from_scene(scene);
  if (phi_map != nullptr) return encode(obs, *phi_map);
  return encode(obs, encode_map(scene.mask));
}

SceneContext Model::encode(const ObservationBatch& obs, const Tensor& phi_map) const {
  if (!obs.valid.empty()) {
    for (std::size_t a = 0; a < obs.agent_count(); ++a) {
      if (!obs.is_valid(a)) throw ContractError("decoding a padded observation batch is unsupported");
    }
  }
  if ((cfg_.map == MapMode::kNone) != !phi_map.defined()) {
    throw ContractError("map encoding presence does not match the model's map mode");
  }
  SceneContext ctx;
  ctx.agents = obs.agent_count();
  ctx.context = encode_trajectories(obs, encoder, cfg_);
  ctx.phi_map = phi_map;
  ctx.log_prior = mode_log_prior(ctx.context.phi_s, phi_map, ctx.agents, intent, cfg_);
  for (const auto& track : obs.states) {
    ctx.current.push_back(track.back());
    ctx.previous.push_back(track.size() > 1 ? track[track.size() - 2] : track.back());
  }
  for (const auto& block : decoder.blocks) {
    ctx.ctx_memory.push_back(project_memory(block.cross_ctx, ctx.context.phi_s));
    if (phi_map.defined()) ctx.map_memory.push_back(project_memory(*block.cross_map, phi_map));
  }
  return ctx;
}

ModeConfig uniform_modes(std::size_t agents, std::size_t k) {
  return ModeConfig{std::vector<std::size_t>(agents, k)};
}

ModeConfig prior_argmax(const SceneContext& ctx) {
  const std::size_t k = ctx.log_prior.size(1);
  const auto lp = ctx.log_prior.data();
  ModeConfig z;
  for (std::size_t a = 0; a < ctx.agents; ++a) {
    const auto row = lp.subspan(a * k, k);
    z.modes.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return z;
}

const Tensor& MapCache::get(const Model& model, const DrivableMask& mask) {
  // std::map nodes are stable, so the reference outlives the lock.
  std::lock_guard lock(mutex_);
  auto it = cache_.find(mask.cells);
  if (it == cache_.end()) {
    NoGradGuard guard;
    it = cache_.emplace(mask.cells, model.encode_map(mask)).first;
  }
  return it->second;
}

std::size_t MapCache::size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

}  // namespace latentformer
