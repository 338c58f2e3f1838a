// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "latentformer/config.hpp"
#include "latentformer/decoder.hpp"
#include "latentformer/latent_intent.hpp"
#include "latentformer/map_encoder.hpp"
#include "latentformer/param_store.hpp"
#include "latentformer/scene.hpp"
#include "latentformer/trajectory_encoder.hpp"

namespace latentformer {

/// Everything the decoder and the prior need from one scene, computed once.
struct SceneContext {
  std::size_t agents = 0;
  ContextEncoding context;
  Tensor phi_map;    // undefined without a map
  Tensor log_prior;  // [A, K]
  Track current;     // S_0 per agent
  Track previous;    // S_-1 per agent
  // Per decoder layer: phi_S and phi_map keys/values projected once.
  std::vector<ProjectedMemory> ctx_memory;
  std::vector<ProjectedMemory> map_memory;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Undefined tensor when the map is off.
  Tensor encode_map(const DrivableMask& mask) const;

  /// `phi_map` may be supplied to share one map encoding between scenes.
  SceneContext encode(const Scene& scene, const Tensor* phi_map = nullptr) const;
  SceneContext encode(const ObservationBatch& obs, const Tensor& phi_map) const;

  TrajectoryEncoderParams encoder;
  std::optional<MapEncoderParams> map_encoder;
  IntentParams intent;
  DecoderParams decoder;

 private:
  ModelConfig cfg_;
  ParamStore store_;
};

/// Model-free copy of a mode config where every agent takes mode k.
ModeConfig uniform_modes(std::size_t agents, std::size_t k);

/// Per-agent argmax of the prior.
ModeConfig prior_argmax(const SceneContext& ctx);

/// Map encodings keyed by raster contents; evaluation only (no tape).
/// Safe to share between threads.
class MapCache {
 public:
  const Tensor& get(const Model& model, const DrivableMask& mask);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::vector<std::uint8_t>, Tensor> cache_;
};

}  // namespace latentformer
