// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "latentformer/nn.hpp"
#include "latentformer/scene.hpp"

namespace latentformer {

/// none: no map context. global: a single CNN token. vit: global token plus
/// local patch tokens through a vision transformer.
enum class MapMode { kNone, kGlobal, kVit };
enum class Decoding { kAutoregressive, kNonAutoregressive };
enum class Feedback { kMean, kSample };
/// Reference point the predicted means are offsets from: nothing, the input
/// state, or its constant-velocity extrapolation.
enum class Anchor { kNone, kPosition, kVelocity };

const char* to_string(MapMode mode);
const char* to_string(Decoding mode);
const char* to_string(Feedback mode);
const char* to_string(Anchor mode);

struct ModelConfig {
  BlockConfig block;
  std::size_t encoder_depth = 2;   // TEBlocks in the trajectory encoder and the ViT
  std::size_t prior_depth = 2;     // TDL_d layers in the mode prior
  std::size_t decoder_depth = 4;   // TDL_c layers
  std::size_t modes = 12;          // K
  std::size_t head_layers = 2;     // N feed-forward layers in the Gaussian head
  std::size_t tau = kDefaultTau;
  std::size_t horizon = kDefaultHorizon;
  std::size_t max_agents = kDefaultMaxAgents;
  std::size_t patch = 8;
  std::size_t patch_stride = 4;
  MapMode map = MapMode::kVit;
  bool interaction = true;
  Decoding decoding = Decoding::kAutoregressive;
  /// Feed the conv stack absolute pixel indices instead of [0, 1] ratios.
  bool raw_pixel_indices = false;
  Anchor head_anchor = Anchor::kVelocity;
  /// Multiplier applied to metric coordinates before the input embeddings.
  double coord_scale = 0.1;

  /// Throws ConfigError on any violated constraint.
  void validate() const;
  std::size_t patches_per_axis() const;
  /// Tokens in phi_map (0 when the map is off).
  std::size_t map_tokens() const;
};

struct TrainConfig {
  double lr = 5e-4;
  double momentum = 0.95;
  double lr_min_ratio = 0.1;      // lower cyclic bound as a fraction of lr
  std::size_t lr_period = 10;     // epochs per triangular cycle
  std::size_t batch_tf = 64;
  std::size_t batch_ar = 16;
  std::size_t epochs = 100;
  /// First epoch trained with autoregressive likelihoods; negative selects
  /// 0.75 * epochs.
  std::int64_t tf_to_ar_switch = -1;
  double clip_norm = 5.0;
  Feedback ar_feedback = Feedback::kMean;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t switch_epoch() const;
};

struct RunConfig {
  std::string profile = "paper";
  ModelConfig model;
  TrainConfig train;

  void validate() const;
};

RunConfig paper_profile();
RunConfig small_profile();
RunConfig profile_by_name(const std::string& name);

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

/// Parsing starts from the named profile (or the "profile" key) and applies
/// overrides. Unknown keys and type mismatches raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& base);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace latentformer
