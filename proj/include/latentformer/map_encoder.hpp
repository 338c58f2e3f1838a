// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "latentformer/config.hpp"
#include "latentformer/nn.hpp"
#include "latentformer/scene.hpp"

namespace latentformer {

inline constexpr std::size_t kMapChannels = 4;
inline constexpr std::size_t kFeatureChannels = 6;
inline constexpr std::size_t kFeatureExtent = 32;

struct ConvLayer {
  Tensor kernels;  // [C_out, C_in, k, k]
  Tensor bias;     // [C_out]
  int stride = 1;
};

struct MapEncoderParams {
  std::array<ConvLayer, 3> conv;
  LinearLayer global;  // flattened feature map -> d_m
  LinearLayer patch;   // flattened M x M x 6 patch -> d_m
  Tensor token_pos;    // [1 + P, d_m]
  std::vector<TEBlockParams> vit;
};

MapEncoderParams make_map_encoder(ParamStore& store, const ModelConfig& cfg, Rng& rng);

/// (mask, row, col, distance to center) planes. Row/col are divided by 63 and
/// the distance by the half-diagonal unless `raw_pixel_indices` is set.
Tensor augment_channels(const DrivableMask& mask, bool raw_pixel_indices = false);

/// [4, 64, 64] -> [6, 32, 32]; ReLU after the first two layers.
Tensor conv_stack(const Tensor& x, const MapEncoderParams& p);

/// Flat [6, 32, 32] indices of every patch, patch-major, channel-major inside.
std::vector<std::size_t> patch_gather_indices(std::size_t patch, std::size_t stride);

/// [Gamma_g; Gamma_l...] before the position embedding.
Tensor map_tokens(const Tensor& fmap, const MapEncoderParams& p, const ModelConfig& cfg);

/// Position embedding plus the ViT blocks.
Tensor map_transformer(const Tensor& tokens, const MapEncoderParams& p, const ModelConfig& cfg);

/// phi_map from a feature map; a single Gamma_g row in global mode.
Tensor tokenize(const Tensor& fmap, const MapEncoderParams& p, const ModelConfig& cfg);

/// Full path from raster to phi_map. Undefined tensor when the map is off.
Tensor encode_map(const DrivableMask& mask, const MapEncoderParams& p, const ModelConfig& cfg);

}  // namespace latentformer
