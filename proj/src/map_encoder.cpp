// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/map_encoder.hpp"

#include <cmath>

#include "latentformer/error.hpp"

namespace latentformer {

namespace {

constexpr std::size_t kFilters[3] = {8, 16, kFeatureChannels};
constexpr std::size_t kKernels[3] = {3, 3, 1};
constexpr int kStrides[3] = {1, 2, 1};
constexpr double kEmbeddingStddev = 0.02;

}  // namespace

MapEncoderParams make_map_encoder(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  MapEncoderParams p;
  const std::size_t d = cfg.block.d_model;
  std::size_t in = kMapChannels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = "map.conv" + std::to_string(i);
    const std::size_t k = kKernels[i];
    p.conv[i].kernels = store.add_uniform(name + ".weight", {kFilters[i], in, k, k}, in * k * k, rng);
    p.conv[i].bias = store.add_zeros(name + ".bias", {kFilters[i]});
    p.conv[i].stride = kStrides[i];
    in = kFilters[i];
  }
  const std::size_t flat = kFeatureChannels * kFeatureExtent * kFeatureExtent;
  p.global = make_linear(store, "map.global", flat, d, rng);
  if (cfg.map == MapMode::kVit) {
    p.patch = make_linear(store, "map.patch", kFeatureChannels * cfg.patch * cfg.patch, d, rng);
    p.token_pos = store.add_normal("map.token_pos", {cfg.map_tokens(), d}, kEmbeddingStddev, rng);
    for (std::size_t i = 0; i < cfg.encoder_depth; ++i) {
      p.vit.push_back(make_te_block(store, "map.vit" + std::to_string(i), cfg.block, rng));
    }
  }
  return p;
}

Tensor augment_channels(const DrivableMask& mask, bool raw_pixel_indices) {
  mask.validate();
  const std::size_t h = mask.height, w = mask.width;
  const double cy = static_cast<double>(h - 1) / 2.0;
  const double cx = static_cast<double>(w - 1) / 2.0;
  const double half_diag = std::hypot(cy, cx);
  std::vector<double> v(kMapChannels * h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      const double dist = std::hypot(static_cast<double>(r) - cy, static_cast<double>(c) - cx);
      v[i] = mask.at(r, c) ? 1.0 : 0.0;
      if (raw_pixel_indices) {
        v[h * w + i] = static_cast<double>(r);
        v[2 * h * w + i] = static_cast<double>(c);
        v[3 * h * w + i] = dist;
      } else {
        v[h * w + i] = static_cast<double>(r) / static_cast<double>(h - 1);
        v[2 * h * w + i] = static_cast<double>(c) / static_cast<double>(w - 1);
        v[3 * h * w + i] = dist / half_diag;
      }
    }
  }
  return Tensor::from({kMapChannels, h, w}, std::move(v));
}

Tensor conv_stack(const Tensor& x, const MapEncoderParams& p) {
  if (x.shape() != Shape{kMapChannels, kMapPixels, kMapPixels}) {
    throw DimensionError("conv_stack: expected [4, 64, 64], got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < 3; ++i) {
    h = conv2d(h, p.conv[i].kernels, p.conv[i].bias, p.conv[i].stride, Padding::kSame);
    if (i < 2) h = relu(h);
  }
  return h;
}

std::vector<std::size_t> patch_gather_indices(std::size_t patch, std::size_t stride) {
  const std::size_t per_axis = (kFeatureExtent - patch) / stride + 1;
  std::vector<std::size_t> idx;
  idx.reserve(per_axis * per_axis * kFeatureChannels * patch * patch);
  for (std::size_t pr = 0; pr < per_axis; ++pr) {
    for (std::size_t pc = 0; pc < per_axis; ++pc) {
      for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) {
        for (std::size_t i = 0; i < patch; ++i) {
          for (std::size_t j = 0; j < patch; ++j) {
            const std::size_t r = pr * stride + i, c = pc * stride + j;
            idx.push_back((ch * kFeatureExtent + r) * kFeatureExtent + c);
          }
        }
      }
    }
  }
  return idx;
}

Tensor map_tokens(const Tensor& fmap, const MapEncoderParams& p, const ModelConfig& cfg) {
  const Shape expected{kFeatureChannels, kFeatureExtent, kFeatureExtent};
  if (fmap.shape() != expected) {
    throw DimensionError("tokenize: expected [6, 32, 32], got " + shape_str(fmap.shape()));
  }
  const Tensor global = p.global(reshape(fmap, {1, fmap.numel()}));
  if (cfg.map != MapMode::kVit) return global;
  const std::size_t n = cfg.patches_per_axis() * cfg.patches_per_axis();
  const std::size_t width = kFeatureChannels * cfg.patch * cfg.patch;
  const auto idx = patch_gather_indices(cfg.patch, cfg.patch_stride);
  const Tensor patches = reshape(gather(fmap, idx), {n, width});
  return concat({global, p.patch(patches)}, 0);
}

Tensor map_transformer(const Tensor& tokens, const MapEncoderParams& p, const ModelConfig& cfg) {
  Tensor x = add(tokens, p.token_pos);
  for (const auto& block : p.vit) x = te_block(x, block, cfg.block);
  return x;
}

Tensor tokenize(const Tensor& fmap, const MapEncoderParams& p, const ModelConfig& cfg) {
  const Tensor tokens = map_tokens(fmap, p, cfg);
  if (cfg.map != MapMode::kVit) return tokens;
  return map_transformer(tokens, p, cfg);
}

Tensor encode_map(const DrivableMask& mask, const MapEncoderParams& p, const ModelConfig& cfg) {
  if (cfg.map == MapMode::kNone) return {};
  return tokenize(conv_stack(augment_channels(mask, cfg.raw_pixel_indices), p), p, cfg);
}

}  // namespace latentformer
