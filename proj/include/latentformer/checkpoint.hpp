// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "latentformer/config.hpp"
#include "latentformer/model.hpp"

namespace latentformer {

inline constexpr const char* kCheckpointFormat = "latentformer.checkpoint";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kParamsFile = "params.bin";
inline constexpr const char* kModelKindLatentFormer = "latentformer";
/// Test predictor that replays the ground-truth future for every mode.
inline constexpr const char* kModelKindOracle = "ground_truth_oracle";

/// Writes manifest.json (config, names, shapes, byte offsets) and params.bin
/// (little-endian float64, manifest order). `extra` is merged into the
/// manifest under "run".
void save_checkpoint(const std::string& dir, const Model& model,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Writes a manifest for the ground-truth oracle predictor (no parameters).
void save_oracle_checkpoint(const std::string& dir, std::size_t modes, std::size_t tau,
                            std::size_t horizon);

nlohmann::json read_manifest(const std::string& dir);

/// Copies checkpoint values into `model`; any name, order or shape mismatch
/// raises FormatError.
void load_params(const std::string& dir, Model& model);

/// Rebuilds the model from the manifest's config and loads its values.
std::unique_ptr<Model> load_model(const std::string& dir);

}  // namespace latentformer
