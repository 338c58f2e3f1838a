// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "latentformer/error.hpp"

namespace latentformer {

using nlohmann::json;

const char* to_string(MapMode mode) {
  switch (mode) {
    case MapMode::kNone: return "none";
    case MapMode::kGlobal: return "global";
    case MapMode::kVit: return "vit";
  }
  return "vit";
}

const char* to_string(Decoding mode) {
  return mode == Decoding::kAutoregressive ? "autoregressive" : "non_autoregressive";
}

const char* to_string(Feedback mode) { return mode == Feedback::kMean ? "mean" : "sample"; }

const char* to_string(Anchor mode) {
  switch (mode) {
    case Anchor::kNone: return "none";
    case Anchor::kPosition: return "position";
    case Anchor::kVelocity: return "velocity";
  }
  return "none";
}

namespace {

MapMode map_mode_from(const std::string& s) {
  if (s == "none") return MapMode::kNone;
  if (s == "global") return MapMode::kGlobal;
  if (s == "vit") return MapMode::kVit;
  throw ConfigError("map must be one of none|global|vit, got '" + s + "'");
}

Decoding decoding_from(const std::string& s) {
  if (s == "autoregressive") return Decoding::kAutoregressive;
  if (s == "non_autoregressive") return Decoding::kNonAutoregressive;
  throw ConfigError("decoding must be autoregressive|non_autoregressive, got '" + s + "'");
}

Anchor anchor_from(const std::string& s) {
  if (s == "none") return Anchor::kNone;
  if (s == "position") return Anchor::kPosition;
  if (s == "velocity") return Anchor::kVelocity;
  throw ConfigError("head_anchor must be none|position|velocity, got '" + s + "'");
}

Feedback feedback_from(const std::string& s) {
  if (s == "mean") return Feedback::kMean;
  if (s == "sample") return Feedback::kSample;
  throw ConfigError("ar_feedback must be mean|sample, got '" + s + "'");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type: " + j.at(key).dump());
  }
}

// Non-negative integers arrive as JSON numbers; reject negatives and fractions.
void read_count(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError(where + "." + key + " must be a non-negative integer, got " + v.dump());
  }
  out = v.get<std::size_t>();
}

}  // namespace

void ModelConfig::validate() const {
  block.validate();
  if (encoder_depth < 1 || prior_depth < 1 || decoder_depth < 1) {
    throw ConfigError("block depths must be >= 1");
  }
  if (modes < 1) throw ConfigError("modes must be >= 1");
  if (head_layers < 1) throw ConfigError("head_layers must be >= 1");
  if (tau < 1 || horizon < 1) throw ConfigError("tau and horizon must be >= 1");
  if (max_agents < 1) throw ConfigError("max_agents must be >= 1");
  if (map == MapMode::kVit) {
    if (patch < 1 || patch > 32) throw ConfigError("patch must lie in [1, 32]");
    if (patch_stride < 1 || patch_stride > patch) throw ConfigError("patch_stride must lie in [1, patch]");
    if ((32 - patch) % patch_stride != 0) {
      throw ConfigError("patch grid must tile the 32x32 feature map exactly");
    }
  }
  if (!(coord_scale > 0.0) || !std::isfinite(coord_scale)) throw ConfigError("coord_scale must be > 0");
}

std::size_t ModelConfig::patches_per_axis() const { return (32 - patch) / patch_stride + 1; }

std::size_t ModelConfig::map_tokens() const {
  switch (map) {
    case MapMode::kNone: return 0;
    case MapMode::kGlobal: return 1;
    case MapMode::kVit: return 1 + patches_per_axis() * patches_per_axis();
  }
  return 0;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_min_ratio > 0.0 && lr_min_ratio <= 1.0)) throw ConfigError("lr_min_ratio must lie in (0, 1]");
  if (lr_period < 1) throw ConfigError("lr_period must be >= 1");
  if (batch_tf < 1 || batch_ar < 1) throw ConfigError("batch sizes must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
}

std::size_t TrainConfig::switch_epoch() const {
  if (tf_to_ar_switch >= 0) return static_cast<std::size_t>(tf_to_ar_switch);
  return static_cast<std::size_t>(std::floor(0.75 * static_cast<double>(epochs)));
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

RunConfig paper_profile() {
  RunConfig r;
  r.profile = "paper";
  return r;
}

RunConfig small_profile() {
  RunConfig r;
  r.profile = "small";
  r.model.block.d_model = 64;
  r.model.block.heads = 4;
  r.model.encoder_depth = 1;
  r.model.prior_depth = 1;
  r.model.decoder_depth = 2;
  r.model.modes = 4;
  // Without the residual on the first self-attention sublayer the small
  // decoder does not fit even eight scenes within the overfit budget.
  r.model.block.literal_eqs = false;
  r.train.lr = 1e-2;
  r.train.batch_tf = 3;
  r.train.batch_ar = 3;
  return r;
}

RunConfig profile_by_name(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "small") return small_profile();
  throw ConfigError("unknown profile '" + name + "' (expected paper|small)");
}

json to_json(const ModelConfig& c) {
  return json{{"d_model", c.block.d_model},
              {"heads", c.block.heads},
              {"ffn_mult", c.block.ffn_mult},
              {"attn_scale", c.block.attn_scale},
              {"literal_eqs", c.block.literal_eqs},
              {"encoder_depth", c.encoder_depth},
              {"prior_depth", c.prior_depth},
              {"decoder_depth", c.decoder_depth},
              {"modes", c.modes},
              {"head_layers", c.head_layers},
              {"tau", c.tau},
              {"horizon", c.horizon},
              {"max_agents", c.max_agents},
              {"patch", c.patch},
              {"patch_stride", c.patch_stride},
              {"map", to_string(c.map)},
              {"interaction", c.interaction},
              {"decoding", to_string(c.decoding)},
              {"raw_pixel_indices", c.raw_pixel_indices},
              {"head_anchor", to_string(c.head_anchor)},
              {"coord_scale", c.coord_scale}};
}

json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"momentum", c.momentum},
              {"lr_min_ratio", c.lr_min_ratio},
              {"lr_period", c.lr_period},
              {"batch_tf", c.batch_tf},
              {"batch_ar", c.batch_ar},
              {"epochs", c.epochs},
              {"tf_to_ar_switch", c.tf_to_ar_switch},
              {"clip_norm", c.clip_norm},
              {"ar_feedback", to_string(c.ar_feedback)},
              {"seed", c.seed}};
}

json to_json(const RunConfig& c) {
  return json{{"profile", c.profile}, {"model", to_json(c.model)}, {"train", to_json(c.train)}};
}

ModelConfig model_config_from_json(const json& j, const ModelConfig& base) {
  const std::string where = "model";
  reject_unknown(j, {"d_model", "heads", "ffn_mult", "attn_scale", "literal_eqs", "encoder_depth",
                     "prior_depth", "decoder_depth", "modes", "head_layers", "tau", "horizon",
                     "max_agents", "patch", "patch_stride", "map", "interaction", "decoding",
                     "raw_pixel_indices", "head_anchor", "coord_scale"},
                 where);
  ModelConfig c = base;
  read_count(j, "d_model", c.block.d_model, where);
  read_count(j, "heads", c.block.heads, where);
  read_count(j, "ffn_mult", c.block.ffn_mult, where);
  read(j, "attn_scale", c.block.attn_scale, where);
  read(j, "literal_eqs", c.block.literal_eqs, where);
  read_count(j, "encoder_depth", c.encoder_depth, where);
  read_count(j, "prior_depth", c.prior_depth, where);
  read_count(j, "decoder_depth", c.decoder_depth, where);
  read_count(j, "modes", c.modes, where);
  read_count(j, "head_layers", c.head_layers, where);
  read_count(j, "tau", c.tau, where);
  read_count(j, "horizon", c.horizon, where);
  read_count(j, "max_agents", c.max_agents, where);
  read_count(j, "patch", c.patch, where);
  read_count(j, "patch_stride", c.patch_stride, where);
  std::string s;
  if (j.contains("map")) {
    read(j, "map", s, where);
    c.map = map_mode_from(s);
  }
  read(j, "interaction", c.interaction, where);
  if (j.contains("decoding")) {
    read(j, "decoding", s, where);
    c.decoding = decoding_from(s);
  }
  read(j, "raw_pixel_indices", c.raw_pixel_indices, where);
  if (j.contains("head_anchor")) {
    read(j, "head_anchor", s, where);
    c.head_anchor = anchor_from(s);
  }
  read(j, "coord_scale", c.coord_scale, where);
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  const std::string where = "train";
  reject_unknown(j, {"lr", "momentum", "lr_min_ratio", "lr_period", "batch_tf", "batch_ar", "epochs",
                     "tf_to_ar_switch", "clip_norm", "ar_feedback", "seed"},
                 where);
  TrainConfig c = base;
  read(j, "lr", c.lr, where);
  read(j, "momentum", c.momentum, where);
  read(j, "lr_min_ratio", c.lr_min_ratio, where);
  read_count(j, "lr_period", c.lr_period, where);
  read_count(j, "batch_tf", c.batch_tf, where);
  read_count(j, "batch_ar", c.batch_ar, where);
  read_count(j, "epochs", c.epochs, where);
  read(j, "tf_to_ar_switch", c.tf_to_ar_switch, where);
  read(j, "clip_norm", c.clip_norm, where);
  if (j.contains("ar_feedback")) {
    std::string s;
    read(j, "ar_feedback", s, where);
    c.ar_feedback = feedback_from(s);
  }
  read(j, "seed", c.seed, where);
  c.validate();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"profile", "model", "train"}, "config");
  std::string profile = "paper";
  read(j, "profile", profile, "config");
  RunConfig r = profile_by_name(profile);
  if (j.contains("model")) r.model = model_config_from_json(j.at("model"), r.model);
  if (j.contains("train")) r.train = train_config_from_json(j.at("train"), r.train);
  r.validate();
  return r;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace latentformer
