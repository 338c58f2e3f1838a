// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/decoder.hpp"

#include <cmath>

#include "latentformer/error.hpp"
#include "latentformer/model.hpp"
#include "latentformer/rng.hpp"
#include "latentformer/trajectory_encoder.hpp"

namespace latentformer {

namespace {

constexpr double kEmbeddingStddev = 0.02;

// Anchor rows (time-major) for the Gaussian means. Row t of agent a refers
// to inputs[a][t]; the velocity anchor extrapolates it by the last step,
// with S_-1 standing in before the first input.
Tensor anchor_rows(const SceneContext& ctx, const std::vector<Track>& inputs, std::size_t steps,
                   Anchor mode) {
  if (mode == Anchor::kNone) return {};
  const std::size_t agents = inputs.size();
  std::vector<double> v(steps * agents * 2);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t a = 0; a < agents; ++a) {
      Vec2 p = inputs[a][t];
      if (mode == Anchor::kVelocity) {
        const Vec2& prev = t == 0 ? ctx.previous[a] : inputs[a][t - 1];
        p = {2.0 * p.x - prev.x, 2.0 * p.y - prev.y};
      }
      v[(t * agents + a) * 2] = p.x;
      v[(t * agents + a) * 2 + 1] = p.y;
    }
  }
  return Tensor::from({steps * agents, 2}, std::move(v));
}

// Runs the TDL_c stack over decoder tokens [steps * A, d_m].
Tensor run_blocks(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                  const Tensor& tokens, std::size_t steps, bool causal) {
  const ModelConfig& cfg = model.config();
  const std::size_t agents = ctx.agents;
  const Tensor phi_int = intention_embed(z, model.intent);

  AttentionMask self_mask, ctx_mask;
  DecoderMasks masks;
  if (causal || !cfg.interaction) {
    self_mask = build_decoder_mask(agents, steps, causal, cfg.interaction);
    masks.self = &self_mask;
  }
  if (!cfg.interaction) {
    const std::size_t n_s = ctx.context.phi_s.size(0);
    std::vector<std::size_t> q_agent(steps * agents), k_agent(n_s + agents * cfg.modes);
    for (std::size_t i = 0; i < q_agent.size(); ++i) q_agent[i] = i % agents;
    for (std::size_t j = 0; j < n_s; ++j) k_agent[j] = j % agents;
    for (std::size_t j = 0; j < agents * cfg.modes; ++j) k_agent[n_s + j] = j / cfg.modes;
    ctx_mask = agent_mask(q_agent, k_agent);
    masks.context = &ctx_mask;
  }

  Tensor x = tokens;
  for (std::size_t l = 0; l < model.decoder.blocks.size(); ++l) {
    const auto& block = model.decoder.blocks[l];
    const ProjectedMemory memory =
        concat_memory(ctx.ctx_memory[l], project_memory(block.cross_ctx, phi_int));
    const ProjectedMemory* map = ctx.map_memory.empty() ? nullptr : &ctx.map_memory[l];
    x = tdl_c(x, memory, map, block, cfg.block, masks);
  }
  return x;
}

std::vector<std::size_t> time_rows(std::size_t agents, std::size_t steps) {
  std::vector<std::size_t> rows(agents * steps);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i / agents;
  return rows;
}

void check_inputs(const SceneContext& ctx, const std::vector<Track>& tracks, std::size_t steps,
                  const char* what) {
  if (tracks.size() != ctx.agents) {
    throw DimensionError(std::string(what) + ": " + std::to_string(tracks.size()) +
                         " agents, context has " + std::to_string(ctx.agents));
  }
  for (const auto& t : tracks) {
    if (t.size() != steps) {
      throw DimensionError(std::string(what) + ": track length " + std::to_string(t.size()) +
                           ", expected " + std::to_string(steps));
    }
  }
}

}  // namespace

DecoderParams make_decoder(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  DecoderParams p;
  const std::size_t d = cfg.block.d_model;
  const bool with_map = cfg.map != MapMode::kNone;
  if (cfg.decoding == Decoding::kAutoregressive) {
    p.embed = make_linear(store, "decoder.embed", 3, d, rng);
  }
  p.time_pos = store.add_normal("decoder.time_pos", {cfg.horizon, d}, kEmbeddingStddev, rng);
  if (cfg.decoding == Decoding::kNonAutoregressive) {
    p.agent_embed =
        store.add_normal("decoder.agent_embed", {cfg.max_agents, d}, kEmbeddingStddev, rng);
  }
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i) {
    p.blocks.push_back(make_tdl_c(store, "decoder.block" + std::to_string(i), cfg.block, with_map, rng));
  }
  for (std::size_t i = 0; i < cfg.head_layers; ++i) {
    const bool last = i + 1 == cfg.head_layers;
    p.head.push_back(make_linear(store, "decoder.head" + std::to_string(i), d, last ? 5 : d, rng));
  }
  return p;
}

AttentionMask build_time_causal_mask(std::size_t agents, std::size_t steps) {
  return build_decoder_mask(agents, steps, true, true);
}

AttentionMask build_decoder_mask(std::size_t agents, std::size_t steps, bool causal,
                                 bool interaction) {
  if (agents < 1 || steps < 1) throw ParameterError("decoder mask needs A, T >= 1");
  const std::size_t n = agents * steps;
  AttentionMask m(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool time_ok = !causal || j / agents <= i / agents;
      const bool agent_ok = interaction || j % agents == i % agents;
      m.set(i, j, time_ok && agent_ok);
    }
  }
  return m;
}

Tensor gaussian_head(const Tensor& h, const std::vector<LinearLayer>& head, const Tensor& anchor) {
  Tensor x = h;
  for (std::size_t i = 0; i < head.size(); ++i) {
    x = head[i](x);
    if (i + 1 < head.size()) x = relu(x);
  }
  return gaussian_squash(x, anchor);
}

GaussianSeq GaussianSeq::from_tokens(const Tensor& rows, std::size_t agents, std::size_t steps) {
  if (rows.shape() != Shape{agents * steps, 5}) {
    throw DimensionError("GaussianSeq: rows " + shape_str(rows.shape()) + " for A=" +
                         std::to_string(agents) + ", T=" + std::to_string(steps));
  }
  GaussianSeq g{agents, steps, std::vector<double>(agents * steps * 5)};
  const auto src = rows.data();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t a = 0; a < agents; ++a) {
      std::copy_n(src.data() + (t * agents + a) * 5, 5, g.values.data() + (a * steps + t) * 5);
    }
  }
  return g;
}

Tensor GaussianSeq::to_tokens() const {
  std::vector<double> v(values.size());
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t a = 0; a < agents; ++a) {
      std::copy_n(at(a, t), 5, v.data() + (t * agents + a) * 5);
    }
  }
  return Tensor::from({agents * steps, 5}, std::move(v));
}

Tensor decode_from_inputs(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                          const std::vector<Track>& inputs) {
  const ModelConfig& cfg = model.config();
  if (cfg.decoding != Decoding::kAutoregressive) {
    throw ContractError("state-conditioned decoding needs an autoregressive model");
  }
  if (z.agents() != ctx.agents) throw DimensionError("mode config agent count mismatch");
  const std::size_t steps = inputs.empty() ? 0 : inputs.front().size();
  if (steps < 1 || steps > cfg.horizon) {
    throw DimensionError("decoder input length " + std::to_string(steps) + " outside [1, " +
                         std::to_string(cfg.horizon) + "]");
  }
  check_inputs(ctx, inputs, steps, "decode");
  const Tensor tokens =
      add(model.decoder.embed(state_features(inputs, cfg.coord_scale)),
          embedding(model.decoder.time_pos, time_rows(ctx.agents, steps)));
  const Tensor h = run_blocks(model, ctx, z, tokens, steps, true);
  return gaussian_head(h, model.decoder.head, anchor_rows(ctx, inputs, steps, cfg.head_anchor));
}

Tensor decode_teacher_forced(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                             const std::vector<Track>& future) {
  const std::size_t steps = model.config().horizon;
  check_inputs(ctx, future, steps, "decode_teacher_forced");
  std::vector<Track> inputs(ctx.agents);
  for (std::size_t a = 0; a < ctx.agents; ++a) {
    inputs[a].push_back(ctx.current[a]);
    inputs[a].insert(inputs[a].end(), future[a].begin(), future[a].end() - 1);
  }
  return decode_from_inputs(model, ctx, z, inputs);
}

Vec2 sample_bivariate(const double* g, Rng& rng) {
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  return {g[0] + g[2] * z1, g[1] + g[3] * (g[4] * z1 + std::sqrt(1.0 - g[4] * g[4]) * z2)};
}

Rollout decode_autoregressive(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                              Feedback select, std::uint64_t seed) {
  const ModelConfig& cfg = model.config();
  const std::size_t agents = ctx.agents;
  if (cfg.decoding == Decoding::kNonAutoregressive) {
    // One pass already yields every step.
    const Tensor rows = decode_non_autoregressive(model, ctx, z);
    Rollout r{{gaussian_means(rows, agents, cfg.horizon), z}, rows};
    if (select == Feedback::kSample) {
      Rng rng(seed);
      for (std::size_t t = 0; t < cfg.horizon; ++t) {
        for (std::size_t a = 0; a < agents; ++a) {
          r.sample.points[a][t] = sample_bivariate(rows.data().data() + (t * agents + a) * 5, rng);
        }
      }
    }
    return r;
  }
  Rng rng(seed);
  std::vector<Track> inputs(agents);
  for (std::size_t a = 0; a < agents; ++a) inputs[a].push_back(ctx.current[a]);
  std::vector<Track> points(agents);
  std::vector<Tensor> step_rows;
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    const Tensor rows = decode_from_inputs(model, ctx, z, inputs);
    const Tensor last = slice_rows(rows, t * agents, (t + 1) * agents);
    step_rows.push_back(last);
    const auto g = last.data();
    for (std::size_t a = 0; a < agents; ++a) {
      const double* row = g.data() + a * 5;
      const Vec2 next = select == Feedback::kMean ? Vec2{row[0], row[1]} : sample_bivariate(row, rng);
      points[a].push_back(next);
      inputs[a].push_back(next);
    }
  }
  return {{std::move(points), z}, concat(step_rows, 0)};
}

Tensor decode_non_autoregressive(const Model& model, const SceneContext& ctx, const ModeConfig& z) {
  const ModelConfig& cfg = model.config();
  if (cfg.decoding != Decoding::kNonAutoregressive) {
    throw ContractError("decode_non_autoregressive needs a model built for it");
  }
  if (z.agents() != ctx.agents) throw DimensionError("mode config agent count mismatch");
  const std::size_t agents = ctx.agents, steps = cfg.horizon;
  std::vector<std::size_t> agent_rows(agents * steps);
  for (std::size_t i = 0; i < agent_rows.size(); ++i) agent_rows[i] = i % agents;
  const Tensor tokens = add(embedding(model.decoder.time_pos, time_rows(agents, steps)),
                            embedding(model.decoder.agent_embed, agent_rows));
  const Tensor h = run_blocks(model, ctx, z, tokens, steps, false);
  // No inputs to extrapolate from: the anchor is the observed state carried
  // forward (position) or rolled out at constant velocity.
  std::vector<Track> anchors(agents, Track(steps));
  for (std::size_t a = 0; a < agents; ++a) {
    const Vec2 s0 = ctx.current[a], prev = ctx.previous[a];
    for (std::size_t t = 0; t < steps; ++t) {
      const double f = cfg.head_anchor == Anchor::kVelocity ? static_cast<double>(t + 1) : 0.0;
      anchors[a][t] = {s0.x + f * (s0.x - prev.x), s0.y + f * (s0.y - prev.y)};
    }
  }
  const Tensor anchor = cfg.head_anchor == Anchor::kNone
                            ? Tensor{}
                            : anchor_rows(ctx, anchors, steps, Anchor::kPosition);
  return gaussian_head(h, model.decoder.head, anchor);
}

std::vector<Track> gaussian_means(const Tensor& rows, std::size_t agents, std::size_t steps) {
  if (rows.shape() != Shape{agents * steps, 5}) {
    throw DimensionError("gaussian_means: rows " + shape_str(rows.shape()));
  }
  std::vector<Track> out(agents, Track(steps));
  const auto g = rows.data();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t a = 0; a < agents; ++a) {
      out[a][t] = {g[(t * agents + a) * 5], g[(t * agents + a) * 5 + 1]};
    }
  }
  return out;
}

Tensor per_agent_nll(const Tensor& rows, const std::vector<Track>& future) {
  const std::size_t agents = future.size();
  const std::size_t steps = agents == 0 ? 0 : future.front().size();
  if (agents == 0 || rows.shape() != Shape{agents * steps, 5}) {
    throw DimensionError("per_agent_nll: rows " + shape_str(rows.shape()) + " vs " +
                         std::to_string(agents) + " agents");
  }
  std::vector<double> targets(agents * steps * 2);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t a = 0; a < agents; ++a) {
      if (future[a].size() != steps) throw DimensionError("per_agent_nll: ragged future");
      targets[(t * agents + a) * 2] = future[a][t].x;
      targets[(t * agents + a) * 2 + 1] = future[a][t].y;
    }
  }
  const Tensor nll = bivariate_nll_rows(rows, targets);
  // [1, T] x [T, A] sums the steps of each agent.
  return reshape(matmul(Tensor::full({1, steps}, 1.0), reshape(nll, {steps, agents})), {agents});
}

}  // namespace latentformer
