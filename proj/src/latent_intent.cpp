// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/latent_intent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latentformer/error.hpp"

namespace latentformer {

namespace {
constexpr double kEmbeddingStddev = 0.02;
// Large enough that the modes start out distinguishable, so EM can break
// the symmetry between them.
constexpr double kModePosStddev = 1.0;
}  // namespace

void ModeConfig::validate(std::size_t k) const {
  if (modes.empty()) throw ContractError("mode config has no agents");
  for (std::size_t a = 0; a < modes.size(); ++a) {
    if (modes[a] >= k) {
      throw ContractError("mode " + std::to_string(modes[a]) + " of agent " + std::to_string(a) +
                          " is outside [0, " + std::to_string(k) + ")");
    }
  }
}

IntentParams make_intent(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  IntentParams p;
  const std::size_t d = cfg.block.d_model;
  p.intention = make_linear(store, "intent.embed", 2, d, rng);
  p.mode_pos = store.add_normal("intent.mode_pos", {cfg.modes, d}, kModePosStddev, rng);
  p.queries = store.add_normal("prior.queries", {cfg.modes, d}, kEmbeddingStddev, rng);
  p.query_proj = make_linear(store, "prior.query_proj", d + 1, d, rng);
  const bool with_map = cfg.map != MapMode::kNone;
  for (std::size_t i = 0; i < cfg.prior_depth; ++i) {
    p.prior_blocks.push_back(
        make_tdl_d(store, "prior.block" + std::to_string(i), cfg.block, with_map, rng));
  }
  p.prior_head = make_feed_forward(store, "prior.head", d, d, 1, rng);
  return p;
}

Tensor intention_embed(const ModeConfig& z, const IntentParams& p) {
  const std::size_t k = p.mode_pos.size(0);
  z.validate(k);
  const std::size_t a_count = z.agents();
  std::vector<double> f(a_count * k * 2);
  std::vector<std::size_t> slot(a_count * k);
  for (std::size_t a = 0; a < a_count; ++a) {
    for (std::size_t m = 0; m < k; ++m) {
      f[(a * k + m) * 2] = z.modes[a] == m ? 1.0 : 0.0;
      f[(a * k + m) * 2 + 1] = static_cast<double>(a);
      slot[a * k + m] = m;
    }
  }
  return add(p.intention(Tensor::from({a_count * k, 2}, std::move(f))), embedding(p.mode_pos, slot));
}

Tensor intention_context(const Tensor& phi_s, const Tensor& phi_intention) {
  return concat({phi_s, phi_intention}, 0);
}

AttentionMask agent_mask(std::span<const std::size_t> query_agent,
                         std::span<const std::size_t> key_agent) {
  AttentionMask m(query_agent.size(), key_agent.size(), false);
  for (std::size_t i = 0; i < query_agent.size(); ++i) {
    for (std::size_t j = 0; j < key_agent.size(); ++j) {
      m.set(i, j, key_agent[j] == kAnyAgent || key_agent[j] == query_agent[i]);
    }
  }
  return m;
}

Tensor mode_log_prior(const Tensor& phi_s, const Tensor& phi_map, std::size_t agents,
                      const IntentParams& p, const ModelConfig& cfg) {
  const std::size_t k = cfg.modes;
  // Query (a, k) = proj([P_k, a]).
  std::vector<std::size_t> rows(agents * k);
  std::vector<double> index(agents * k);
  for (std::size_t a = 0; a < agents; ++a) {
    for (std::size_t m = 0; m < k; ++m) {
      rows[a * k + m] = m;
      index[a * k + m] = static_cast<double>(a);
    }
  }
  const Tensor tiled = embedding(p.queries, rows);
  const Tensor agent_col = Tensor::from({agents * k, 1}, std::move(index));
  Tensor x = p.query_proj(concat({tiled, agent_col}, 1));

  AttentionMask self_mask, ctx_mask;
  DecoderMasks masks;
  if (!cfg.interaction) {
    std::vector<std::size_t> q_agent(agents * k), s_agent(phi_s.size(0));
    for (std::size_t i = 0; i < q_agent.size(); ++i) q_agent[i] = i / k;
    for (std::size_t j = 0; j < s_agent.size(); ++j) s_agent[j] = j % agents;
    self_mask = agent_mask(q_agent, q_agent);
    ctx_mask = agent_mask(q_agent, s_agent);
    masks.self = &self_mask;
    masks.context = &ctx_mask;
  }
  for (const auto& block : p.prior_blocks) x = tdl_d(x, phi_s, phi_map, block, cfg.block, masks);
  const Tensor logits = reshape(p.prior_head(x), {agents, k});
  return log_softmax(logits, -1);
}

ModePrior mode_prior(const Tensor& phi_s, const Tensor& phi_map, std::size_t agents,
                     const IntentParams& p, const ModelConfig& cfg) {
  const Tensor lp = mode_log_prior(phi_s, phi_map, agents, p, cfg);
  ModePrior prior{agents, cfg.modes, {}};
  prior.probs.reserve(lp.numel());
  for (double v : lp.data()) prior.probs.push_back(std::exp(v));
  return prior;
}

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double total = 0.0;
  for (double x : v) total += std::exp(x - mx);
  return mx + std::log(total);
}

double log_marginal(std::span<const double> nll, std::span<const double> log_prior,
                    std::size_t agents, std::size_t modes) {
  if (nll.size() != agents * modes || log_prior.size() != agents * modes) {
    throw DimensionError("log_marginal: expected " + std::to_string(agents * modes) + " entries");
  }
  double total = 0.0;
  std::vector<double> terms(modes);
  for (std::size_t a = 0; a < agents; ++a) {
    for (std::size_t m = 0; m < modes; ++m) {
      terms[m] = -nll[a * modes + m] + log_prior[a * modes + m];
    }
    total += log_sum_exp(terms);
  }
  return total;
}

}  // namespace latentformer
