// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "latentformer/config.hpp"
#include "latentformer/nn.hpp"

namespace latentformer {

/// One active intention per agent.
struct ModeConfig {
  std::vector<std::size_t> modes;

  std::size_t agents() const { return modes.size(); }
  /// Throws ContractError when any mode is >= k.
  void validate(std::size_t k) const;
  friend bool operator==(const ModeConfig&, const ModeConfig&) = default;
};

/// Per-agent categorical over K modes, row-major [A, K].
struct ModePrior {
  std::size_t agents = 0;
  std::size_t modes = 0;
  std::vector<double> probs;

  double operator()(std::size_t a, std::size_t k) const { return probs[a * modes + k]; }
};

struct IntentParams {
  LinearLayer intention;  // (bit, agent index) -> d_m
  Tensor mode_pos;        // [K, d_m], marks which slot of the K-token group a token is
  Tensor queries;         // P, [K, d_m]
  LinearLayer query_proj; // (P_k, agent index) -> d_m
  std::vector<TDLdParams> prior_blocks;
  FeedForward prior_head; // d_m -> d_m -> 1
};

IntentParams make_intent(ParamStore& store, const ModelConfig& cfg, Rng& rng);

/// phi_intention: A * K tokens in agent-major order, token (a, k) embedding
/// (z_a[k], a) plus the slot embedding of k. Without the slot term the K
/// tokens of an agent form the same set for every mode, and attention, being
/// blind to key order, could not tell the modes apart.
Tensor intention_embed(const ModeConfig& z, const IntentParams& p);

/// phi' = [phi_S; phi_intention] along the token axis.
Tensor intention_context(const Tensor& phi_s, const Tensor& phi_intention);

inline constexpr std::size_t kAnyAgent = static_cast<std::size_t>(-1);

/// Cross-attention pattern from per-agent queries to a context of
/// agent-tagged tokens: query i belongs to agent query_agent[i], key j to
/// key_agent[j]; keys tagged kAnyAgent are visible to everyone.
AttentionMask agent_mask(std::span<const std::size_t> query_agent,
                         std::span<const std::size_t> key_agent);

/// log p(Z^a = k | phi) as an [A, K] tensor on the tape.
Tensor mode_log_prior(const Tensor& phi_s, const Tensor& phi_map, std::size_t agents,
                      const IntentParams& p, const ModelConfig& cfg);

ModePrior mode_prior(const Tensor& phi_s, const Tensor& phi_map, std::size_t agents,
                     const IntentParams& p, const ModelConfig& cfg);

/// Sum over agents of log sum_k exp(-nll[a, k]) p[a, k], via log-sum-exp.
/// Inputs are row-major [A, K] negative log-likelihoods and log-priors.
double log_marginal(std::span<const double> nll, std::span<const double> log_prior,
                    std::size_t agents, std::size_t modes);

/// Stable log(sum(exp(v))).
double log_sum_exp(std::span<const double> v);

}  // namespace latentformer
