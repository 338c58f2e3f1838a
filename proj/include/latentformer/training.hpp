// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentformer/config.hpp"
#include "latentformer/decoder.hpp"
#include "latentformer/model.hpp"
#include "latentformer/scene.hpp"

namespace latentformer {

/// Per-agent NLL (summed over steps) of a future under a Gaussian sequence.
std::vector<double> bivariate_nll(const GaussianSeq& g, const std::vector<Track>& target);

/// Per-agent posterior over modes, row-major [A, K].
struct Posterior {
  std::size_t agents = 0;
  std::size_t modes = 0;
  std::vector<double> q;

  double operator()(std::size_t a, std::size_t k) const { return q[a * modes + k]; }
};

/// q[a, k] proportional to exp(-nll[a, k]) * p[a, k], normalized per agent.
Posterior posterior_from_scores(std::span<const double> nll, std::span<const double> log_prior,
                                std::size_t agents, std::size_t modes);

/// Future of every agent in a scene, [A][T].
std::vector<Track> scene_future(const Scene& scene);

/// Decoder pass whose likelihood enters the E- and M-steps: teacher forcing,
/// or a single pass for non-autoregressive models.
Tensor likelihood_decode(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                         const std::vector<Track>& future);

/// Result of the factorized E-step. The per-configuration NLL tensors stay on
/// the tape when computed with gradients enabled, so the M-step reuses them.
struct EStep {
  Posterior q;
  ModeConfig baseline;
  std::vector<ModeConfig> configs;  // configs[0] is the baseline
  std::vector<Tensor> config_nll;   // per config, [A]
  /// nll_index[a * K + k] is the config whose agent a carries mode k.
  std::vector<std::size_t> nll_index;
  std::vector<double> nll;          // [A, K] values
};

/// Baseline = per-agent prior argmax; each agent's mode is swept over K with
/// the others held at the baseline.
EStep posterior_factorized(const Model& model, const SceneContext& ctx,
                           const std::vector<Track>& future);

struct JointPosterior {
  std::size_t agents = 0;
  std::size_t modes = 0;
  std::vector<ModeConfig> configs;  // K^A, lexicographic with agent 0 slowest
  std::vector<double> q;

  /// Marginal q(Z^a = k), row-major [A, K].
  Posterior marginals() const;
};

/// Exact joint posterior by enumeration; CapacityError unless A <= 2, K <= 3.
JointPosterior posterior_exact(const Model& model, const SceneContext& ctx,
                               const std::vector<Track>& future);

/// sum_a sum_k q[a,k] * (NLL[a,k] - log p[a,k]) with NLL terms taken from the
/// E-step configurations (decoded afresh under the current parameters).
Tensor em_loss(const Model& model, const SceneContext& ctx, const std::vector<Track>& future,
               const Posterior& q, const ModeConfig& baseline);

/// The same objective from E-step decodes already on the tape.
Tensor em_loss_from_estep(const SceneContext& ctx, const EStep& estep);

/// Triangular wave over `lr_period` epochs between lr * lr_min_ratio and lr.
double cyclic_lr(const TrainConfig& cfg, std::size_t epoch);

/// Scales every gradient so the global L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

/// v = mu v + g; theta -= lr v.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}
  void step(ParamStore& store, double lr);
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::string phase;  // "tf", "ar" or "nar"
  std::size_t steps = 0;
  double grad_norm = 0.0;  // mean pre-clip norm over the epoch
  std::optional<double> tf_min_ade;
  double seconds = 0.0;
};

struct TrainOptions {
  /// Checkpoint and metrics.jsonl destination; empty disables writing.
  std::string out_dir;
  /// Teacher-forced minADE on the training set every n epochs (0 = never).
  std::size_t eval_every = 0;
  /// Stop once teacher-forced minADE falls below this (needs eval_every).
  std::optional<double> stop_below_min_ade;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Stored in the checkpoint manifest.
  std::optional<RunConfig> run_config;
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

/// One optimizer step on a batch; returns the mean scene loss.
struct StepStats {
  double loss = 0.0;
  double grad_norm = 0.0;
};
StepStats train_step(Model& model, SgdMomentum& opt, std::span<const Scene* const> batch,
                     double lr, double clip_norm, bool autoregressive, Feedback feedback,
                     std::uint64_t seed);

TrainResult train(Model& model, const SceneSet& data, const TrainConfig& cfg,
                  const TrainOptions& options = {});

/// Mean over agents and scenes of min over K of the teacher-forced ADE of the
/// Gaussian means.
double teacher_forced_min_ade(const Model& model, const SceneSet& data);

}  // namespace latentformer
