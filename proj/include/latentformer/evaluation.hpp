// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "latentformer/decoder.hpp"
#include "latentformer/model.hpp"
#include "latentformer/scene.hpp"

namespace latentformer {

double ade(const Track& pred, const Track& gt);
double fde(const Track& pred, const Track& gt);

struct MinAvg {
  double min = 0.0;
  double avg = 0.0;
};

/// Min and mean over the K per-sample errors of one agent.
MinAvg aggregate(std::span<const double> per_sample);

/// avgFDE / minFDE; nullopt is the exact-hit case (minFDE == 0).
std::optional<double> rf(double avg_fde, double min_fde);

struct Metrics {
  double min_ade = 0.0;
  double avg_ade = 0.0;
  double min_fde = 0.0;
  double avg_fde = 0.0;
  std::optional<double> rf;  // nullopt = exact hit
  std::size_t agents = 0;
};

struct SceneMetrics {
  std::string id;
  Metrics metrics;
};

struct EvalReport {
  std::size_t k = 0;
  std::string provenance;  // "mode_mean" or "sampled"
  std::vector<SceneMetrics> scenes;
  Metrics aggregate;
};

/// Anything that turns a scene into K candidate futures per agent.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t modes() const = 0;
  virtual std::size_t tau() const = 0;
  virtual std::size_t horizon() const = 0;
  /// samples[k] conditions every agent on mode k.
  virtual std::vector<TrajectorySample> predict(const Scene& scene, std::size_t k, bool sampled,
                                                std::uint64_t seed) const = 0;
  /// Per-agent prior over modes when the predictor has one.
  virtual std::optional<ModePrior> prior(const Scene& /*scene*/) const { return std::nullopt; }
};

class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const Model& model) : model_(model) {}
  std::size_t modes() const override { return model_.config().modes; }
  std::size_t tau() const override { return model_.config().tau; }
  std::size_t horizon() const override { return model_.config().horizon; }
  std::vector<TrajectorySample> predict(const Scene& scene, std::size_t k, bool sampled,
                                        std::uint64_t seed) const override;
  std::optional<ModePrior> prior(const Scene& scene) const override;

 private:
  const Model& model_;
  mutable MapCache cache_;
};

/// Returns the ground-truth future for every mode.
class GroundTruthOracle : public Predictor {
 public:
  GroundTruthOracle(std::size_t modes, std::size_t tau, std::size_t horizon)
      : modes_(modes), tau_(tau), horizon_(horizon) {}
  std::size_t modes() const override { return modes_; }
  std::size_t tau() const override { return tau_; }
  std::size_t horizon() const override { return horizon_; }
  std::vector<TrajectorySample> predict(const Scene& scene, std::size_t k, bool sampled,
                                        std::uint64_t seed) const override;

 private:
  std::size_t modes_, tau_, horizon_;
};

/// A checkpoint opened for inference; owns the model when there is one.
struct LoadedPredictor {
  std::unique_ptr<Model> model;
  std::unique_ptr<Predictor> predictor;
};

LoadedPredictor load_predictor(const std::string& checkpoint_dir);

struct EvalOptions {
  std::size_t k = 0;  // 0 = the predictor's mode count
  bool sampled = false;
  std::uint64_t seed = 0;
};

/// Per-agent min/avg over K, then the mean over all agents of all scenes.
EvalReport evaluate(const Predictor& predictor, const SceneSet& data, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);

/// Raw K-sample predictions, as written by `predict` and drawn by `render`.
struct ScenePredictions {
  std::string id;
  std::vector<TrajectorySample> samples;
  std::optional<ModePrior> prior;
};

struct PredictionSet {
  std::size_t k = 0;
  std::string provenance;
  std::vector<ScenePredictions> scenes;
  /// Throws FormatError for an unknown id.
  const ScenePredictions& find(const std::string& id) const;
};

/// Same samples (and seeds) that evaluate() scores.
PredictionSet predict_all(const Predictor& predictor, const SceneSet& data,
                          const EvalOptions& options = {});
nlohmann::json to_json(const PredictionSet& set);
PredictionSet predictions_from_json(const nlohmann::json& j);
void save_predictions(const std::string& path, const PredictionSet& set);
PredictionSet load_predictions(const std::string& path);
std::string format_table(const EvalReport& report);

}  // namespace latentformer
