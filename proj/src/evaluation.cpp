// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "latentformer/checkpoint.hpp"
#include "latentformer/error.hpp"
#include "latentformer/parallel.hpp"

namespace latentformer {

using nlohmann::json;

double ade(const Track& pred, const Track& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw DimensionError("ade: lengths " + std::to_string(pred.size()) + " and " +
                         std::to_string(gt.size()));
  }
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) total += distance(pred[t], gt[t]);
  return total / static_cast<double>(pred.size());
}

double fde(const Track& pred, const Track& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw DimensionError("fde: lengths " + std::to_string(pred.size()) + " and " +
                         std::to_string(gt.size()));
  }
  return distance(pred.back(), gt.back());
}

MinAvg aggregate(std::span<const double> per_sample) {
  if (per_sample.empty()) throw ContractError("aggregate: K must be >= 1");
  MinAvg r{per_sample[0], 0.0};
  for (double v : per_sample) {
    r.min = std::min(r.min, v);
    r.avg += v;
  }
  r.avg /= static_cast<double>(per_sample.size());
  return r;
}

std::optional<double> rf(double avg_fde, double min_fde) {
  if (min_fde == 0.0) return std::nullopt;
  return avg_fde / min_fde;
}

std::vector<TrajectorySample> ModelPredictor::predict(const Scene& scene, std::size_t k,
                                                      bool sampled, std::uint64_t seed) const {
  NoGradGuard guard;
  const Tensor* phi = model_.config().map == MapMode::kNone ? nullptr : &cache_.get(model_, scene.mask);
  const SceneContext ctx = model_.encode(scene, phi);
  std::vector<TrajectorySample> out;
  for (std::size_t m = 0; m < k; ++m) {
    const Rollout r = decode_autoregressive(model_, ctx, uniform_modes(ctx.agents, m),
                                            sampled ? Feedback::kSample : Feedback::kMean,
                                            seed + m);
    out.push_back(r.sample);
  }
  return out;
}

std::optional<ModePrior> ModelPredictor::prior(const Scene& scene) const {
  NoGradGuard guard;
  const Tensor* phi = model_.config().map == MapMode::kNone ? nullptr : &cache_.get(model_, scene.mask);
  const SceneContext ctx = model_.encode(scene, phi);
  ModePrior p{ctx.agents, model_.config().modes, {}};
  for (double v : ctx.log_prior.data()) p.probs.push_back(std::exp(v));
  return p;
}

std::vector<TrajectorySample> GroundTruthOracle::predict(const Scene& scene, std::size_t k, bool,
                                                         std::uint64_t) const {
  std::vector<TrajectorySample> out;
  for (std::size_t m = 0; m < k; ++m) {
    TrajectorySample s;
    for (const auto& a : scene.agents) s.points.push_back(a.future);
    s.modes = uniform_modes(scene.agents.size(), m);
    out.push_back(std::move(s));
  }
  return out;
}

LoadedPredictor load_predictor(const std::string& dir) {
  const json m = read_manifest(dir);
  const std::string kind = m.value("model_kind", std::string{});
  LoadedPredictor lp;
  if (kind == kModelKindOracle) {
    lp.predictor = std::make_unique<GroundTruthOracle>(
        m.at("modes").get<std::size_t>(), m.at("tau").get<std::size_t>(), m.at("horizon").get<std::size_t>());
    return lp;
  }
  lp.model = load_model(dir);
  lp.predictor = std::make_unique<ModelPredictor>(*lp.model);
  return lp;
}

namespace {

struct AgentErrors {
  MinAvg ade, fde;
};

Metrics summarize(const std::vector<AgentErrors>& agents) {
  Metrics m;
  m.agents = agents.size();
  for (const auto& a : agents) {
    m.min_ade += a.ade.min;
    m.avg_ade += a.ade.avg;
    m.min_fde += a.fde.min;
    m.avg_fde += a.fde.avg;
  }
  const double n = static_cast<double>(agents.size());
  m.min_ade /= n;
  m.avg_ade /= n;
  m.min_fde /= n;
  m.avg_fde /= n;
  m.rf = rf(m.avg_fde, m.min_fde);
  return m;
}

}  // namespace

namespace {

std::size_t checked_k(const Predictor& predictor, const SceneSet& data, const EvalOptions& options) {
  if (data.tau != predictor.tau() || data.horizon != predictor.horizon()) {
    throw ConfigError("scene set tau/horizon " + std::to_string(data.tau) + "/" +
                      std::to_string(data.horizon) + " do not match the model's " +
                      std::to_string(predictor.tau()) + "/" + std::to_string(predictor.horizon()));
  }
  const std::size_t k = options.k == 0 ? predictor.modes() : options.k;
  if (k > predictor.modes()) {
    throw ConfigError("requested K=" + std::to_string(k) + " exceeds the model's " +
                      std::to_string(predictor.modes()) + " modes");
  }
  return k;
}

std::uint64_t scene_seed(const EvalOptions& options, std::size_t i) { return options.seed + i * 7919; }

}  // namespace

EvalReport evaluate(const Predictor& predictor, const SceneSet& data, const EvalOptions& options) {
  const std::size_t k = checked_k(predictor, data, options);
  EvalReport report;
  report.k = k;
  report.provenance = options.sampled ? "sampled" : "mode_mean";
  std::vector<std::vector<AgentErrors>> per_scene(data.scenes.size());
  parallel_for(data.scenes.size(), [&](std::size_t i) {
    const Scene& scene = data.scenes[i];
    const auto samples = predictor.predict(scene, k, options.sampled, scene_seed(options, i));
    for (std::size_t a = 0; a < scene.agents.size(); ++a) {
      std::vector<double> ades, fdes;
      for (const auto& s : samples) {
        ades.push_back(ade(s.points[a], scene.agents[a].future));
        fdes.push_back(fde(s.points[a], scene.agents[a].future));
      }
      per_scene[i].push_back({aggregate(ades), aggregate(fdes)});
    }
  });
  std::vector<AgentErrors> all;
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    report.scenes.push_back({data.scenes[i].id, summarize(per_scene[i])});
    all.insert(all.end(), per_scene[i].begin(), per_scene[i].end());
  }
  if (!all.empty()) report.aggregate = summarize(all);
  return report;
}

namespace {

json metrics_json(const Metrics& m) {
  json j{{"minADE", m.min_ade}, {"avgADE", m.avg_ade}, {"minFDE", m.min_fde},
         {"avgFDE", m.avg_fde}, {"agents", m.agents}};
  if (m.rf) {
    j["RF"] = *m.rf;
  } else {
    j["RF"] = "exact-hit";
  }
  return j;
}

}  // namespace

json to_json(const EvalReport& r) {
  json scenes = json::array();
  for (const auto& s : r.scenes) {
    json j = metrics_json(s.metrics);
    j["id"] = s.id;
    scenes.push_back(j);
  }
  return json{{"k", r.k}, {"provenance", r.provenance}, {"aggregate", metrics_json(r.aggregate)},
              {"scenes", scenes}};
}

std::string format_table(const EvalReport& r) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof line, "%-14s %8s %8s %8s %8s %8s\n", "scene", "minADE", "avgADE",
                "minFDE", "avgFDE", "RF");
  out += line;
  const auto row = [&](const std::string& name, const Metrics& m) {
    char rf_text[32];
    if (m.rf) {
      std::snprintf(rf_text, sizeof rf_text, "%8.3f", *m.rf);
    } else {
      std::snprintf(rf_text, sizeof rf_text, "%8s", "exact");
    }
    std::snprintf(line, sizeof line, "%-14s %8.3f %8.3f %8.3f %8.3f %s\n", name.c_str(), m.min_ade,
                  m.avg_ade, m.min_fde, m.avg_fde, rf_text);
    out += line;
  };
  for (const auto& s : r.scenes) row(s.id, s.metrics);
  row("all (K=" + std::to_string(r.k) + ")", r.aggregate);
  return out;
}

// ---- prediction files --------------------------------------------------------

const ScenePredictions& PredictionSet::find(const std::string& id) const {
  for (const auto& s : scenes) {
    if (s.id == id) return s;
  }
  throw FormatError("predictions: no scene '" + id + "'");
}

PredictionSet predict_all(const Predictor& predictor, const SceneSet& data,
                          const EvalOptions& options) {
  const std::size_t k = checked_k(predictor, data, options);
  PredictionSet set;
  set.k = k;
  set.provenance = options.sampled ? "sampled" : "mode_mean";
  set.scenes.resize(data.scenes.size());
  parallel_for(data.scenes.size(), [&](std::size_t i) {
    const Scene& scene = data.scenes[i];
    set.scenes[i].id = scene.id;
    set.scenes[i].samples = predictor.predict(scene, k, options.sampled, scene_seed(options, i));
    set.scenes[i].prior = predictor.prior(scene);
  });
  return set;
}

json to_json(const PredictionSet& set) {
  json scenes = json::array();
  for (const auto& sp : set.scenes) {
    json samples = json::array();
    for (const auto& s : sp.samples) {
      json agents = json::array();
      for (const auto& track : s.points) {
        json pts = json::array();
        for (const auto& p : track) pts.push_back({p.x, p.y});
        agents.push_back(std::move(pts));
      }
      samples.push_back({{"modes", s.modes.modes}, {"points", std::move(agents)}});
    }
    json entry{{"id", sp.id}, {"samples", std::move(samples)}};
    if (sp.prior) {
      json rows = json::array();
      for (std::size_t a = 0; a < sp.prior->agents; ++a) {
        rows.push_back(std::vector<double>(sp.prior->probs.begin() + static_cast<std::ptrdiff_t>(a * sp.prior->modes),
                                           sp.prior->probs.begin() + static_cast<std::ptrdiff_t>((a + 1) * sp.prior->modes)));
      }
      entry["prior"] = std::move(rows);
    }
    scenes.push_back(std::move(entry));
  }
  return {{"format", "latentformer.predictions"}, {"version", 1}, {"k", set.k},
          {"provenance", set.provenance}, {"scenes", std::move(scenes)}};
}

PredictionSet predictions_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "latentformer.predictions") {
      throw FormatError("predictions: unexpected format tag");
    }
    PredictionSet set;
    set.k = j.at("k").get<std::size_t>();
    set.provenance = j.at("provenance").get<std::string>();
    for (const auto& e : j.at("scenes")) {
      ScenePredictions sp;
      sp.id = e.at("id").get<std::string>();
      for (const auto& s : e.at("samples")) {
        TrajectorySample ts;
        ts.modes.modes = s.at("modes").get<std::vector<std::size_t>>();
        for (const auto& agent : s.at("points")) {
          Track track;
          for (const auto& p : agent) track.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
          ts.points.push_back(std::move(track));
        }
        sp.samples.push_back(std::move(ts));
      }
      if (e.contains("prior")) {
        ModePrior prior;
        for (const auto& row : e.at("prior")) {
          const auto v = row.get<std::vector<double>>();
          prior.modes = v.size();
          prior.probs.insert(prior.probs.end(), v.begin(), v.end());
          ++prior.agents;
        }
        sp.prior = std::move(prior);
      }
      set.scenes.push_back(std::move(sp));
    }
    return set;
  } catch (const json::exception& e) {
    throw FormatError(std::string("predictions: ") + e.what());
  }
}

void save_predictions(const std::string& path, const PredictionSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(set).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

PredictionSet load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return predictions_from_json(j);
}

}  // namespace latentformer
