// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include <nlohmann/json.hpp>

#include "latentformer/checkpoint.hpp"
#include "latentformer/error.hpp"
#include "latentformer/evaluation.hpp"
#include "latentformer/latent_intent.hpp"

namespace latentformer {

using nlohmann::json;

namespace {

// Configurations whose M-step weight falls below this are not rolled out in
// the autoregressive phase.
constexpr double kArMinWeight = 1e-4;

Tensor sum_scalars(const std::vector<Tensor>& parts) {
  Tensor total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
  return total;
}

// Per-config weight vectors [A] for the NLL terms of the M-step objective.
std::vector<std::vector<double>> config_weights(const EStep& e) {
  const std::size_t agents = e.q.agents, modes = e.q.modes;
  std::vector<std::vector<double>> w(e.configs.size(), std::vector<double>(agents, 0.0));
  for (std::size_t a = 0; a < agents; ++a) {
    for (std::size_t k = 0; k < modes; ++k) w[e.nll_index[a * modes + k]][a] += e.q(a, k);
  }
  return w;
}

}  // namespace

std::vector<double> bivariate_nll(const GaussianSeq& g, const std::vector<Track>& target) {
  NoGradGuard guard;
  const Tensor v = per_agent_nll(g.to_tokens(), target);
  return {v.data().begin(), v.data().end()};
}

Posterior posterior_from_scores(std::span<const double> nll, std::span<const double> log_prior,
                                std::size_t agents, std::size_t modes) {
  if (nll.size() != agents * modes || log_prior.size() != agents * modes) {
    throw DimensionError("posterior: expected " + std::to_string(agents * modes) + " scores");
  }
  Posterior p{agents, modes, std::vector<double>(agents * modes)};
  std::vector<double> s(modes);
  for (std::size_t a = 0; a < agents; ++a) {
    for (std::size_t k = 0; k < modes; ++k) s[k] = -nll[a * modes + k] + log_prior[a * modes + k];
    const double lse = log_sum_exp(s);
    for (std::size_t k = 0; k < modes; ++k) p.q[a * modes + k] = std::exp(s[k] - lse);
  }
  return p;
}

std::vector<Track> scene_future(const Scene& scene) {
  std::vector<Track> f;
  for (const auto& a : scene.agents) f.push_back(a.future);
  return f;
}

Tensor likelihood_decode(const Model& model, const SceneContext& ctx, const ModeConfig& z,
                         const std::vector<Track>& future) {
  if (model.config().decoding == Decoding::kNonAutoregressive) {
    return decode_non_autoregressive(model, ctx, z);
  }
  return decode_teacher_forced(model, ctx, z, future);
}

namespace {

// Baseline plus every single-agent deviation from it, decoded in order.
void sweep_decodes(const Model& model, const SceneContext& ctx, const std::vector<Track>& future,
                   EStep& e) {
  const std::size_t agents = ctx.agents, modes = model.config().modes;
  e.configs.assign(1, e.baseline);
  e.nll_index.assign(agents * modes, 0);
  for (std::size_t a = 0; a < agents; ++a) {
    for (std::size_t k = 0; k < modes; ++k) {
      if (k == e.baseline.modes[a]) continue;
      ModeConfig z = e.baseline;
      z.modes[a] = k;
      e.nll_index[a * modes + k] = e.configs.size();
      e.configs.push_back(std::move(z));
    }
  }
  e.config_nll.clear();
  for (const auto& z : e.configs) {
    e.config_nll.push_back(per_agent_nll(likelihood_decode(model, ctx, z, future), future));
  }
}

}  // namespace

EStep posterior_factorized(const Model& model, const SceneContext& ctx,
                           const std::vector<Track>& future) {
  const std::size_t agents = ctx.agents, modes = model.config().modes;
  EStep e;
  e.baseline = prior_argmax(ctx);
  sweep_decodes(model, ctx, future, e);
  e.nll.resize(agents * modes);
  for (std::size_t a = 0; a < agents; ++a) {
    for (std::size_t k = 0; k < modes; ++k) {
      e.nll[a * modes + k] = e.config_nll[e.nll_index[a * modes + k]].data()[a];
    }
  }
  e.q = posterior_from_scores(e.nll, ctx.log_prior.data(), agents, modes);
  return e;
}

Posterior JointPosterior::marginals() const {
  Posterior p{agents, modes, std::vector<double>(agents * modes, 0.0)};
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (std::size_t a = 0; a < agents; ++a) p.q[a * modes + configs[c].modes[a]] += q[c];
  }
  return p;
}

JointPosterior posterior_exact(const Model& model, const SceneContext& ctx,
                               const std::vector<Track>& future) {
  const std::size_t agents = ctx.agents, modes = model.config().modes;
  if (agents > 2 || modes > 3) {
    throw CapacityError("posterior_exact enumerates K^A configurations; needs A <= 2 and K <= 3, got A=" +
                        std::to_string(agents) + ", K=" + std::to_string(modes));
  }
  JointPosterior jp{agents, modes, {}, {}};
  std::size_t total = 1;
  for (std::size_t a = 0; a < agents; ++a) total *= modes;
  const auto lp = ctx.log_prior.data();
  std::vector<double> scores;
  for (std::size_t c = 0; c < total; ++c) {
    ModeConfig z{std::vector<std::size_t>(agents)};
    std::size_t rem = c;
    for (std::size_t a = agents; a-- > 0;) {
      z.modes[a] = rem % modes;
      rem /= modes;
    }
    const Tensor nll = per_agent_nll(likelihood_decode(model, ctx, z, future), future);
    double s = 0.0;
    for (std::size_t a = 0; a < agents; ++a) s += -nll.data()[a] + lp[a * modes + z.modes[a]];
    scores.push_back(s);
    jp.configs.push_back(std::move(z));
  }
  const double lse = log_sum_exp(scores);
  for (double s : scores) jp.q.push_back(std::exp(s - lse));
  return jp;
}

Tensor em_loss_from_estep(const SceneContext& ctx, const EStep& e) {
  const auto weights = config_weights(e);
  std::vector<Tensor> parts;
  for (std::size_t c = 0; c < e.configs.size(); ++c) {
    bool any = false;
    for (double w : weights[c]) any = any || w != 0.0;
    if (!any || !e.config_nll[c].defined()) continue;
    parts.push_back(weighted_sum(e.config_nll[c], weights[c]));
  }
  std::vector<double> neg_q(e.q.q.size());
  for (std::size_t i = 0; i < neg_q.size(); ++i) neg_q[i] = -e.q.q[i];
  parts.push_back(weighted_sum(ctx.log_prior, neg_q));
  return sum_scalars(parts);
}

Tensor em_loss(const Model& model, const SceneContext& ctx, const std::vector<Track>& future,
               const Posterior& q, const ModeConfig& baseline) {
  const std::size_t agents = ctx.agents, modes = model.config().modes;
  if (q.agents != agents || q.modes != modes) throw DimensionError("em_loss: posterior shape mismatch");
  baseline.validate(modes);
  EStep e;
  e.q = q;
  e.baseline = baseline;
  sweep_decodes(model, ctx, future, e);
  return em_loss_from_estep(ctx, e);
}

double cyclic_lr(const TrainConfig& cfg, std::size_t epoch) {
  const double lo = cfg.lr * cfg.lr_min_ratio, hi = cfg.lr;
  const double frac = static_cast<double>(epoch % cfg.lr_period) / static_cast<double>(cfg.lr_period);
  const double tri = 1.0 - std::abs(2.0 * frac - 1.0);
  return lo + (hi - lo) * tri;
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : store.entries()) {
    if (!t.has_grad()) continue;
    Tensor h = t;
    for (double g : h.mutable_grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& [name, t] : store.entries()) {
      if (!t.has_grad()) continue;
      Tensor h = t;
      for (double& g : h.mutable_grad()) g *= f;
    }
  }
  return norm;
}

void SgdMomentum::step(ParamStore& store, double lr) {
  const auto& entries = store.entries();
  if (velocity_.empty()) {
    for (const auto& [name, t] : entries) velocity_.emplace_back(t.numel(), 0.0);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor h = entries[i].second;
    auto& v = velocity_[i];
    auto x = h.mutable_data();
    if (h.has_grad()) {
      const auto g = h.mutable_grad();
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = momentum_ * v[j] + g[j];
    } else {
      for (double& vj : v) vj *= momentum_;
    }
    for (std::size_t j = 0; j < v.size(); ++j) x[j] -= lr * v[j];
  }
}

StepStats train_step(Model& model, SgdMomentum& opt, std::span<const Scene* const> batch,
                     double lr, double clip_norm, bool autoregressive, Feedback feedback,
                     std::uint64_t seed) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  model.params().zero_grad();
  std::map<std::vector<std::uint8_t>, Tensor> maps;
  std::vector<Tensor> losses;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Scene& scene = *batch[s];
    Tensor phi_map;
    if (model.config().map != MapMode::kNone) {
      auto it = maps.find(scene.mask.cells);
      if (it == maps.end()) it = maps.emplace(scene.mask.cells, model.encode_map(scene.mask)).first;
      phi_map = it->second;
    }
    const SceneContext ctx = model.encode(scene, &phi_map);
    const std::vector<Track> future = scene_future(scene);
    if (!autoregressive) {
      const EStep e = posterior_factorized(model, ctx, future);
      losses.push_back(em_loss_from_estep(ctx, e));
      continue;
    }
    // E-step on teacher-forced decodes; M-step likelihood on rollout inputs.
    EStep e;
    {
      NoGradGuard guard;
      e = posterior_factorized(model, ctx, future);
    }
    const auto weights = config_weights(e);
    for (std::size_t c = 0; c < e.configs.size(); ++c) {
      double wmax = 0.0;
      for (double w : weights[c]) wmax = std::max(wmax, w);
      if (wmax < kArMinWeight) {
        e.config_nll[c] = Tensor{};
        continue;
      }
      std::vector<Track> inputs(ctx.agents);
      {
        NoGradGuard guard;
        const Rollout r = decode_autoregressive(model, ctx, e.configs[c], feedback,
                                                seed ^ (s * 1315423911ULL + c));
        for (std::size_t a = 0; a < ctx.agents; ++a) {
          inputs[a].push_back(ctx.current[a]);
          inputs[a].insert(inputs[a].end(), r.sample.points[a].begin(), r.sample.points[a].end() - 1);
        }
      }
      e.config_nll[c] = per_agent_nll(decode_from_inputs(model, ctx, e.configs[c], inputs), future);
    }
    losses.push_back(em_loss_from_estep(ctx, e));
  }
  const Tensor total = scale(sum_scalars(losses), 1.0 / static_cast<double>(batch.size()));
  const double value = total.item();
  if (!std::isfinite(value)) {
    std::string ids;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      ids += (s ? "," : "") + batch[s]->id + "=" + std::to_string(losses[s].item());
    }
    throw NumericError("non-finite training loss; batch scenes: " + ids);
  }
  backward(total);
  StepStats stats;
  stats.loss = value;
  stats.grad_norm = clip_grad_norm(model.params(), clip_norm);
  opt.step(model.params(), lr);
  return stats;
}

double teacher_forced_min_ade(const Model& model, const SceneSet& data) {
  NoGradGuard guard;
  MapCache cache;
  const std::size_t modes = model.config().modes;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& scene : data.scenes) {
    const Tensor* phi = model.config().map == MapMode::kNone ? nullptr : &cache.get(model, scene.mask);
    const SceneContext ctx = model.encode(scene, phi);
    const auto future = scene_future(scene);
    const ModeConfig base = prior_argmax(ctx);
    std::vector<double> best(ctx.agents, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < ctx.agents; ++a) {
      for (std::size_t k = 0; k < modes; ++k) {
        ModeConfig z = base;
        z.modes[a] = k;
        const auto means = gaussian_means(likelihood_decode(model, ctx, z, future), ctx.agents,
                                          model.config().horizon);
        best[a] = std::min(best[a], ade(means[a], future[a]));
      }
    }
    for (double b : best) total += b;
    count += ctx.agents;
  }
  return total / static_cast<double>(count);
}

TrainResult train(Model& model, const SceneSet& data, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (data.scenes.empty()) throw ContractError("train: empty dataset");
  if (data.tau != model.config().tau || data.horizon != model.config().horizon) {
    throw ConfigError("dataset tau/horizon " + std::to_string(data.tau) + "/" +
                      std::to_string(data.horizon) + " do not match the model's " +
                      std::to_string(model.config().tau) + "/" + std::to_string(model.config().horizon));
  }
  const bool nar = model.config().decoding == Decoding::kNonAutoregressive;
  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics.open(std::filesystem::path(options.out_dir) / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics in '" + options.out_dir + "'");
  }
  Rng rng(cfg.seed);
  SgdMomentum opt(cfg.momentum);
  std::vector<std::size_t> order(data.scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool ar = !nar && epoch >= cfg.switch_epoch();
    const std::size_t bs = ar ? cfg.batch_ar : cfg.batch_tf;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cyclic_lr(cfg, epoch);
    rec.phase = nar ? "nar" : (ar ? "ar" : "tf");
    double loss_sum = 0.0, norm_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const Scene*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(&data.scenes[order[i]]);
      }
      StepStats st;
      try {
        st = train_step(model, opt, batch, rec.lr, cfg.clip_norm, ar, cfg.ar_feedback,
                        rng.next_u64());
      } catch (const NumericError& err) {
        if (!options.out_dir.empty()) {
          json dump{{"epoch", epoch}, {"lr", rec.lr}, {"error", err.what()}, {"scenes", json::array()}};
          for (const Scene* s : batch) dump["scenes"].push_back(s->id);
          std::ofstream out(std::filesystem::path(options.out_dir) / "diagnostic.json");
          out << dump.dump(2) << "\n";
          SceneSet offending{data.tau, data.horizon, data.resolution, {}};
          for (const Scene* s : batch) offending.scenes.push_back(*s);
          save_scene_set((std::filesystem::path(options.out_dir) / "diagnostic_batch.jsonl").string(),
                         offending);
        }
        throw;
      }
      loss_sum += st.loss * static_cast<double>(batch.size());
      norm_sum += st.grad_norm;
      ++rec.steps;
    }
    rec.loss = loss_sum / static_cast<double>(order.size());
    rec.grad_norm = norm_sum / static_cast<double>(rec.steps);
    if (options.eval_every > 0 && (epoch + 1) % options.eval_every == 0) {
      rec.tf_min_ade = teacher_forced_min_ade(model, data);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (metrics.is_open()) {
      json j{{"epoch", rec.epoch}, {"lr", rec.lr},       {"loss", rec.loss},
             {"phase", rec.phase}, {"steps", rec.steps}, {"grad_norm", rec.grad_norm}};
      if (rec.tf_min_ade) j["tf_min_ade"] = *rec.tf_min_ade;
      metrics << j.dump() << "\n";
      metrics.flush();
      json extra{{"epoch", epoch}};
      if (options.run_config) extra["config"] = to_json(*options.run_config);
      save_checkpoint(options.out_dir, model, extra);
    }
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (options.stop_below_min_ade && rec.tf_min_ade && *rec.tf_min_ade < *options.stop_below_min_ade) {
      break;
    }
  }
  return result;
}

}  // namespace latentformer
