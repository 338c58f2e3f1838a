// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: scene generation, training, evaluation, prediction,
// SVG rendering and the built-in self-test.

#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "latentformer/checkpoint.hpp"
#include "latentformer/checks.hpp"
#include "latentformer/config.hpp"
#include "latentformer/error.hpp"
#include "latentformer/evaluation.hpp"
#include "latentformer/model.hpp"
#include "latentformer/render.hpp"
#include "latentformer/scene.hpp"
#include "latentformer/training.hpp"

namespace lf = latentformer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitSelftest = 12;

// Loose agent bound for reading files whose producer config is unknown.
constexpr std::size_t kReadAgentLimit = 64;

int exit_code(lf::ErrorKind kind) {
  switch (kind) {
    case lf::ErrorKind::kIo: return 3;
    case lf::ErrorKind::kConfig: return 4;
    case lf::ErrorKind::kFormat: return 5;
    case lf::ErrorKind::kGeneration: return 6;
    case lf::ErrorKind::kCapacity: return 7;
    case lf::ErrorKind::kNumeric: return 8;
    case lf::ErrorKind::kDimension: return 9;
    case lf::ErrorKind::kParameter: return 10;
    case lf::ErrorKind::kContract: return 11;
  }
  return kExitInternal;
}

const char* kExitCodeHelp =
    "Exit codes:\n"
    "   0  success\n"
    "   1  unexpected internal error\n"
    "   2  usage (unknown flag, missing or malformed argument)\n"
    "   3  io (missing or unwritable file)\n"
    "   4  config (invalid or unknown configuration key)\n"
    "   5  format (malformed scene, checkpoint or prediction file)\n"
    "   6  generation (scene sampling gave up)\n"
    "   7  capacity (too many agents for the model)\n"
    "   8  numeric (non-finite loss during training)\n"
    "   9  dimension\n"
    "  10  parameter\n"
    "  11  contract\n"
    "  12  selftest failure\n"
    "Errors are reported on stderr as one line:\n"
    "  error code=<n> kind=<kind>: <message>\n";

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int report_error(int code, const std::string& kind, const std::string& message) {
  std::cerr << "error code=" << code << " kind=" << kind << ": " << one_line(message) << '\n';
  return code;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lf::IoError("cannot write " + path);
  out << text;
  if (!out) throw lf::IoError("write failed: " + path);
}

int run_generate(std::size_t scenes, std::uint64_t seed, const std::string& out,
                 const std::string& kind, std::size_t min_agents, std::size_t max_agents,
                 double crossing_offset) {
  lf::GenerateOptions opt;
  opt.kind = lf::scene_kind_from_string(kind);
  opt.min_agents = min_agents;
  opt.max_agents = max_agents;
  opt.crossing_offset = crossing_offset;
  lf::save_scene_set(out, lf::generate_scene_set(scenes, seed, opt));
  return kExitOk;
}

int run_train(const std::string& data_path, const std::string& config_path, const std::string& out,
              std::size_t eval_every) {
  const lf::RunConfig cfg = lf::load_run_config(config_path);
  const lf::SceneSet data = lf::load_scene_set(data_path, cfg.model.max_agents);
  if (data.tau != cfg.model.tau || data.horizon != cfg.model.horizon) {
    throw lf::ConfigError("data tau/horizon " + std::to_string(data.tau) + "/" +
                          std::to_string(data.horizon) + " differ from the config's " +
                          std::to_string(cfg.model.tau) + "/" + std::to_string(cfg.model.horizon));
  }
  lf::Model model(cfg.model, cfg.train.seed);
  lf::TrainOptions opt;
  opt.out_dir = out;
  opt.eval_every = eval_every;
  opt.run_config = cfg;
  opt.on_epoch = [](const lf::EpochRecord& r) {
    std::printf("epoch %zu phase=%s lr=%.3e loss=%.6f grad_norm=%.3f", r.epoch, r.phase.c_str(), r.lr,
                r.loss, r.grad_norm);
    if (r.tf_min_ade) std::printf(" tf_min_ade=%.4f", *r.tf_min_ade);
    std::printf(" (%.1fs)\n", r.seconds);
    std::fflush(stdout);
  };
  lf::train(model, data, cfg.train, opt);
  return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& data_path, std::size_t k,
             const std::string& report_path, bool sampled, std::uint64_t seed) {
  const lf::LoadedPredictor lp = lf::load_predictor(ckpt);
  const lf::SceneSet data = lf::load_scene_set(data_path, kReadAgentLimit);
  const lf::EvalReport report = lf::evaluate(*lp.predictor, data, {k, sampled, seed});
  write_text(report_path, lf::to_json(report).dump(2) + "\n");
  std::cout << lf::format_table(report);
  return kExitOk;
}

int run_predict(const std::string& ckpt, const std::string& data_path, const std::string& out,
                std::size_t k, bool sampled, std::uint64_t seed) {
  const lf::LoadedPredictor lp = lf::load_predictor(ckpt);
  const lf::SceneSet data = lf::load_scene_set(data_path, kReadAgentLimit);
  lf::save_predictions(out, lf::predict_all(*lp.predictor, data, {k, sampled, seed}));
  return kExitOk;
}

int run_render(const std::string& data_path, const std::string& scene_id, const std::string& pred,
               const std::string& out) {
  const lf::SceneSet data = lf::load_scene_set(data_path, kReadAgentLimit);
  const lf::Scene& scene = data.find(scene_id);
  if (pred.empty()) {
    write_text(out, lf::render_svg(scene));
    return kExitOk;
  }
  const lf::PredictionSet set = lf::load_predictions(pred);
  const auto& samples = set.find(scene_id).samples;
  for (const auto& s : samples) {
    if (s.points.size() != scene.agents.size()) {
      throw lf::FormatError("predictions for '" + scene_id + "' cover " +
                            std::to_string(s.points.size()) + " agents, scene has " +
                            std::to_string(scene.agents.size()));
    }
  }
  write_text(out, lf::render_svg(scene, &samples));
  return kExitOk;
}

int run_selftest(std::size_t seeds) {
  std::size_t failed = 0, total = 0;
  const auto show = [&](const lf::CheckResult& r) {
    ++total;
    if (!r.passed) ++failed;
    std::printf("%s %s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    std::fflush(stdout);
  };
  const auto start = std::chrono::steady_clock::now();
  for (const auto& block : lf::gradient_check_blocks()) {
    for (std::uint64_t s = 1; s <= seeds; ++s) show(lf::gradient_check_block(block, s));
  }
  for (const auto& r : lf::oracle_suite()) show(r);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("selftest: %zu/%zu passed in %.1fs\n", total - failed, total, secs);
  if (failed > 0) {
    return report_error(kExitSelftest, "selftest", std::to_string(failed) + " of " +
                                                       std::to_string(total) + " checks failed");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LatentFormer: multi-agent trajectory prediction with discrete latent intentions"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(0, 1);

  bool print_config = false;
  std::string profile = "paper";
  app.add_flag("--print-config", print_config, "Print the default run configuration as JSON and exit");
  app.add_option("--profile", profile, "Profile for --print-config")
      ->check(CLI::IsMember({"paper", "small"}));

  auto* gen = app.add_subcommand("generate", "Sample a synthetic scene set (JSON lines)");
  std::size_t n_scenes = 0, min_agents = 1, max_agents = 4;
  std::uint64_t gen_seed = 0;
  std::string gen_out, kind = "intersection";
  double crossing_offset = 0.0;
  gen->add_option("--scenes", n_scenes, "Number of scenes")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output file")->required();
  gen->add_option("--kind", kind, "Scene family")
      ->check(CLI::IsMember({"intersection", "follow", "mixed"}));
  gen->add_option("--min-agents", min_agents, "Fewest agents per intersection scene");
  gen->add_option("--max-agents", max_agents, "Most agents per intersection scene");
  gen->add_option("--crossing-offset", crossing_offset,
                  "Half-width (m) of the box the intersection center is drawn from");

  auto* tr = app.add_subcommand("train", "Train a model; writes a checkpoint and metrics.jsonl");
  std::string tr_data, tr_config, tr_out;
  std::size_t eval_every = 0;
  tr->add_option("--data", tr_data, "Training scene set")->required();
  tr->add_option("--config", tr_config, "Run configuration (JSON)")->required();
  tr->add_option("--out", tr_out, "Checkpoint directory")->required();
  tr->add_option("--eval-every", eval_every, "Teacher-forced minADE every N epochs (0 = off)");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint: minADE/avgADE/minFDE/avgFDE/RF");
  std::string ev_ckpt, ev_data, ev_report;
  std::size_t ev_k = 0;
  bool ev_sampled = false;
  std::uint64_t ev_seed = 0;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", ev_data, "Test scene set")->required();
  ev->add_option("--k", ev_k, "Samples per agent (0 = the model's mode count)");
  ev->add_option("--report", ev_report, "JSON report path")->required();
  ev->add_flag("--sampled", ev_sampled, "Draw from the Gaussians instead of using mode means");
  ev->add_option("--seed", ev_seed, "Sampling seed");

  auto* pr = app.add_subcommand("predict", "Write K candidate futures per agent (JSON)");
  std::string pr_ckpt, pr_data, pr_out;
  std::size_t pr_k = 0;
  bool pr_sampled = false;
  std::uint64_t pr_seed = 0;
  pr->add_option("--ckpt", pr_ckpt, "Checkpoint directory")->required();
  pr->add_option("--data", pr_data, "Scene set")->required();
  pr->add_option("--out", pr_out, "Predictions file")->required();
  pr->add_option("--k", pr_k, "Samples per agent (0 = the model's mode count)");
  pr->add_flag("--sampled", pr_sampled, "Draw from the Gaussians instead of using mode means");
  pr->add_option("--seed", pr_seed, "Sampling seed");

  auto* rd = app.add_subcommand("render", "Draw one scene (and optional predictions) as SVG");
  std::string rd_data, rd_scene, rd_pred, rd_out;
  rd->add_option("--data", rd_data, "Scene set")->required();
  rd->add_option("--scene", rd_scene, "Scene id")->required();
  rd->add_option("--pred", rd_pred, "Predictions file from `predict`");
  rd->add_option("--out", rd_out, "Output .svg")->required();

  auto* st = app.add_subcommand("selftest", "Run the gradient-check and oracle suites");
  std::size_t st_seeds = 3;
  st->add_option("--seeds", st_seeds, "Random seeds per gradient check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(kExitUsage, "usage", e.what());
  }

  try {
    if (print_config) {
      std::cout << lf::to_json(lf::profile_by_name(profile)).dump(2) << '\n';
      return kExitOk;
    }
    if (gen->parsed()) {
      return run_generate(n_scenes, gen_seed, gen_out, kind, min_agents, max_agents, crossing_offset);
    }
    if (tr->parsed()) return run_train(tr_data, tr_config, tr_out, eval_every);
    if (ev->parsed()) return run_eval(ev_ckpt, ev_data, ev_k, ev_report, ev_sampled, ev_seed);
    if (pr->parsed()) return run_predict(pr_ckpt, pr_data, pr_out, pr_k, pr_sampled, pr_seed);
    if (rd->parsed()) return run_render(rd_data, rd_scene, rd_pred, rd_out);
    if (st->parsed()) return run_selftest(st_seeds);
    return report_error(kExitUsage, "usage", "a subcommand is required (see --help)");
  } catch (const lf::Error& e) {
    return report_error(exit_code(e.kind()), lf::to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error(kExitInternal, "internal", e.what());
  }
}
