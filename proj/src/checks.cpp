// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "latentformer/decoder.hpp"
#include "latentformer/error.hpp"
#include "latentformer/evaluation.hpp"
#include "latentformer/map_encoder.hpp"
#include "latentformer/model.hpp"
#include "latentformer/nn.hpp"
#include "latentformer/training.hpp"

namespace latentformer {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(const Shape& shape, Rng& rng, double scale, bool requires_grad) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor::from(shape, std::move(v), requires_grad);
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return w;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<Tensor> store_tensors(const ParamStore& store) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : store.entries()) out.push_back(t);
  return out;
}

// Query rows with a random subset of visible keys, never empty.
AttentionMask random_mask(std::size_t n_q, std::size_t n_k, Rng& rng) {
  AttentionMask m(n_q, n_k, true);
  for (std::size_t i = 0; i < n_q; ++i) {
    for (std::size_t j = 0; j < n_k; ++j) m.set(i, j, rng.uniform() < 0.7);
    m.set(i, rng.below(n_k), true);
  }
  return m;
}

BlockConfig tiny_block() {
  BlockConfig b;
  b.d_model = 8;
  b.heads = 2;
  b.ffn_mult = 2;
  return b;
}

ModelConfig tiny_model_config(std::size_t modes) {
  ModelConfig cfg;
  cfg.block = tiny_block();
  cfg.encoder_depth = 1;
  cfg.prior_depth = 1;
  cfg.decoder_depth = 1;
  cfg.modes = modes;
  cfg.map = MapMode::kNone;
  return cfg;
}

CheckResult grad_result(const std::string& name, const GradCheckReport& r) {
  CheckResult c;
  c.name = name;
  c.measure = r.rel_error;
  c.tolerance = kGradCheckTolerance;
  c.passed = r.checked > 0 && r.skipped * 2 <= r.checked && r.rel_error < kGradCheckTolerance;
  c.detail = "rel_error=" + fmt("%.3e", r.rel_error) + " checked=" + std::to_string(r.checked) +
             " skipped=" + std::to_string(r.skipped);
  return c;
}

}  // namespace

GradCheckReport finite_difference_check(const std::function<Tensor()>& loss,
                                        const std::vector<Tensor>& wrt,
                                        const GradCheckOptions& options) {
  for (const auto& t : wrt) {
    if (!t.requires_grad()) throw ContractError("finite_difference_check: leaf does not require grad");
  }
  for (auto t : wrt) t.zero_grad();
  std::uint64_t base_branches = 0;
  {
    BranchRecorder rec;
    const Tensor l = loss();
    base_branches = rec.fingerprint();
    backward(l);
  }
  const double h = options.step;
  Rng rng(options.seed ^ 0x6a09e667f3bcc909ULL);
  GradCheckReport report;
  double max_diff = 0.0, max_mag = 0.0;
  NoGradGuard guard;
  for (auto t : wrt) {
    const std::vector<double> analytic = t.grad();
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.max_coords_per_tensor) {
      // Partial Fisher-Yates: a seeded sample without replacement.
      for (std::size_t i = 0; i < options.max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto data = t.mutable_data();
    for (std::size_t i : coords) {
      const double saved = data[i];
      std::uint64_t fp_plus = 0, fp_minus = 0;
      data[i] = saved + h;
      double f_plus = 0.0, f_minus = 0.0;
      {
        BranchRecorder rec;
        f_plus = loss().item();
        fp_plus = rec.fingerprint();
      }
      data[i] = saved - h;
      {
        BranchRecorder rec;
        f_minus = loss().item();
        fp_minus = rec.fingerprint();
      }
      data[i] = saved;
      if (fp_plus != base_branches || fp_minus != base_branches) {
        ++report.skipped;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      max_mag = std::max({max_mag, std::abs(numeric), std::abs(analytic[i])});
      ++report.checked;
    }
  }
  report.rel_error = max_mag > 0.0 ? max_diff / max_mag : max_diff;
  return report;
}

const std::vector<std::string>& gradient_check_blocks() {
  static const std::vector<std::string> blocks{"attn",    "multi_head_attn", "te_block",
                                               "tdl_d",   "tdl_c",           "conv_stack",
                                               "gaussian_head", "bivariate_nll", "em_loss"};
  return blocks;
}

CheckResult gradient_check_block(const std::string& block, std::uint64_t seed) {
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 17);
  GradCheckOptions opt;
  opt.seed = seed;
  const std::string name = "grad." + block + ".seed" + std::to_string(seed);
  const BlockConfig cfg = tiny_block();
  const std::size_t d = cfg.d_model;
  ParamStore store;

  if (block == "attn") {
    const Tensor q = random_tensor({3, 4}, rng, 1.0, true);
    const Tensor k = random_tensor({5, 4}, rng, 1.0, true);
    const Tensor v = random_tensor({5, 3}, rng, 1.0, true);
    const AttentionMask mask = random_mask(3, 5, rng);
    const auto w = random_weights(9, rng);
    return grad_result(name, finite_difference_check(
        [&] { return weighted_sum(attn(q, k, v, &mask, 0.5), w); }, {q, k, v}, opt));
  }
  if (block == "multi_head_attn") {
    const MultiHeadParams p = make_multi_head(store, "mha", cfg, rng);
    const Tensor q = random_tensor({3, d}, rng, 1.0, true);
    const Tensor kv = random_tensor({4, d}, rng, 1.0, true);
    const AttentionMask mask = random_mask(3, 4, rng);
    const auto w = random_weights(3 * d, rng);
    auto wrt = store_tensors(store);
    wrt.insert(wrt.end(), {q, kv});
    return grad_result(name, finite_difference_check(
        [&] { return weighted_sum(multi_head_attn(q, kv, kv, &mask, p, cfg), w); }, wrt, opt));
  }
  if (block == "te_block") {
    const TEBlockParams p = make_te_block(store, "te", cfg, rng);
    const Tensor x = random_tensor({5, d}, rng, 1.0, true);
    const AttentionMask mask = random_mask(5, 5, rng);
    const auto w = random_weights(5 * d, rng);
    auto wrt = store_tensors(store);
    wrt.push_back(x);
    return grad_result(name, finite_difference_check(
        [&] { return weighted_sum(te_block(x, p, cfg, &mask), w); }, wrt, opt));
  }
  if (block == "tdl_d" || block == "tdl_c") {
    const Tensor x = random_tensor({4, d}, rng, 1.0, true);
    const Tensor ctx = random_tensor({6, d}, rng, 1.0, true);
    const Tensor map = random_tensor({3, d}, rng, 1.0, true);
    const AttentionMask self_mask = random_mask(4, 4, rng);
    const AttentionMask ctx_mask = random_mask(4, 6, rng);
    const DecoderMasks masks{&self_mask, &ctx_mask, nullptr};
    const auto w = random_weights(4 * d, rng);
    std::function<Tensor()> f;
    if (block == "tdl_d") {
      auto p = std::make_shared<TDLdParams>(make_tdl_d(store, "tdl", cfg, true, rng));
      f = [&, p] { return weighted_sum(tdl_d(x, ctx, map, *p, cfg, masks), w); };
    } else {
      auto p = std::make_shared<TDLcParams>(make_tdl_c(store, "tdl", cfg, true, rng));
      f = [&, p] { return weighted_sum(tdl_c(x, ctx, map, *p, cfg, masks), w); };
    }
    auto wrt = store_tensors(store);
    wrt.insert(wrt.end(), {x, ctx, map});
    return grad_result(name, finite_difference_check(f, wrt, opt));
  }
  if (block == "conv_stack") {
    ModelConfig mc = tiny_model_config(2);
    mc.map = MapMode::kGlobal;
    MapEncoderParams p = make_map_encoder(store, mc, rng);
    // Nonzero biases so the check also exercises the bias gradients' paths.
    for (auto& layer : p.conv) {
      for (auto& b : layer.bias.mutable_data()) b = rng.uniform(-0.1, 0.1);
    }
    const Tensor x = random_tensor({kMapChannels, kMapPixels, kMapPixels}, rng, 1.0, true);
    const auto w = random_weights(kFeatureChannels * kFeatureExtent * kFeatureExtent, rng);
    std::vector<Tensor> wrt;
    for (const auto& layer : p.conv) wrt.insert(wrt.end(), {layer.kernels, layer.bias});
    wrt.push_back(x);
    opt.max_coords_per_tensor = 24;
    return grad_result(name, finite_difference_check(
        [&] { return weighted_sum(conv_stack(x, p), w); }, wrt, opt));
  }
  if (block == "gaussian_head") {
    std::vector<LinearLayer> head{make_linear(store, "head0", d, d, rng),
                                  make_linear(store, "head1", d, 5, rng)};
    const Tensor h = random_tensor({6, d}, rng, 1.0, true);
    const Tensor anchor = random_tensor({6, 2}, rng, 3.0, true);
    const auto w = random_weights(30, rng);
    auto wrt = store_tensors(store);
    wrt.insert(wrt.end(), {h, anchor});
    return grad_result(name, finite_difference_check(
        [&] { return weighted_sum(gaussian_head(h, head, anchor), w); }, wrt, opt));
  }
  if (block == "bivariate_nll") {
    // Two agents, three steps, time-major rows.
    const Tensor raw = random_tensor({6, 5}, rng, 0.8, true);
    const Tensor anchor = random_tensor({6, 2}, rng, 2.0, true);
    std::vector<Track> future(2, Track(3));
    for (auto& track : future) {
      for (auto& p : track) p = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    }
    return grad_result(name, finite_difference_check(
        [&] { return sum(per_agent_nll(gaussian_squash(raw, anchor), future)); }, {raw, anchor},
        opt));
  }
  if (block == "em_loss") {
    const Model model(tiny_model_config(2), seed);
    const Scene scene = generate_intersection(seed, 2);
    const auto future = scene_future(scene);
    Posterior q;
    ModeConfig baseline;
    {
      NoGradGuard guard;
      const SceneContext ctx = model.encode(scene);
      const EStep e = posterior_factorized(model, ctx, future);
      q = e.q;
      baseline = e.baseline;
    }
    opt.max_coords_per_tensor = 6;
    return grad_result(name, finite_difference_check(
        [&] { return em_loss(model, model.encode(scene), future, q, baseline); },
        store_tensors(model.params()), opt));
  }
  throw ContractError("unknown gradient-check block '" + block + "'");
}

std::vector<CheckResult> gradient_suite(std::size_t seeds) {
  std::vector<CheckResult> out;
  for (const auto& block : gradient_check_blocks()) {
    for (std::uint64_t s = 1; s <= seeds; ++s) out.push_back(gradient_check_block(block, s));
  }
  return out;
}

// ---- oracles -------------------------------------------------------------------

namespace oracle {

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

std::vector<double> softmax_rows(const std::vector<double>& x, std::size_t rows, std::size_t cols) {
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[r * cols + c] - mx);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = std::exp(x[r * cols + c] - mx) / z;
  }
  return y;
}

std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>& bias, std::size_t c_in, std::size_t h,
                           std::size_t width, std::size_t c_out, std::size_t k, int stride,
                           bool same) {
  const auto s = static_cast<std::size_t>(stride);
  std::size_t oh, ow, pad_y = 0, pad_x = 0;
  if (same) {
    oh = (h + s - 1) / s;
    ow = (width + s - 1) / s;
    const std::size_t ty = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>((oh - 1) * s + k) -
                                                           static_cast<std::ptrdiff_t>(h));
    const std::size_t tx = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>((ow - 1) * s + k) -
                                                           static_cast<std::ptrdiff_t>(width));
    pad_y = ty / 2;
    pad_x = tx / 2;
  } else {
    oh = (h - k) / s + 1;
    ow = (width - k) / s + 1;
  }
  std::vector<double> y(c_out * oh * ow);
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
              const auto r = static_cast<std::ptrdiff_t>(i * s + u) - static_cast<std::ptrdiff_t>(pad_y);
              const auto c = static_cast<std::ptrdiff_t>(j * s + v) - static_cast<std::ptrdiff_t>(pad_x);
              if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) ||
                  c >= static_cast<std::ptrdiff_t>(width)) {
                continue;
              }
              acc += x[(ci * h + static_cast<std::size_t>(r)) * width + static_cast<std::size_t>(c)] *
                     w[((co * c_in + ci) * k + u) * k + v];
            }
          }
        }
        y[(co * oh + i) * ow + j] = acc + (bias.empty() ? 0.0 : bias[co]);
      }
    }
  }
  return y;
}

std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                              const std::vector<double>& v, std::size_t n_q, std::size_t n_k,
                              std::size_t d, std::size_t d_v,
                              const std::vector<std::uint8_t>& allowed, double scale) {
  std::vector<double> out(n_q * d_v, 0.0);
  for (std::size_t i = 0; i < n_q; ++i) {
    std::vector<double> s(n_k, -std::numeric_limits<double>::infinity());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_k; ++j) {
      if (!allowed.empty() && allowed[i * n_k + j] == 0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      s[j] = dot * scale;
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n_k; ++j) z += std::exp(s[j] - mx);
    for (std::size_t j = 0; j < n_k; ++j) {
      const double p = std::exp(s[j] - mx) / z;
      for (std::size_t c = 0; c < d_v; ++c) out[i * d_v + c] += p * v[j * d_v + c];
    }
  }
  return out;
}

}  // namespace oracle

namespace {

CheckResult compare(const std::string& name, std::span<const double> got,
                    const std::vector<double>& want) {
  CheckResult c;
  c.name = name;
  c.measure = max_abs_diff(got, want);
  c.tolerance = kOracleTolerance;
  c.passed = c.measure <= kOracleTolerance;
  c.detail = "max_abs_diff=" + fmt("%.3e", c.measure);
  return c;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::vector<CheckResult> oracle_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  NoGradGuard guard;

  {
    const Tensor a = random_tensor({7, 9}, rng, 1.0, false);
    const Tensor b = random_tensor({9, 5}, rng, 1.0, false);
    out.push_back(compare("oracle.matmul", matmul(a, b).data(), oracle::matmul(values(a), values(b), 7, 9, 5)));
    // Batched: each slice of a [3, 4, 6] x [6, 2] product against its own oracle.
    const Tensor ab = random_tensor({3, 4, 6}, rng, 1.0, false);
    const Tensor bb = random_tensor({6, 2}, rng, 1.0, false);
    std::vector<double> want;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto slice = std::vector<double>(ab.data().begin() + s * 24, ab.data().begin() + (s + 1) * 24);
      const auto part = oracle::matmul(slice, values(bb), 4, 6, 2);
      want.insert(want.end(), part.begin(), part.end());
    }
    out.push_back(compare("oracle.matmul_batched", matmul(ab, bb).data(), want));
  }
  {
    Tensor x = random_tensor({5, 7}, rng, 4.0, false);
    out.push_back(compare("oracle.softmax", softmax(x, -1).data(), oracle::softmax_rows(values(x), 5, 7)));
    // Axis 0 through the transpose identity.
    const auto want_t = oracle::softmax_rows(values(transpose(x)), 7, 5);
    out.push_back(compare("oracle.softmax_axis0", transpose(softmax(x, 0)).data(), want_t));
  }
  {
    struct Case {
      const char* name;
      std::size_t c_in, h, w, c_out, k;
      int stride;
      Padding pad;
    };
    const Case cases[] = {{"oracle.conv2d_same_s1", 3, 9, 8, 4, 3, 1, Padding::kSame},
                          {"oracle.conv2d_same_s2", 2, 9, 10, 3, 3, 2, Padding::kSame},
                          {"oracle.conv2d_valid", 2, 7, 6, 2, 3, 1, Padding::kValid},
                          {"oracle.conv2d_1x1", 4, 5, 5, 3, 1, 1, Padding::kSame}};
    for (const auto& c : cases) {
      const Tensor x = random_tensor({c.c_in, c.h, c.w}, rng, 1.0, false);
      const Tensor w = random_tensor({c.c_out, c.c_in, c.k, c.k}, rng, 1.0, false);
      const Tensor b = random_tensor({c.c_out}, rng, 1.0, false);
      const auto want = oracle::conv2d(values(x), values(w), values(b), c.c_in, c.h, c.w, c.c_out,
                                       c.k, c.stride, c.pad == Padding::kSame);
      out.push_back(compare(c.name, conv2d(x, w, b, c.stride, c.pad).data(), want));
    }
  }
  {
    const Tensor q = random_tensor({4, 6}, rng, 1.0, false);
    const Tensor k = random_tensor({5, 6}, rng, 1.0, false);
    const Tensor v = random_tensor({5, 3}, rng, 1.0, false);
    const AttentionMask mask = random_mask(4, 5, rng);
    const double scale = 1.0 / std::sqrt(6.0);
    out.push_back(compare("oracle.attn", attn(q, k, v, nullptr, scale).data(),
                          oracle::attention(values(q), values(k), values(v), 4, 5, 6, 3, {}, scale)));
    out.push_back(compare("oracle.attn_masked", attn(q, k, v, &mask, scale).data(),
                          oracle::attention(values(q), values(k), values(v), 4, 5, 6, 3, mask.allowed, scale)));
    // Two heads = two independent column groups.
    const Tensor v2 = random_tensor({5, 4}, rng, 1.0, false);
    std::vector<double> want(4 * 4);
    for (std::size_t h = 0; h < 2; ++h) {
      std::vector<double> qh, kh, vh;
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < 3; ++c) qh.push_back(q.data()[i * 6 + h * 3 + c]);
      }
      for (std::size_t j = 0; j < 5; ++j) {
        for (std::size_t c = 0; c < 3; ++c) kh.push_back(k.data()[j * 6 + h * 3 + c]);
        for (std::size_t c = 0; c < 2; ++c) vh.push_back(v2.data()[j * 4 + h * 2 + c]);
      }
      const auto part = oracle::attention(qh, kh, vh, 4, 5, 3, 2, mask.allowed, 0.5);
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < 2; ++c) want[i * 4 + h * 2 + c] = part[i * 2 + c];
      }
    }
    out.push_back(compare("oracle.attention_two_heads", attention(q, k, v2, 2, &mask, 0.5).data(), want));
  }
  {
    // Single agent: the factorized E-step sweeps exactly the K joint configurations.
    const Model model(tiny_model_config(3), seed);
    const Scene scene = generate_intersection(seed + 100, 1);
    const SceneContext ctx = model.encode(scene);
    const auto future = scene_future(scene);
    const EStep e = posterior_factorized(model, ctx, future);
    const Posterior exact = posterior_exact(model, ctx, future).marginals();
    CheckResult c;
    c.name = "oracle.posterior_single_agent";
    c.tolerance = 0.0;
    c.measure = max_abs_diff(e.q.q, exact.q);
    c.passed = e.q.q == exact.q;
    c.detail = c.passed ? "bit-identical" : "max_abs_diff=" + fmt("%.3e", c.measure);
    out.push_back(c);
  }
  {
    // 3-4-5 triangles: errors 5 and 10.
    const Track pred{{3.0, 4.0}, {0.0, 0.0}};
    const Track gt{{0.0, 0.0}, {6.0, 8.0}};
    out.push_back(compare("oracle.ade", std::vector<double>{ade(pred, gt)}, {7.5}));
    out.push_back(compare("oracle.fde", std::vector<double>{fde(pred, gt)}, {10.0}));
    const double per_sample[] = {10.0, 2.0, 6.0};
    const MinAvg m = aggregate(per_sample);
    out.push_back(compare("oracle.min_avg", std::vector<double>{m.min, m.avg}, {2.0, 6.0}));
    const auto r = rf(1.81, 0.72);
    out.push_back(compare("oracle.rf", std::vector<double>{r.value_or(0.0)}, {1.81 / 0.72}));
    CheckResult hit;
    hit.name = "oracle.rf_exact_hit";
    hit.passed = !rf(3.0, 0.0).has_value();
    hit.detail = hit.passed ? "minFDE=0 reported as exact hit" : "expected no ratio";
    out.push_back(hit);
  }
  return out;
}

}  // namespace latentformer
