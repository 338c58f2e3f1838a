// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "latentformer/tensor.hpp"

namespace latentformer {

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-5;
inline constexpr double kOracleTolerance = 1e-12;

struct GradCheckOptions {
  double step = kGradCheckStep;
  /// Coordinates probed per tensor; larger tensors are subsampled.
  std::size_t max_coords_per_tensor = 32;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  /// max |analytic - numeric| / max(max |analytic|, max |numeric|) over all
  /// probed coordinates.
  double rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +-h step changed a ReLU or clamp branch.
  std::size_t skipped = 0;
};

/// Central differences of `loss` (a scalar) against reverse-mode gradients
/// for the listed leaves, which must require grad.
GradCheckReport finite_difference_check(const std::function<Tensor()>& loss,
                                        const std::vector<Tensor>& wrt,
                                        const GradCheckOptions& options = {});

struct CheckResult {
  std::string name;
  bool passed = false;
  double measure = 0.0;    // error or value compared against the tolerance
  double tolerance = 0.0;
  std::string detail;
};

/// attn, multi_head_attn, te_block, tdl_d, tdl_c, conv_stack, gaussian_head,
/// bivariate_nll, em_loss.
const std::vector<std::string>& gradient_check_blocks();
CheckResult gradient_check_block(const std::string& block, std::uint64_t seed);
/// Every block at seeds 1..seeds.
std::vector<CheckResult> gradient_suite(std::size_t seeds = 3);

/// Brute-force references for the dense kernels.
namespace oracle {
std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t m, std::size_t k, std::size_t n);
std::vector<double> softmax_rows(const std::vector<double>& x, std::size_t rows,
                                 std::size_t cols);
/// x [C_in, H, W], w [C_out, C_in, k, k]; zero padding split floor/ceil.
std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>& bias, std::size_t c_in, std::size_t h,
                           std::size_t width, std::size_t c_out, std::size_t k, int stride,
                           bool same);
/// Single-head masked attention; `allowed` may be empty.
std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                              const std::vector<double>& v, std::size_t n_q, std::size_t n_k,
                              std::size_t d, std::size_t d_v,
                              const std::vector<std::uint8_t>& allowed, double scale);
}  // namespace oracle

/// Kernel, posterior and metric oracles.
std::vector<CheckResult> oracle_suite(std::uint64_t seed = 7);

}  // namespace latentformer
