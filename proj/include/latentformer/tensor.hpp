// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace latentformer {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into inputs' grads.
  std::function<void(Node& self)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 tensor handle. Copies share storage; values are
/// immutable once an op has produced them, except for leaves mutated by an
/// optimizer or checkpoint loader through mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Zeros when no gradient has been accumulated.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the tape.
  Tensor detach() const;
  /// Deep copy of values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Thread-local switch controlling whether ops record the tape.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// While alive, hashes every piecewise branch taken on this thread (ReLU
/// signs, sigma clamps). Finite-difference checks compare fingerprints to
/// detect steps that cross a kink, where the difference quotient is invalid.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void record(bool branch) { hash_ = (hash_ ^ (branch ? 0x9eu : 0x3bu)) * 0x100000001b3ULL; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  BranchRecorder* previous_;
};

/// Recorder active on this thread, or nullptr.
BranchRecorder* active_branch_recorder();

/// Reverse-mode sweep from a scalar loss. Gradients accumulate additively.
void backward(const Tensor& loss);

// ---- elementwise and reductions --------------------------------------------

/// b broadcasts over leading axes when its shape is a suffix of a's.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
/// Sum of x * w with w treated as a constant.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

// ---- linear algebra ---------------------------------------------------------

/// [..., m, k] x [..., k, n] with broadcast batch axes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [n, in] * w [in, out] + bias [out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- normalization ----------------------------------------------------------

Tensor softmax(const Tensor& x, std::ptrdiff_t axis);
Tensor log_softmax(const Tensor& x, std::ptrdiff_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// ---- convolution ------------------------------------------------------------

enum class Padding { kSame, kValid };

/// x [C_in, H, W], kernels [C_out, C_in, kH, kW], bias [C_out] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride,
              Padding padding);
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int stride, Padding padding);

// ---- structure --------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis);
/// Rows [begin, end) of a 2-D tensor.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Row gather from a 2-D table; serves as embedding lookup.
Tensor embedding(const Tensor& table, std::span<const std::size_t> rows);
/// Picks individual elements by flat index into a 1-D result.
Tensor gather(const Tensor& x, std::span<const std::size_t> flat_indices);

// ---- attention --------------------------------------------------------------

/// Row-major [n_q, n_k] boolean pattern; true = key visible to query.
struct AttentionMask {
  std::size_t n_q = 0;
  std::size_t n_k = 0;
  std::vector<std::uint8_t> allowed;

  AttentionMask() = default;
  AttentionMask(std::size_t rows, std::size_t cols, bool value)
      : n_q(rows), n_k(cols), allowed(rows * cols, value ? 1 : 0) {}

  bool operator()(std::size_t q, std::size_t k) const { return allowed[q * n_k + k] != 0; }
  void set(std::size_t q, std::size_t k, bool value) { allowed[q * n_k + k] = value ? 1 : 0; }
  /// Throws ContractError naming the first query row with no visible key.
  void validate() const;
};

/// Fused scaled dot-product attention split into `heads` column groups.
/// q [n_q, d], k [n_k, d], v [n_k, d_v]; output [n_q, d_v]. Masked scores
/// are excluded from the softmax (equivalent to -inf logits).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const AttentionMask* mask, double score_scale);

// ---- Gaussian output --------------------------------------------------------

inline constexpr double kSigmaMin = 1e-3;
inline constexpr double kSigmaMax = 1e3;
inline constexpr double kRhoLimit = 0.99;

/// raw [n, 5] -> (mu_x, mu_y, sigma_x, sigma_y, rho) with sigma = clamp(exp(raw))
/// and rho = 0.99 tanh(raw). `anchor` [n, 2], when defined, is added to mu.
Tensor gaussian_squash(const Tensor& raw, const Tensor& anchor);

/// params [n, 5] squashed Gaussians vs targets [n, 2] (constant); returns the
/// per-row negative log-density [n].
Tensor bivariate_nll_rows(const Tensor& params, std::span<const double> targets);

}  // namespace latentformer
