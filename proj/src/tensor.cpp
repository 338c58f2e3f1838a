// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "latentformer/error.hpp"

namespace latentformer {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

thread_local bool t_grad_enabled = true;
thread_local BranchRecorder* t_recorder = nullptr;

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

const NodePtr& need(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
  return t.node();
}

#ifndef NDEBUG
bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}
#endif

Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
#ifndef NDEBUG
  if (!all_finite(node->value)) {
    const bool inputs_finite = std::all_of(inputs.begin(), inputs.end(),
                                           [](const NodePtr& n) { return all_finite(n->value); });
    if (inputs_finite) throw NumericError("non-finite output from finite inputs");
  }
#endif
  if (t_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr& n) { return n->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

// C[m,n] += A[m,k] * B[k,n]. Accumulation over k runs in ascending order for
// every output element, which keeps results identical to a textbook triple loop.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank, const char* op) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  const std::ptrdiff_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& whole, const Shape& part) {
  if (part.size() > whole.size()) return false;
  return std::equal(part.rbegin(), part.rend(), whole.rbegin());
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value.assign(numel_of(shape), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != numel_of(shape)) {
    throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }
std::size_t Tensor::numel() const { return need(*this, "numel")->value.size(); }
std::span<const double> Tensor::data() const { return need(*this, "data")->value; }
std::span<double> Tensor::mutable_data() { return need(*this, "mutable_data")->value; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw DimensionError("at(): rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("at(): index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }
void Tensor::set_requires_grad(bool flag) { need(*this, "set_requires_grad")->requires_grad = flag; }
bool Tensor::has_grad() const { return !need(*this, "has_grad")->grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = need(*this, "grad");
  if (n->grad.empty()) return std::vector<double>(n->value.size(), 0.0);
  return n->grad;
}

std::span<double> Tensor::mutable_grad() { return need(*this, "mutable_grad")->grad_buffer(); }
void Tensor::zero_grad() { need(*this, "zero_grad")->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }
Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->value, requires_grad); }

bool grad_enabled() { return t_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

BranchRecorder::BranchRecorder() : previous_(t_recorder) { t_recorder = this; }
BranchRecorder::~BranchRecorder() { t_recorder = previous_; }
BranchRecorder* active_branch_recorder() { return t_recorder; }

void backward(const Tensor& loss) {
  const auto& root = need(loss, "backward");
  if (root->value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(root->shape));
  }
  if (!root->requires_grad) throw ContractError("backward: loss is not on the gradient tape");

  // Iterative post-order DFS; reversed it is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
    // Interior gradients are transient; dropping them lets the same graph be
    // swept again without double counting.
    node->grad.clear();
  }
}

// ---- elementwise ------------------------------------------------------------

namespace {

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  const auto& na = need(a, name);
  const auto& nb = need(b, name);
  if (!is_suffix(na->shape, nb->shape)) {
    throw DimensionError(std::string(name) + ": shapes " + shape_str(na->shape) + " and " +
                         shape_str(nb->shape) + " are not broadcast-compatible");
  }
  const std::size_t n = na->value.size();
  const std::size_t m = nb->value.size();
  std::vector<double> out(n);
  const double* av = na->value.data();
  const double* bv = nb->value.data();
  for (std::size_t i = 0; i < n; i += m) {
    for (std::size_t j = 0; j < m; ++j) {
      switch (kind) {
        case Binary::kAdd: out[i + j] = av[i + j] + bv[j]; break;
        case Binary::kSub: out[i + j] = av[i + j] - bv[j]; break;
        case Binary::kMul: out[i + j] = av[i + j] * bv[j]; break;
      }
    }
  }
  return make_result(na->shape, std::move(out), {na, nb}, [kind, n, m](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    const double* g = self.grad.data();
    if (x.requires_grad) {
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        gx[i] += kind == Binary::kMul ? g[i] * y.value[i % m] : g[i];
      }
    }
    if (y.requires_grad) {
      auto& gy = y.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
          case Binary::kAdd: gy[i % m] += g[i]; break;
          case Binary::kSub: gy[i % m] -= g[i]; break;
          case Binary::kMul: gy[i % m] += g[i] * x.value[i]; break;
        }
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul, "mul"); }

Tensor scale(const Tensor& x, double factor) {
  const auto& nx = need(x, "scale");
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nx->value[i] * factor;
  return make_result(nx->shape, std::move(out), {nx}, [factor](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor relu(const Tensor& x) {
  const auto& nx = need(x, "relu");
  std::vector<double> out(nx->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nx->value[i] > 0.0 ? nx->value[i] : 0.0;
  if (t_recorder != nullptr) {
    for (double v : nx->value) t_recorder->record(v > 0.0);
  }
  return make_result(nx->shape, std::move(out), {nx}, [](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto& nx = need(x, "sum");
  double s = 0.0;
  for (double v : nx->value) s += v;
  return make_result({}, {s}, {nx}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double d = self.grad[0];
    for (auto& v : g) v += d;
  });
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  const auto& nx = need(x, "weighted_sum");
  if (weights.size() != nx->value.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) +
                         " weights for shape " + shape_str(nx->shape));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += nx->value[i] * weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  return make_result({}, {s}, {nx}, [w = std::move(w)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d * w[i];
  });
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = need(a, "matmul");
  const auto& nb = need(b, "matmul");
  const Shape& sa = na->shape;
  const Shape& sb = nb->shape;
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  const std::size_t n = sb[sb.size() - 1];

  // Broadcast batch axes (numpy rules, right-aligned).
  const Shape ba(sa.begin(), sa.end() - 2);
  const Shape bb(sb.begin(), sb.end() - 2);
  const std::size_t rank = std::max(ba.size(), bb.size());
  Shape batch(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i + ba.size() >= rank ? ba[i + ba.size() - rank] : 1;
    const std::size_t eb = i + bb.size() >= rank ? bb[i + bb.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("matmul: batch axes of " + shape_str(sa) + " and " + shape_str(sb) +
                           " do not broadcast");
    }
    batch[i] = std::max(ea, eb);
  }
  const std::size_t nbatch = numel_of(batch);
  std::vector<std::size_t> off_a(nbatch), off_b(nbatch);
  for (std::size_t flat = 0; flat < nbatch; ++flat) {
    std::size_t rem = flat, ia = 0, ib = 0, stride_a = 1, stride_b = 1;
    for (std::size_t ax = rank; ax-- > 0;) {
      const std::size_t idx = rem % batch[ax];
      rem /= batch[ax];
      if (ax + ba.size() >= rank) {
        const std::size_t e = ba[ax + ba.size() - rank];
        ia += (e == 1 ? 0 : idx) * stride_a;
        stride_a *= e;
      }
      if (ax + bb.size() >= rank) {
        const std::size_t e = bb[ax + bb.size() - rank];
        ib += (e == 1 ? 0 : idx) * stride_b;
        stride_b *= e;
      }
    }
    off_a[flat] = ia * m * k;
    off_b[flat] = ib * k * n;
  }

  std::vector<double> out(nbatch * m * n, 0.0);
  for (std::size_t t = 0; t < nbatch; ++t) {
    gemm_nn(na->value.data() + off_a[t], nb->value.data() + off_b[t], out.data() + t * m * n, m,
            k, n);
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  return make_result(out_shape, std::move(out), {na, nb},
                     [off_a, off_b, m, k, n](Node& self) {
                       Node& x = *self.inputs[0];
                       Node& y = *self.inputs[1];
                       for (std::size_t t = 0; t < off_a.size(); ++t) {
                         const double* g = self.grad.data() + t * m * n;
                         if (x.requires_grad) {
                           gemm_nt(g, y.value.data() + off_b[t],
                                   x.grad_buffer().data() + off_a[t], m, n, k);
                         }
                         if (y.requires_grad) {
                           gemm_tn(x.value.data() + off_a[t], g,
                                   y.grad_buffer().data() + off_b[t], k, m, n);
                         }
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const auto& nx = need(x, "linear");
  const auto& nw = need(w, "linear");
  if (nw->shape.size() != 2 || nx->shape.empty() || nx->shape.back() != nw->shape[0]) {
    throw DimensionError("linear: input " + shape_str(nx->shape) + " vs weight " +
                         shape_str(nw->shape));
  }
  const std::size_t in = nw->shape[0];
  const std::size_t outd = nw->shape[1];
  const std::size_t rows = nx->value.size() / in;
  std::vector<NodePtr> inputs{nx, nw};
  if (bias.defined()) {
    if (bias.shape() != Shape{outd}) {
      throw DimensionError("linear: bias " + shape_str(bias.shape()) + " for output width " +
                           std::to_string(outd));
    }
    inputs.push_back(bias.node());
  }
  std::vector<double> out(rows * outd, 0.0);
  gemm_nn(nx->value.data(), nw->value.data(), out.data(), rows, in, outd);
  if (bias.defined()) {
    const double* b = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < outd; ++j) out[r * outd + j] += b[j];
    }
  }
  Shape out_shape = nx->shape;
  out_shape.back() = outd;
  return make_result(out_shape, std::move(out), std::move(inputs),
                     [rows, in, outd](Node& self) {
                       Node& xi = *self.inputs[0];
                       Node& wi = *self.inputs[1];
                       const double* g = self.grad.data();
                       if (xi.requires_grad) {
                         gemm_nt(g, wi.value.data(), xi.grad_buffer().data(), rows, outd, in);
                       }
                       if (wi.requires_grad) {
                         gemm_tn(xi.value.data(), g, wi.grad_buffer().data(), in, rows, outd);
                       }
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         auto& gb = self.inputs[2]->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < outd; ++j) gb[j] += g[r * outd + j];
                         }
                       }
                     });
}

// ---- normalization ----------------------------------------------------------

Tensor softmax(const Tensor& x, std::ptrdiff_t axis) {
  const auto& nx = need(x, "softmax");
  const std::size_t ax = normalize_axis(axis, nx->shape.size(), "softmax");
  const AxisSplit s = split_axis(nx->shape, ax);
  std::vector<double> out(nx->value.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = nx->value[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, nx->value[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(nx->value[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  return make_result(nx->shape, std::move(out), {nx}, [s](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          dot += self.grad[i] * self.value[i];
        }
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::ptrdiff_t axis) {
  const auto& nx = need(x, "log_softmax");
  const std::size_t ax = normalize_axis(axis, nx->shape.size(), "log_softmax");
  const AxisSplit s = split_axis(nx->shape, ax);
  std::vector<double> out(nx->value.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = nx->value[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, nx->value[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) total += std::exp(nx->value[base + l * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t l = 0; l < s.len; ++l) {
        out[base + l * s.inner] = nx->value[base + l * s.inner] - lse;
      }
    }
  }
  return make_result(nx->shape, std::move(out), {nx}, [s](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double gs = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) gs += self.grad[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          g[i] += self.grad[i] - std::exp(self.value[i]) * gs;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto& nx = need(x, "layer_norm");
  const auto& ng = need(gain, "layer_norm");
  const auto& nb = need(bias, "layer_norm");
  if (nx->shape.empty()) throw DimensionError("layer_norm: scalar input has no last axis");
  const std::size_t d = nx->shape.back();
  if (ng->shape != Shape{d} || nb->shape != Shape{d}) {
    throw DimensionError("layer_norm: gain " + shape_str(ng->shape) + " / bias " +
                         shape_str(nb->shape) + " vs input " + shape_str(nx->shape));
  }
  const std::size_t rows = nx->value.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(nx->value.size());
  auto inv = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(nx->value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = nx->value.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double iv = 1.0 / std::sqrt(var + eps);
    (*inv)[r] = iv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mean) * iv;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * ng->value[j] + nb->value[j];
    }
  }
  return make_result(nx->shape, std::move(out), {nx, ng, nb}, [xhat, inv, rows, d](Node& self) {
    Node& xi = *self.inputs[0];
    Node& gi = *self.inputs[1];
    Node& bi = *self.inputs[2];
    const double* g = self.grad.data();
    if (gi.requires_grad || bi.requires_grad) {
      auto& gg = gi.grad_buffer();
      auto& gb = bi.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          gg[j] += g[r * d + j] * (*xhat)[r * d + j];
          gb[j] += g[r * d + j];
        }
      }
    }
    if (xi.requires_grad) {
      auto& gx = xi.grad_buffer();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[r * d + j] * gi.value[j];
          mean_dh += dh;
          mean_dh_h += dh * (*xhat)[r * d + j];
        }
        mean_dh *= inv_d;
        mean_dh_h *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[r * d + j] * gi.value[j];
          gx[r * d + j] += (*inv)[r] * (dh - mean_dh - (*xhat)[r * d + j] * mean_dh_h);
        }
      }
    }
  });
}

// ---- convolution ------------------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};

ConvGeometry conv_geometry(std::size_t in, std::size_t kernel, int stride, Padding padding) {
  const auto s = static_cast<std::size_t>(stride);
  ConvGeometry g;
  if (padding == Padding::kSame) {
    g.out = (in + s - 1) / s;
    const std::size_t needed = (g.out - 1) * s + kernel;
    const std::size_t total = needed > in ? needed - in : 0;
    g.pad_before = total / 2;
    if (kernel > in + total) throw DimensionError("conv2d: kernel larger than padded input");
  } else {
    if (kernel > in) {
      throw DimensionError("conv2d: kernel extent " + std::to_string(kernel) +
                           " exceeds input extent " + std::to_string(in));
    }
    g.out = (in - kernel) / s + 1;
  }
  return g;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int stride, Padding padding) {
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  return conv_geometry(in, kernel, stride, padding).out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride,
              Padding padding) {
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  const auto& nx = need(x, "conv2d");
  const auto& nk = need(kernels, "conv2d");
  if (nx->shape.size() != 3 || nk->shape.size() != 4 || nk->shape[1] != nx->shape[0]) {
    throw DimensionError("conv2d: input " + shape_str(nx->shape) + " vs kernels " +
                         shape_str(nk->shape));
  }
  const std::size_t cin = nx->shape[0], h = nx->shape[1], w = nx->shape[2];
  const std::size_t cout = nk->shape[0], kh = nk->shape[2], kw = nk->shape[3];
  const ConvGeometry gy = conv_geometry(h, kh, stride, padding);
  const ConvGeometry gx = conv_geometry(w, kw, stride, padding);
  const std::size_t oh = gy.out, ow = gx.out, npix = oh * ow;
  const std::size_t patch = cin * kh * kw;
  const auto s = static_cast<std::size_t>(stride);

  std::vector<NodePtr> inputs{nx, nk};
  if (bias.defined()) {
    if (bias.shape() != Shape{cout}) {
      throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                           std::to_string(cout) + " output channels");
    }
    inputs.push_back(bias.node());
  }

  // im2col: rows ordered (c, ky, kx), columns (oy, ox). Out-of-range taps hold 0.
  auto cols = std::make_shared<std::vector<double>>(patch * npix, 0.0);
  const auto in_range = [](std::ptrdiff_t v, std::size_t hi) {
    return v >= 0 && static_cast<std::size_t>(v) < hi;
  };
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols->data() + ((c * kh + ky) * kw + kx) * npix;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) -
                          static_cast<std::ptrdiff_t>(gy.pad_before);
          if (!in_range(iy, h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * s + kx) -
                            static_cast<std::ptrdiff_t>(gx.pad_before);
            if (!in_range(ix, w)) continue;
            row[oy * ow + ox] = nx->value[(c * h + static_cast<std::size_t>(iy)) * w +
                                          static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
  std::vector<double> out(cout * npix, 0.0);
  gemm_nn(nk->value.data(), cols->data(), out.data(), cout, patch, npix);
  if (bias.defined()) {
    const double* b = bias.data().data();
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t p = 0; p < npix; ++p) out[o * npix + p] += b[o];
    }
  }

  return make_result(
      {cout, oh, ow}, std::move(out), std::move(inputs),
      [cols, cin, h, w, cout, kh, kw, oh, ow, npix, patch, s, py = gy.pad_before,
       px = gx.pad_before, in_range](Node& self) {
        Node& xi = *self.inputs[0];
        Node& ki = *self.inputs[1];
        const double* g = self.grad.data();
        if (ki.requires_grad) gemm_nt(g, cols->data(), ki.grad_buffer().data(), cout, npix, patch);
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& gb = self.inputs[2]->grad_buffer();
          for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t p = 0; p < npix; ++p) gb[o] += g[o * npix + p];
          }
        }
        if (xi.requires_grad) {
          std::vector<double> dcols(patch * npix, 0.0);
          gemm_tn(ki.value.data(), g, dcols.data(), patch, cout, npix);
          auto& gxv = xi.grad_buffer();
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* row = dcols.data() + ((c * kh + ky) * kw + kx) * npix;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) -
                                  static_cast<std::ptrdiff_t>(py);
                  if (!in_range(iy, h)) continue;
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * s + kx) -
                                    static_cast<std::ptrdiff_t>(px);
                    if (!in_range(ix, w)) continue;
                    gxv[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                        row[oy * ow + ox];
                  }
                }
              }
            }
          }
        }
      });
}

// ---- structure --------------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape) {
  const auto& nx = need(x, "reshape");
  check_shape(shape);
  if (numel_of(shape) != nx->value.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(nx->shape) + " as " +
                         shape_str(shape));
  }
  return make_result(shape, nx->value, {nx}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  const auto& nx = need(x, "transpose");
  if (nx->shape.size() < 2) throw DimensionError("transpose: need rank >= 2, got " + shape_str(nx->shape));
  const std::size_t r = nx->shape[nx->shape.size() - 2];
  const std::size_t c = nx->shape.back();
  const std::size_t batch = nx->value.size() / (r * c);
  std::vector<double> out(nx->value.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = nx->value[b * r * c + i * c + j];
    }
  }
  Shape shape = nx->shape;
  std::swap(shape[shape.size() - 2], shape.back());
  return make_result(shape, std::move(out), {nx}, [batch, r, c](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) g[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = need(parts[0], "concat")->shape;
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& np = need(p, "concat");
    if (np->shape.size() != first.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(np->shape));
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != ax && np->shape[i] != first[i]) {
        throw DimensionError("concat: shapes " + shape_str(first) + " and " +
                             shape_str(np->shape) + " differ off the concat axis");
      }
    }
    inputs.push_back(np);
    lens.push_back(np->shape[ax]);
    total += np->shape[ax];
  }
  Shape shape = first;
  shape[ax] = total;
  const AxisSplit s = split_axis(shape, ax);
  std::vector<double> out(numel_of(shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const std::size_t block = lens[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(inputs[p]->value.data() + o * block, block,
                  out.data() + o * total * s.inner + offset * s.inner);
    }
    offset += lens[p];
  }
  return make_result(shape, std::move(out), std::move(inputs), [lens, s, total](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.inputs.size(); ++p) {
      Node& in = *self.inputs[p];
      const std::size_t block = lens[p] * s.inner;
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = self.grad.data() + o * total * s.inner + offset * s.inner;
          for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
        }
      }
      offset += lens[p];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const auto& nx = need(x, "slice_rows");
  if (nx->shape.size() != 2 || begin >= end || end > nx->shape[0]) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") of " + shape_str(nx->shape));
  }
  const std::size_t d = nx->shape[1];
  std::vector<double> out(nx->value.begin() + static_cast<std::ptrdiff_t>(begin * d),
                          nx->value.begin() + static_cast<std::ptrdiff_t>(end * d));
  return make_result({end - begin, d}, std::move(out), {nx}, [begin, d](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * d + i] += self.grad[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> rows) {
  const auto& nt = need(table, "embedding");
  if (nt->shape.size() != 2) throw DimensionError("embedding: table must be 2-D, got " + shape_str(nt->shape));
  if (rows.empty()) throw DimensionError("embedding: empty index list");
  const std::size_t v = nt->shape[0], d = nt->shape[1];
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v) {
      throw DimensionError("embedding: row " + std::to_string(rows[i]) + " out of range for " +
                           shape_str(nt->shape));
    }
    std::copy_n(nt->value.data() + rows[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), d}, std::move(out), {nt}, [idx = std::move(idx), d](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> flat_indices) {
  const auto& nx = need(x, "gather");
  if (flat_indices.empty()) throw DimensionError("gather: empty index list");
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= nx->value.size()) {
      throw DimensionError("gather: index " + std::to_string(flat_indices[i]) +
                           " out of range for " + shape_str(nx->shape));
    }
    out[i] = nx->value[flat_indices[i]];
  }
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  return make_result({idx.size()}, std::move(out), {nx}, [idx](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

// ---- attention --------------------------------------------------------------

void AttentionMask::validate() const {
  for (std::size_t q = 0; q < n_q; ++q) {
    bool any = false;
    for (std::size_t k = 0; k < n_k && !any; ++k) any = (*this)(q, k);
    if (!any) {
      throw ContractError("attention mask row " + std::to_string(q) + " has no visible key");
    }
  }
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const AttentionMask* mask, double score_scale) {
  const auto& nq = need(q, "attention");
  const auto& nk = need(k, "attention");
  const auto& nv = need(v, "attention");
  if (nq->shape.size() != 2 || nk->shape.size() != 2 || nv->shape.size() != 2 ||
      nq->shape[1] != nk->shape[1] || nk->shape[0] != nv->shape[0]) {
    throw DimensionError("attention: Q " + shape_str(nq->shape) + ", K " + shape_str(nk->shape) +
                         ", V " + shape_str(nv->shape));
  }
  const std::size_t n_q = nq->shape[0], n_k = nk->shape[0];
  const std::size_t d = nq->shape[1], dv = nv->shape[1];
  if (heads == 0 || d % heads != 0 || dv % heads != 0) {
    throw DimensionError("attention: widths " + std::to_string(d) + "/" + std::to_string(dv) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  if (mask != nullptr) {
    if (mask->n_q != n_q || mask->n_k != n_k) {
      throw DimensionError("attention: mask [" + std::to_string(mask->n_q) + ", " +
                           std::to_string(mask->n_k) + "] vs scores [" + std::to_string(n_q) +
                           ", " + std::to_string(n_k) + "]");
    }
    mask->validate();
  }
  const std::size_t dh = d / heads, dvh = dv / heads;
  auto probs = std::make_shared<std::vector<double>>(heads * n_q * n_k, 0.0);
  std::vector<double> out(n_q * dv, 0.0);
  std::vector<double> scores(n_k);
  const double* Q = nq->value.data();
  const double* K = nk->value.data();
  const double* V = nv->value.data();
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < n_q; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n_k; ++j) {
        if (mask != nullptr && !(*mask)(i, j)) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += Q[i * d + hd * dh + c] * K[j * d + hd * dh + c];
        s *= score_scale;
        scores[j] = s;
        mx = std::max(mx, s);
      }
      double total = 0.0;
      double* p = probs->data() + (hd * n_q + i) * n_k;
      for (std::size_t j = 0; j < n_k; ++j) {
        if (mask != nullptr && !(*mask)(i, j)) continue;
        p[j] = std::exp(scores[j] - mx);
        total += p[j];
      }
      for (std::size_t j = 0; j < n_k; ++j) p[j] /= total;
      double* o = out.data() + i * dv + hd * dvh;
      for (std::size_t j = 0; j < n_k; ++j) {
        if (mask != nullptr && !(*mask)(i, j)) continue;
        const double pj = p[j];
        const double* vj = V + j * dv + hd * dvh;
        for (std::size_t c = 0; c < dvh; ++c) o[c] += pj * vj[c];
      }
    }
  }
  return make_result(
      {n_q, dv}, std::move(out), {nq, nk, nv},
      [probs, heads, n_q, n_k, d, dv, dh, dvh, score_scale](Node& self) {
        Node& qi = *self.inputs[0];
        Node& ki = *self.inputs[1];
        Node& vi = *self.inputs[2];
        const double* G = self.grad.data();
        double* gq = qi.requires_grad ? qi.grad_buffer().data() : nullptr;
        double* gk = ki.requires_grad ? ki.grad_buffer().data() : nullptr;
        double* gv = vi.requires_grad ? vi.grad_buffer().data() : nullptr;
        std::vector<double> ds(n_k);
        for (std::size_t hd = 0; hd < heads; ++hd) {
          for (std::size_t i = 0; i < n_q; ++i) {
            const double* p = probs->data() + (hd * n_q + i) * n_k;
            const double* gi = G + i * dv + hd * dvh;
            double r = 0.0;
            for (std::size_t j = 0; j < n_k; ++j) {
              if (p[j] == 0.0) {
                ds[j] = 0.0;
                continue;
              }
              const double* vj = vi.value.data() + j * dv + hd * dvh;
              double dp = 0.0;
              for (std::size_t c = 0; c < dvh; ++c) dp += gi[c] * vj[c];
              ds[j] = dp;
              r += p[j] * dp;
              if (gv != nullptr) {
                double* gvj = gv + j * dv + hd * dvh;
                for (std::size_t c = 0; c < dvh; ++c) gvj[c] += p[j] * gi[c];
              }
            }
            for (std::size_t j = 0; j < n_k; ++j) {
              if (p[j] == 0.0) continue;
              const double dsj = p[j] * (ds[j] - r) * score_scale;
              const double* qrow = qi.value.data() + i * d + hd * dh;
              const double* krow = ki.value.data() + j * d + hd * dh;
              if (gq != nullptr) {
                double* gqi = gq + i * d + hd * dh;
                for (std::size_t c = 0; c < dh; ++c) gqi[c] += dsj * krow[c];
              }
              if (gk != nullptr) {
                double* gkj = gk + j * d + hd * dh;
                for (std::size_t c = 0; c < dh; ++c) gkj[c] += dsj * qrow[c];
              }
            }
          }
        }
      });
}

// ---- Gaussian output --------------------------------------------------------

Tensor gaussian_squash(const Tensor& raw, const Tensor& anchor) {
  const auto& nr = need(raw, "gaussian_squash");
  if (nr->shape.size() != 2 || nr->shape[1] != 5) {
    throw DimensionError("gaussian_squash: raw must be [n, 5], got " + shape_str(nr->shape));
  }
  const std::size_t n = nr->shape[0];
  std::vector<NodePtr> inputs{nr};
  if (anchor.defined()) {
    if (anchor.shape() != Shape{n, 2}) {
      throw DimensionError("gaussian_squash: anchor " + shape_str(anchor.shape()) + " for " +
                           std::to_string(n) + " rows");
    }
    inputs.push_back(anchor.node());
  }
  std::vector<double> out(n * 5);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = nr->value.data() + i * 5;
    double* o = out.data() + i * 5;
    o[0] = r[0];
    o[1] = r[1];
    if (anchor.defined()) {
      o[0] += anchor.data()[i * 2];
      o[1] += anchor.data()[i * 2 + 1];
    }
    o[2] = std::clamp(std::exp(r[2]), kSigmaMin, kSigmaMax);
    o[3] = std::clamp(std::exp(r[3]), kSigmaMin, kSigmaMax);
    o[4] = kRhoLimit * std::tanh(r[4]);
    if (t_recorder != nullptr) {
      for (int c = 2; c < 4; ++c) {
        const double e = std::exp(r[c]);
        t_recorder->record(e > kSigmaMin);
        t_recorder->record(e < kSigmaMax);
      }
    }
  }
  return make_result({n, 5}, std::move(out), std::move(inputs), [n](Node& self) {
    Node& ri = *self.inputs[0];
    const double* g = self.grad.data();
    if (ri.requires_grad) {
      auto& gr = ri.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double* o = self.value.data() + i * 5;
        const double* r = ri.value.data() + i * 5;
        gr[i * 5 + 0] += g[i * 5 + 0];
        gr[i * 5 + 1] += g[i * 5 + 1];
        for (std::size_t c = 2; c < 4; ++c) {
          const double e = std::exp(r[c]);
          if (e > kSigmaMin && e < kSigmaMax) gr[i * 5 + c] += g[i * 5 + c] * o[c];
        }
        const double t = std::tanh(r[4]);
        gr[i * 5 + 4] += g[i * 5 + 4] * kRhoLimit * (1.0 - t * t);
      }
    }
    if (self.inputs.size() > 1 && self.inputs[1]->requires_grad) {
      auto& ga = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        ga[i * 2] += g[i * 5];
        ga[i * 2 + 1] += g[i * 5 + 1];
      }
    }
  });
}

Tensor bivariate_nll_rows(const Tensor& params, std::span<const double> targets) {
  const auto& np = need(params, "bivariate_nll_rows");
  if (np->shape.size() != 2 || np->shape[1] != 5 || targets.size() != np->shape[0] * 2) {
    throw DimensionError("bivariate_nll_rows: params " + shape_str(np->shape) + " vs " +
                         std::to_string(targets.size()) + " target values");
  }
  const std::size_t n = np->shape[0];
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = np->value.data() + i * 5;
    const double zx = (targets[i * 2] - g[0]) / g[2];
    const double zy = (targets[i * 2 + 1] - g[1]) / g[3];
    const double rho = g[4];
    const double om = 1.0 - rho * rho;
    const double quad = zx * zx + zy * zy - 2.0 * rho * zx * zy;
    out[i] = log_2pi + std::log(g[2]) + std::log(g[3]) + 0.5 * std::log(om) + quad / (2.0 * om);
  }
  std::vector<double> tgt(targets.begin(), targets.end());
  return make_result({n}, std::move(out), {np}, [n, tgt = std::move(tgt)](Node& self) {
    Node& pi = *self.inputs[0];
    auto& gp = pi.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = pi.value.data() + i * 5;
      const double up = self.grad[i];
      const double sx = g[2], sy = g[3], rho = g[4];
      const double zx = (tgt[i * 2] - g[0]) / sx;
      const double zy = (tgt[i * 2 + 1] - g[1]) / sy;
      const double om = 1.0 - rho * rho;
      const double quad = zx * zx + zy * zy - 2.0 * rho * zx * zy;
      const double ax = (zx - rho * zy) / om;
      const double ay = (zy - rho * zx) / om;
      gp[i * 5 + 0] += up * (-ax / sx);
      gp[i * 5 + 1] += up * (-ay / sy);
      gp[i * 5 + 2] += up * (1.0 - zx * ax) / sx;
      gp[i * 5 + 3] += up * (1.0 - zy * ay) / sy;
      gp[i * 5 + 4] += up * (-rho / om - zx * zy / om + rho * quad / (om * om));
    }
  });
}

}  // namespace latentformer
