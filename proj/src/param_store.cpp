// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/param_store.hpp"

#include <algorithm>
#include <cmath>

#include "latentformer/error.hpp"

namespace latentformer {

Tensor ParamStore::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw ContractError("ParamStore: duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  entries_.emplace_back(name, tensor);
  return tensor;
}

Tensor ParamStore::add_uniform(const std::string& name, const Shape& shape, std::size_t fan_in,
                               Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return add(name, Tensor::from(shape, std::move(v)));
}

Tensor ParamStore::add_zeros(const std::string& name, const Shape& shape) {
  return add(name, Tensor::zeros(shape));
}

Tensor ParamStore::add_constant(const std::string& name, const Shape& shape, double value) {
  return add(name, Tensor::full(shape, value));
}

Tensor ParamStore::add_normal(const std::string& name, const Shape& shape, double stddev,
                              Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return add(name, Tensor::from(shape, std::move(v)));
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("ParamStore: no parameter named '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.first == name; });
}

std::size_t ParamStore::count() const { return count(""); }

std::size_t ParamStore::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) {
    if (name.compare(0, prefix.size(), prefix) == 0) n += t.numel();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.entries_.size() != entries_.size()) {
    throw ContractError("ParamStore::copy_values_from: layouts differ");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, ta] = entries_[i];
    const auto& [nb, tb] = other.entries_[i];
    if (na != nb || ta.shape() != tb.shape()) {
      throw ContractError("ParamStore::copy_values_from: mismatch at '" + na + "'");
    }
    Tensor dst = ta;
    auto src = tb.data();
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

}  // namespace latentformer
