// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "latentformer/rng.hpp"
#include "latentformer/tensor.hpp"

namespace latentformer {

/// Insertion-ordered, uniquely named set of trainable tensors.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Registers a leaf tensor; throws ContractError on a duplicate name.
  Tensor add(const std::string& name, Tensor tensor);

  /// Weight of fan-in `fan_in`, uniform in +-sqrt(1/fan_in).
  Tensor add_uniform(const std::string& name, const Shape& shape, std::size_t fan_in, Rng& rng);
  Tensor add_zeros(const std::string& name, const Shape& shape);
  Tensor add_constant(const std::string& name, const Shape& shape, double value);
  /// Normal(0, stddev) entries; used for embedding tables.
  Tensor add_normal(const std::string& name, const Shape& shape, double stddev, Rng& rng);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Total scalar count across all tensors.
  std::size_t count() const;
  /// Scalar count of tensors whose name starts with `prefix`.
  std::size_t count(const std::string& prefix) const;

  void zero_grad();
  /// Copies values (not identity) from another store with identical layout.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<Entry> entries_;
};

}  // namespace latentformer
