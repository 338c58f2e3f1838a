// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace latentformer {

/// Broad failure category. The CLI maps each kind onto a distinct exit code.
enum class ErrorKind {
  kDimension,
  kParameter,
  kContract,
  kCapacity,
  kFormat,
  kConfig,
  kGeneration,
  kNumeric,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error(ErrorKind::kDimension, m) {}
};
struct ParameterError : Error {
  explicit ParameterError(const std::string& m) : Error(ErrorKind::kParameter, m) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error(ErrorKind::kContract, m) {}
};
struct CapacityError : Error {
  explicit CapacityError(const std::string& m) : Error(ErrorKind::kCapacity, m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorKind::kFormat, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};
struct GenerationError : Error {
  explicit GenerationError(const std::string& m) : Error(ErrorKind::kGeneration, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorKind::kNumeric, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};

}  // namespace latentformer
