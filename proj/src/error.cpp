// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/error.hpp"

namespace latentformer {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kGeneration: return "generation";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace latentformer
