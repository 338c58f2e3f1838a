// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace latentformer {

/// Worker count: LATENTFORMER_THREADS when set to a positive integer,
/// otherwise the hardware concurrency.
std::size_t worker_threads();

/// Runs fn(i) for i in [0, n) across worker threads. Each call must write
/// only to its own slot; the first exception is rethrown after all workers
/// finish. Gradient recording is off inside workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace latentformer
