// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "latentformer/decoder.hpp"
#include "latentformer/scene.hpp"

namespace latentformer {

/// "#rrggbb" on the blue -> red ramp at step t of `steps`.
std::string ramp_color(std::size_t t, std::size_t steps);

/// SVG of the drivable area, agents with heading markers, the ground-truth
/// future in red, and (optionally) predicted samples colored per step.
std::string render_svg(const Scene& scene, const std::vector<TrajectorySample>* predictions = nullptr);

}  // namespace latentformer
