/*
 * dynpet : dynamic cardiac PET frame conversion and motion correction
 *
 * Copyright 2026 dynpet contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <vector>

#include "dynpet/tensor.hpp"

namespace dynpet {

/**
 * Adam optimizer state for a fixed parameter list.
 *
 * Update, per entry, with bias-corrected first and second moments:
 *
 *   m <- b1*m + (1-b1)*g          mhat = m / (1 - b1^t)
 *   v <- b2*v + (1-b2)*g^2        vhat = v / (1 - b2^t)
 *   p <- p - lr * mhat / (sqrt(vhat) + eps)
 *
 * Moment buffers are allocated lazily on the first step and keyed by
 * position, so the same parameter list must be passed every time.
 */
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  std::int64_t t = 0;                     // completed steps
  std::vector<std::vector<double>> m;     // first moments, one per parameter
  std::vector<std::vector<double>> v;     // second moments
};

/// Applies one Adam update using each parameter's accumulated gradient,
/// then leaves the gradients untouched (callers zero them per step).
/// Parameters that received no gradient are left unchanged for that step.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace dynpet
