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

#include <functional>

#include "dynpet/tensor.hpp"

namespace dynpet {

/**
 * Compare reverse-mode gradients against central finite differences.
 *
 * `f` must map `x` to a scalar tensor.  The analytic gradient is obtained by
 * running `f` under a fresh tape and back-propagating; the numeric gradient
 * perturbs each entry of `x` by +-h.  Returns the worst relative error
 *
 *   max_i |analytic_i - numeric_i| / max(1e-12, |numeric_i|)
 *
 * so a small return value means every partial derivative matches.
 */
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h = 1e-5);

}  // namespace dynpet
