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

#include "dynpet/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dynpet {

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p].data().size(), 0.0);
      state.v[p].assign(params[p].data().size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: parameter list changed size");

  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<double>& value = params[p].data();
    if (state.m[p].size() != value.size())
      throw std::invalid_argument("adam_step: parameter shape changed");
    if (!params[p].has_grad()) continue;  // no gradient reached this one
    const std::vector<double>& g = params[p].grad();
    std::vector<double>& m = state.m[p];
    std::vector<double>& v = state.v[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace dynpet
