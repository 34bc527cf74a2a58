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

#include "dynpet/grad_check.hpp"

#include <cmath>
#include <vector>

namespace dynpet {

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h) {
  // Analytic gradient: evaluate under a private tape and back-propagate.
  Tensor probe = Tensor::from(x.shape(), x.data(), /*requires_grad=*/true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = f(probe);
    tape.backward(y);
    analytic = probe.grad();
  }

  // Numeric gradient by central differences, evaluated without any tape.
  double worst = 0.0;
  std::vector<double> base = x.data();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> bumped = base;
    bumped[i] = base[i] + h;
    const double up = f(Tensor::from(x.shape(), bumped)).scalar();
    bumped[i] = base[i] - h;
    const double down = f(Tensor::from(x.shape(), bumped)).scalar();
    const double numeric = (up - down) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1e-12, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dynpet
