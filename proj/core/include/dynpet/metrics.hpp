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

#include "dynpet/data.hpp"

namespace dynpet {

/// Mean squared error; volumes must share a grid.
double mse(const Volume& a, const Volume& b);

/// Mean absolute error normalized by the intensity range of the
/// reference volume `ref` (its max minus min).
double nmae(const Volume& a, const Volume& ref);

/// Peak signal-to-noise ratio in dB with the peak taken as the intensity
/// range of `ref`. Identical volumes give +infinity.
double psnr(const Volume& a, const Volume& ref);

/// Structural similarity with a 7x7x7 uniform window, averaged over all
/// window positions that lie fully inside the volume. The stabilizing
/// constants assume intensities spanning roughly [-1, 1] (dynamic range 2).
double ssim(const Volume& a, const Volume& b);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int n = 0;
};

/// Two-sided paired t-test on matched samples. Degenerate inputs get
/// deterministic sentinels: zero differences give t = 0, p = 1; nonzero
/// mean difference with zero spread gives p = 0.
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b);

/// Regularized incomplete beta function I_x(a, b), exposed for testing
/// against reference statistics tables.
double incomplete_beta(double a, double b, double x);

}  // namespace dynpet
