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

#include "dynpet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dynpet {

namespace {

void require_same_grid(const Volume& a, const Volume& b, const char* what) {
  if (!a.same_grid(b))
    throw std::invalid_argument(std::string(what) +
                                ": volumes are on different grids");
  if (a.v.empty())
    throw std::invalid_argument(std::string(what) + ": empty volume");
}

double range_of(const Volume& v) {
  const auto [lo, hi] = std::minmax_element(v.v.begin(), v.v.end());
  return *hi - *lo;
}

}  // namespace

double mse(const Volume& a, const Volume& b) {
  require_same_grid(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return s / static_cast<double>(a.v.size());
}

double nmae(const Volume& a, const Volume& ref) {
  require_same_grid(a, ref, "nmae");
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    s += std::abs(a.v[i] - ref.v[i]);
  const double mae = s / static_cast<double>(a.v.size());
  const double range = range_of(ref);
  if (range <= 0.0)
    throw std::invalid_argument("nmae: constant reference volume");
  return mae / range;
}

double psnr(const Volume& a, const Volume& ref) {
  require_same_grid(a, ref, "psnr");
  const double peak = range_of(ref);
  if (peak <= 0.0)
    throw std::invalid_argument("psnr: constant reference volume");
  const double err = mse(a, ref);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / err);
}

double ssim(const Volume& a, const Volume& b) {
  require_same_grid(a, b, "ssim");
  constexpr int kWin = 7;
  constexpr int kHalf = kWin / 2;
  constexpr double kL = 2.0;  // dynamic range of normalized intensities
  constexpr double kC1 = (0.01 * kL) * (0.01 * kL);
  constexpr double kC2 = (0.03 * kL) * (0.03 * kL);
  if (a.nx < kWin || a.ny < kWin || a.nz < kWin)
    throw std::invalid_argument("ssim: volume smaller than the 7^3 window");

  const double inv_n = 1.0 / (kWin * kWin * kWin);
  double total = 0.0;
  std::int64_t count = 0;
  for (int cx = kHalf; cx < a.nx - kHalf; ++cx) {
    for (int cy = kHalf; cy < a.ny - kHalf; ++cy) {
      for (int cz = kHalf; cz < a.nz - kHalf; ++cz) {
        double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int x = cx - kHalf; x <= cx + kHalf; ++x)
          for (int y = cy - kHalf; y <= cy + kHalf; ++y) {
            const std::size_t row = a.index(x, y, cz - kHalf);
            for (int i = 0; i < kWin; ++i) {
              const double va = a.v[row + i];
              const double vb = b.v[row + i];
              sa += va;
              sb += vb;
              saa += va * va;
              sbb += vb * vb;
              sab += va * vb;
            }
          }
        const double ma = sa * inv_n;
        const double mb = sb * inv_n;
        const double va = saa * inv_n - ma * ma;
        const double vb = sbb * inv_n - mb * mb;
        const double cov = sab * inv_n - ma * mb;
        total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                 ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Student t tail via the regularized incomplete beta function

namespace {

// Continued fraction for I_x(a,b) (modified Lentz iteration).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  // The continued fraction converges fast only for x below the split point;
  // above it, use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_t_test: sample size mismatch");
  const int n = static_cast<int>(a.size());
  if (n < 2)
    throw std::invalid_argument("paired_t_test: needs at least two pairs");

  double mean_d = 0.0;
  for (int i = 0; i < n; ++i) mean_d += a[i] - b[i];
  mean_d /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean_d;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1));

  TTestResult r;
  r.n = n;
  if (sd == 0.0) {
    if (mean_d == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean_d > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean_d / (sd / std::sqrt(static_cast<double>(n)));
  const double df = n - 1;
  r.p = incomplete_beta(0.5 * df, 0.5, df / (df + r.t * r.t));
  return r;
}

}  // namespace dynpet
