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

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dynpet/data.hpp"
#include "dynpet/metrics.hpp"

using namespace dynpet;

namespace {

Volume filled(int nx, int ny, int nz, double value) {
  Volume v(nx, ny, nz);
  for (double& x : v.v) x = value;
  return v;
}

Volume random_volume(int nx, int ny, int nz, std::uint64_t seed) {
  Volume v(nx, ny, nz);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : v.v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("mse anchors and symmetry") {
  Volume a = filled(2, 2, 2, 1.0);
  Volume b = filled(2, 2, 2, 0.5);
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(a, b) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(mse(a, b) == mse(b, a));

  Volume c = random_volume(4, 3, 2, 7);
  Volume d = random_volume(4, 3, 2, 8);
  CHECK(mse(c, d) >= 0.0);
  CHECK(mse(c, d) == mse(d, c));

  Volume wrong(3, 3, 2);
  CHECK_THROWS_AS((void)mse(a, wrong), std::invalid_argument);
}

TEST_CASE("nmae anchors") {
  // Reference range is 2, total absolute error 1 over 2 voxels -> 0.25.
  Volume a(1, 1, 2), ref(1, 1, 2);
  a.v = {0.0, 1.0};
  ref.v = {0.0, 2.0};
  CHECK(nmae(a, ref) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(nmae(ref, ref) == 0.0);

  // Scaling both volumes leaves nmae unchanged (range scales with error).
  Volume a2 = a, ref2 = ref;
  for (double& x : a2.v) x *= 10.0;
  for (double& x : ref2.v) x *= 10.0;
  CHECK(nmae(a2, ref2) == doctest::Approx(nmae(a, ref)).epsilon(1e-12));

  // A constant reference has zero range: undefined normalization.
  Volume flat = filled(1, 1, 2, 3.0);
  CHECK_THROWS_AS((void)nmae(a, flat), std::invalid_argument);
}

TEST_CASE("psnr anchors") {
  // mse = 0.04 against a reference of range 2 -> 10*log10(4/0.04) = 20 dB.
  Volume ref(1, 1, 2), a(1, 1, 2);
  ref.v = {-1.0, 1.0};
  a.v = {-0.8, 1.2};
  CHECK(psnr(a, ref) == doctest::Approx(20.0).epsilon(1e-9));

  CHECK(psnr(ref, ref) == std::numeric_limits<double>::infinity());

  // Larger error -> strictly lower psnr.
  Volume worse(1, 1, 2);
  worse.v = {-0.5, 1.0};
  CHECK(psnr(worse, ref) < psnr(a, ref));

  Volume flat = filled(1, 1, 2, 1.0);
  CHECK_THROWS_AS((void)psnr(a, flat), std::invalid_argument);
}

TEST_CASE("ssim anchors") {
  // Identical volumes are perfectly similar regardless of content.
  Volume a = random_volume(9, 9, 9, 11);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Volume zeros = filled(8, 8, 8, 0.0);
  CHECK(ssim(zeros, zeros) == doctest::Approx(1.0).epsilon(1e-12));

  // Constant 1 vs constant 0: no structure or contrast terms survive, the
  // luminance term gives C1 / (1 + C1) with C1 = (0.01 * 2)^2.
  Volume ones = filled(8, 8, 8, 1.0);
  const double c1 = 4e-4;
  CHECK(ssim(ones, zeros) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));

  // Symmetry on generic content.
  Volume b = random_volume(9, 9, 9, 12);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) < 1.0);
  CHECK(ssim(a, b) >= -1.0);

  // The 7^3 window must fit inside the volume.
  Volume tiny = filled(6, 8, 8, 0.0);
  CHECK_THROWS_AS((void)ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("ssim degrades with noise") {
  Volume base(10, 10, 10);
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 10; ++y)
      for (int z = 0; z < 10; ++z)
        base.at(x, y, z) = std::sin(0.7 * x) * std::cos(0.5 * y) + 0.1 * z;

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Volume small_noise = base, big_noise = base;
  for (std::size_t i = 0; i < base.v.size(); ++i) {
    const double e = n(rng);
    small_noise.v[i] += 0.05 * e;
    big_noise.v[i] += 0.50 * e;
  }
  const double s_small = ssim(small_noise, base);
  const double s_big = ssim(big_noise, base);
  CHECK(s_small > s_big);
  CHECK(s_small > 0.8);
}

TEST_CASE("paired t-test oracle values") {
  // Differences 1, 2, 3: mean 2, sd 1 -> t = 2*sqrt(3) = 3.4641,
  // two-sided p = 0.0741799 at 2 degrees of freedom (scipy ttest_rel).
  const std::vector<double> a = {2.0, 4.0, 6.0};
  const std::vector<double> b = {1.0, 2.0, 3.0};
  TTestResult r = paired_t_test(a, b);
  CHECK(r.n == 3);
  CHECK(r.t == doctest::Approx(3.464101615137755).epsilon(1e-9));
  CHECK(r.p == doctest::Approx(0.07417990022744853).epsilon(1e-7));

  // Second oracle with mixed-sign differences (scipy ttest_rel).
  const std::vector<double> a2 = {1.3, 0.9, 1.4, 1.2, 1.0};
  const std::vector<double> b2 = {1.0, 1.0, 1.0, 1.0, 1.0};
  TTestResult r2 = paired_t_test(a2, b2);
  CHECK(r2.n == 5);
  CHECK(r2.t == doctest::Approx(1.7253243712550146).epsilon(1e-9));
  CHECK(r2.p == doctest::Approx(0.1595528526983939).epsilon(1e-7));
}

TEST_CASE("paired t-test properties") {
  const std::vector<double> a = {2.0, 4.0, 6.0, 1.0};
  const std::vector<double> b = {1.0, 2.0, 3.0, 4.0};

  // Swapping the samples negates t and preserves p.
  TTestResult fwd = paired_t_test(a, b);
  TTestResult rev = paired_t_test(b, a);
  CHECK(rev.t == doctest::Approx(-fwd.t).epsilon(1e-12));
  CHECK(rev.p == doctest::Approx(fwd.p).epsilon(1e-12));

  // Identical samples: deterministic sentinel.
  TTestResult same = paired_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);

  // Constant nonzero difference: infinite evidence, p = 0.
  std::vector<double> shifted = a;
  for (double& x : shifted) x += 0.5;
  TTestResult sure = paired_t_test(shifted, a);
  CHECK(sure.p == 0.0);

  CHECK_THROWS_AS((void)paired_t_test({1.0}, {2.0}), std::invalid_argument);
  CHECK_THROWS_AS((void)paired_t_test({1.0, 2.0}, {2.0}),
                  std::invalid_argument);
}

TEST_CASE("incomplete beta reference values") {
  // I_x(1/2, 1/2) = (2/pi) * asin(sqrt(x)).
  for (double x : {0.1, 0.25, 0.5, 0.9}) {
    const double expect = 2.0 / M_PI * std::asin(std::sqrt(x));
    CHECK(incomplete_beta(0.5, 0.5, x) ==
          doctest::Approx(expect).epsilon(1e-10));
  }
  // Closed form I_x(2,3) = x^2 (6 - 8x + 3x^2), at x=0.7 -> 0.9163.
  CHECK(incomplete_beta(2.0, 3.0, 0.7) ==
        doctest::Approx(0.9163).epsilon(1e-10));
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // Reflection identity I_x(a,b) + I_{1-x}(b,a) = 1.
  const double s = incomplete_beta(1.5, 2.5, 0.3) +
                   incomplete_beta(2.5, 1.5, 0.7);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
}
