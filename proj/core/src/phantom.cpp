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

#include "dynpet/phantom.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "dynpet/common.hpp"
#include "dynpet/kinetics.hpp"

namespace dynpet {

namespace {
constexpr double kFineDtS = 0.1;  // fine time grid for curve synthesis
}

PhantomGeometry default_geometry(int nx, int ny, int nz) {
  const double sx = nx / 64.0;
  const double sy = ny / 64.0;
  const double sz = nz / 32.0;
  const double sr = std::min(sx, std::min(sy, sz));
  PhantomGeometry g;
  g.rv_center[0] = 18.0 * sx;
  g.rv_center[1] = 32.0 * sy;
  g.rv_center[2] = 16.0 * sz;
  g.rv_radius = 6.0 * sr;
  g.lv_center[0] = 40.0 * sx;
  g.lv_center[1] = 32.0 * sy;
  g.lv_center[2] = 16.0 * sz;
  g.lv_radius = 7.0 * sr;
  g.myo_thickness = 8.0 * sr;
  return g;
}

double input_function(double t_s, double amp, double alpha, double tau_s) {
  if (!(alpha > 0.0) || !(tau_s > 0.0))
    throw std::invalid_argument("input_function: alpha and tau must be positive");
  if (t_s <= 0.0) return 0.0;
  return amp * std::pow(t_s, alpha) * std::exp(-t_s / tau_s);
}

std::vector<double> tissue_tac(const std::vector<double>& ca, double dt_min,
                               double k1, double k2) {
  if (k1 < 0.0 || k2 < 0.0)
    throw std::invalid_argument("tissue_tac: rate constants must be >= 0");
  if (!(dt_min > 0.0))
    throw std::invalid_argument("tissue_tac: dt must be positive");
  std::vector<double> ct(ca.size(), 0.0);
  if (ca.empty()) return ct;
  // Trapezoidal integration of K1 * Ca (x) exp(-k2 t): carry the integral
  // forward with exact decay over each step so long curves stay accurate.
  const double decay = std::exp(-k2 * dt_min);
  const double half = 0.5 * k1 * dt_min;
  for (std::size_t i = 1; i < ca.size(); ++i)
    ct[i] = ct[i - 1] * decay + half * (ca[i] + ca[i - 1] * decay);
  return ct;
}

std::vector<FrameTiming> default_frame_schedule() {
  std::vector<FrameTiming> timing;
  timing.reserve(27);
  double t = 0.0;
  auto push = [&](int n, double dur) {
    for (int i = 0; i < n; ++i) {
      timing.push_back({t, dur});
      t += dur;
    }
  };
  push(14, 5.0);
  push(6, 10.0);
  push(3, 20.0);
  push(3, 30.0);
  push(1, 90.0);
  return timing;
}

std::vector<double> bin_frames(const std::vector<double>& fine, double dt_s,
                               const std::vector<FrameTiming>& timing) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("bin_frames: dt must be positive");
  std::vector<double> out;
  out.reserve(timing.size());
  const double cover = (static_cast<double>(fine.size()) - 1.0) * dt_s;
  for (const FrameTiming& f : timing) {
    const double i0_real = f.start_s / dt_s;
    const double i1_real = (f.start_s + f.duration_s) / dt_s;
    const auto i0 = static_cast<std::int64_t>(std::llround(i0_real));
    const auto i1 = static_cast<std::int64_t>(std::llround(i1_real));
    if (std::abs(i0_real - i0) > 1e-6 || std::abs(i1_real - i1) > 1e-6)
      throw std::invalid_argument(
          "bin_frames: frame boundaries must align with the fine grid");
    if (f.start_s + f.duration_s > cover + 1e-9)
      throw std::invalid_argument("bin_frames: fine grid does not cover frame");
    double integral = 0.5 * (fine[i0] + fine[i1]);
    for (std::int64_t i = i0 + 1; i < i1; ++i) integral += fine[i];
    out.push_back(integral * dt_s / f.duration_s);
  }
  return out;
}

void gaussian_smooth(Volume& vol, double sigma_vox) {
  if (!(sigma_vox > 0.0)) return;
  constexpr int kRadius = 2;
  double w[2 * kRadius + 1];
  for (int j = -kRadius; j <= kRadius; ++j)
    w[j + kRadius] = std::exp(-0.5 * j * j / (sigma_vox * sigma_vox));

  const int n[3] = {vol.nx, vol.ny, vol.nz};
  std::vector<double> tmp(vol.v.size());
  for (int axis = 0; axis < 3; ++axis) {
    const std::ptrdiff_t stride =
        axis == 0   ? static_cast<std::ptrdiff_t>(vol.ny) * vol.nz
        : axis == 1 ? static_cast<std::ptrdiff_t>(vol.nz)
                    : 1;
    for (int x = 0; x < vol.nx; ++x)
      for (int y = 0; y < vol.ny; ++y)
        for (int z = 0; z < vol.nz; ++z) {
          const int pos[3] = {x, y, z};
          const auto idx = static_cast<std::ptrdiff_t>(vol.index(x, y, z));
          double acc = 0.0, norm = 0.0;
          for (int j = -kRadius; j <= kRadius; ++j) {
            const int q = pos[axis] + j;
            if (q < 0 || q >= n[axis]) continue;  // renormalize at borders
            acc += w[j + kRadius] * vol.v[idx + j * stride];
            norm += w[j + kRadius];
          }
          tmp[idx] = acc / norm;
        }
    vol.v.swap(tmp);
  }
}

StudySample simulate_study(const PhantomConfig& cfg, std::uint64_t seed) {
  const PhantomGeometry& g = cfg.geom;
  if (!(g.rv_radius > 0.0) || !(g.lv_radius > 0.0) || !(g.myo_thickness > 0.0))
    throw std::invalid_argument("simulate_study: radii must be positive");
  {
    double d2 = 0.0;
    for (int ax = 0; ax < 3; ++ax) {
      const double d = g.rv_center[ax] - g.lv_center[ax];
      d2 += d * d;
    }
    const double myo_outer = g.lv_radius + g.myo_thickness;
    if (std::sqrt(d2) <= g.rv_radius + myo_outer)
      throw std::invalid_argument("simulate_study: phantom regions overlap");
  }

  // --- region curves on a fine grid -------------------------------------
  const std::vector<FrameTiming> timing = default_frame_schedule();
  const double total_s = timing.back().start_s + timing.back().duration_s;
  const auto nfine =
      static_cast<std::size_t>(std::llround(total_s / kFineDtS)) + 1;

  std::vector<double> rv(nfine), rv_delayed(nfine);
  for (std::size_t i = 0; i < nfine; ++i) {
    const double t = static_cast<double>(i) * kFineDtS;
    rv[i] = input_function(t, cfg.input_amp, cfg.input_alpha, cfg.input_tau_s);
    rv_delayed[i] = input_function(t - cfg.rv_to_lv_delay_s, cfg.input_amp,
                                   cfg.input_alpha, cfg.input_tau_s);
  }
  std::vector<double> lv(nfine);
  if (cfg.dispersion_s < 1e-9) {
    lv = rv_delayed;  // zero dispersion degenerates to a pure shift
  } else {
    const double a = std::exp(-kFineDtS / cfg.dispersion_s);
    lv[0] = (1.0 - a) * rv_delayed[0];
    for (std::size_t i = 1; i < nfine; ++i)
      lv[i] = a * lv[i - 1] + (1.0 - a) * rv_delayed[i];
  }
  const std::vector<double> myo =
      tissue_tac(lv, kFineDtS / 60.0, cfg.k1, cfg.k2);

  StudySample study;
  study.rv_tac = bin_frames(rv, kFineDtS, timing);
  study.lv_tac = bin_frames(lv, kFineDtS, timing);
  study.myo_tac = bin_frames(myo, kFineDtS, timing);
  std::vector<double> bg_tac = study.lv_tac;
  for (double& v : bg_tac) v *= cfg.background_frac;

  // --- labels -------------------------------------------------------------
  study.labels = LabelMap(cfg.nx, cfg.ny, cfg.nz);
  for (int x = 0; x < cfg.nx; ++x)
    for (int y = 0; y < cfg.ny; ++y)
      for (int z = 0; z < cfg.nz; ++z) {
        const double p[3] = {static_cast<double>(x), static_cast<double>(y),
                             static_cast<double>(z)};
        double d_rv = 0.0, d_lv = 0.0;
        for (int ax = 0; ax < 3; ++ax) {
          d_rv += (p[ax] - g.rv_center[ax]) * (p[ax] - g.rv_center[ax]);
          d_lv += (p[ax] - g.lv_center[ax]) * (p[ax] - g.lv_center[ax]);
        }
        d_rv = std::sqrt(d_rv);
        d_lv = std::sqrt(d_lv);
        std::uint8_t lab = kBackground;
        if (d_rv <= g.rv_radius)
          lab = kRvBlood;
        else if (d_lv <= g.lv_radius)
          lab = kLvBlood;
        else if (d_lv <= g.lv_radius + g.myo_thickness)
          lab = kMyocardium;
        study.labels.at(x, y, z) = lab;
      }

  // --- frames ---------------------------------------------------------------
  study.series.nx = cfg.nx;
  study.series.ny = cfg.ny;
  study.series.nz = cfg.nz;
  for (int ax = 0; ax < 3; ++ax) study.series.voxel_mm[ax] = cfg.voxel_mm[ax];
  study.series.timing = timing;
  study.series.frames.reserve(timing.size());

  std::mt19937_64 noise_rng(mix_seed(seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t f = 0; f < timing.size(); ++f) {
    double region_value[4];
    region_value[kBackground] = bg_tac[f];
    region_value[kRvBlood] = study.rv_tac[f];
    region_value[kLvBlood] = study.lv_tac[f];
    region_value[kMyocardium] = study.myo_tac[f];
    Volume vol(cfg.nx, cfg.ny, cfg.nz);
    for (std::size_t i = 0; i < vol.v.size(); ++i)
      vol.v[i] = region_value[study.labels.v[i]];
    gaussian_smooth(vol, cfg.psf_sigma_vox);
    if (cfg.noise_level > 0.0) {
      const double dur = timing[f].duration_s;
      for (double& v : vol.v)
        v += gauss(noise_rng) * cfg.noise_level *
             std::sqrt(std::max(v, 0.0) / dur);
    }
    study.series.frames.push_back(std::move(vol));
  }

  study.true_k1 = cfg.k1;
  study.true_k2 = cfg.k2;
  study.true_mbf = k1_to_mbf(cfg.k1);
  return study;
}

}  // namespace dynpet
