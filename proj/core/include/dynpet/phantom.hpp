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

#include <cstdint>
#include <vector>

#include "dynpet/data.hpp"

namespace dynpet {

/// Heart geometry in voxel units: two blood-pool spheres and a myocardial
/// shell around the left ventricle. Regions must be disjoint.
struct PhantomGeometry {
  double rv_center[3];
  double rv_radius;
  double lv_center[3];
  double lv_radius;
  double myo_thickness;  // shell outer radius = lv_radius + myo_thickness
};

/// Reference geometry for a 64x64x32 grid, scaled per axis to other grids.
PhantomGeometry default_geometry(int nx, int ny, int nz);

struct PhantomConfig {
  int nx = 64, ny = 64, nz = 32;
  double voxel_mm[3] = {3.125, 3.125, 3.270};
  PhantomGeometry geom = default_geometry(64, 64, 32);

  // Blood input function: gamma variate A * t^alpha * exp(-t/tau).
  double input_amp = 1000.0;
  double input_alpha = 2.0;
  double input_tau_s = 9.0;
  double rv_to_lv_delay_s = 6.0;   // transit delay RV -> LV
  double dispersion_s = 4.0;       // exponential dispersion time constant

  // Tissue kinetics (per-minute units).
  double k1 = 0.5;   // mL/min/g
  double k2 = 0.1;   // 1/min

  double background_frac = 0.05;  // background = this fraction of LV curve
  double psf_sigma_vox = 1.0;     // isotropic Gaussian PSF
  double noise_level = 0.0;       // 0 disables noise
};

/// Gamma-variate blood activity at time t (seconds); peaks at alpha*tau.
double input_function(double t_s, double amp, double alpha, double tau_s);

/// 1-tissue-compartment response C_T = K1 * (Ca (x) exp(-k2 t)) computed by
/// trapezoidal accumulation with exact inter-sample decay. `dt_min` is the
/// uniform sample spacing of `ca` in minutes; K1 and k2 are per-minute.
std::vector<double> tissue_tac(const std::vector<double>& ca, double dt_min,
                               double k1, double k2);

/// The dynamic framing used throughout: 14x5s, 6x10s, 3x20s, 3x30s, 1x90s
/// (27 contiguous frames covering 370 s).
std::vector<FrameTiming> default_frame_schedule();

/// Frame value = time average of the finely sampled curve over each frame.
/// `dt_s` is the fine grid spacing; the grid must cover the last frame end.
std::vector<double> bin_frames(const std::vector<double>& fine, double dt_s,
                               const std::vector<FrameTiming>& timing);

struct StudySample {
  DynamicSeries series;
  LabelMap labels;
  double true_k1 = 0.0, true_k2 = 0.0, true_mbf = 0.0;
  // Region curves binned to the frame schedule, before PSF and noise.
  std::vector<double> rv_tac, lv_tac, myo_tac;
};

/// Simulates one dynamic study: region curves painted into the labeled
/// volume, Gaussian PSF smoothing, and optional duration-scaled Gaussian
/// noise (sigma = noise_level * sqrt(value / frame_duration)).
/// Pure given (cfg, seed). Throws if the configured regions overlap.
StudySample simulate_study(const PhantomConfig& cfg, std::uint64_t seed);

/// In-place separable Gaussian smoothing (radius 2, kernel renormalized at
/// the borders); shared by the simulator and tests.
void gaussian_smooth(Volume& vol, double sigma_vox);

}  // namespace dynpet
