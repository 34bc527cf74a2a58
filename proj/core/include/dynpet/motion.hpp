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
#include "dynpet/tensor.hpp"

namespace dynpet {

/// Control grid sized so the cubic B-spline support covers an
/// nx * ny * nz volume: floor((n-1)/spacing) + 4 points per axis.
DisplacementField make_field(int nx, int ny, int nz, double spacing);

/// Cubic-B-spline-interpolated displacement (voxels) at a continuous
/// voxel position.
void displacement_at(const DisplacementField& f, double x, double y, double z,
                     double out[3]);

/// Backward warping with trilinear intensity sampling and border-value
/// extrapolation: out(p) = in(p + u(p)).
Volume warp(const Volume& vol, const DisplacementField& f);

/**
 * Differentiable counterpart of warp() used by the registration engine.
 * `vol` is a constant [X,Y,Z] tensor; `disp` is a (tracked) [3,gx,gy,gz]
 * tensor of control displacements for the full-resolution grid.
 *
 * The coordinate mapping supports multi-resolution pyramids: an output
 * voxel p samples the displacement at full-resolution position
 * q = p * coord_scale + coord_offset and moves by u(q) * disp_scale level
 * voxels. Full resolution is (coord_scale 1, coord_offset 0, disp_scale 1).
 * Gradients propagate to `disp` only.
 */
Tensor warp_op(const Tensor& vol, const Tensor& disp, double spacing,
               double coord_scale = 1.0, double coord_offset = 0.0,
               double disp_scale = 1.0);

/// Random control displacements ~ U(-magnitude, magnitude) per component,
/// smoothed by one 3^3 kernel pass over the control grid.
DisplacementField simulate_motion(int nx, int ny, int nz, double spacing,
                                  double magnitude, std::uint64_t seed);

/// Multiplies every displacement by s.
DisplacementField scale_field(DisplacementField f, double s);

/// Mean absolute control point error in mm: per point, the three absolute
/// axis differences (converted to mm) are averaged, then averaged over
/// points. Grids must match exactly.
double motion_error_mm(const DisplacementField& a, const DisplacementField& b,
                       const double voxel_mm[3]);

struct RegisterOptions {
  double spacing = 8.0;  // control spacing in full-resolution voxels
  int levels = 3;        // multi-resolution pyramid depth
  int iters = 100;       // optimizer iterations per level
  double lr = 0.5;       // Adam step (voxels) at the coarsest level
};

struct RegisterResult {
  DisplacementField field;
  /// Full-resolution warped MSE: initial value, then after each level.
  std::vector<double> trace;
};

/// Intensity-based free-form registration of `moving` onto `fixed` by
/// minimizing mean squared difference over the control displacements with
/// Adam, coarse to fine. Inputs should be comparably normalized.
RegisterResult register_volumes(const Volume& moving, const Volume& fixed,
                                const RegisterOptions& opt = {});

}  // namespace dynpet
