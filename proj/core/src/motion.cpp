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

#include "dynpet/motion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "dynpet/adam.hpp"
#include "dynpet/common.hpp"
#include "dynpet/metrics.hpp"
#include "dynpet/ops.hpp"

namespace dynpet {

namespace {

int grid_points(int n, double spacing) {
  return static_cast<int>(std::floor((n - 1) / spacing)) + 4;
}

// Uniform cubic B-spline basis, B0..B3 on t in [0,1).
void bspline_weights(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0;
  w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
  w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
  w[3] = t3 / 6.0;
}

// Decomposes a full-resolution coordinate q into the support cell i0 and
// the four basis weights. Control point i sits at voxel (i-1)*spacing.
void bspline_setup(double q, double spacing, int npoints, int* i0,
                   double w[4]) {
  double s = q / spacing + 1.0;
  // guard the upper edge so i0+2 stays inside the grid; t = 1 at the top
  // boundary evaluates the spline exactly at the last covered position
  const double s_max = static_cast<double>(npoints - 2);
  if (s > s_max) s = s_max;
  if (s < 1.0) s = 1.0;
  *i0 = static_cast<int>(std::floor(s));
  if (*i0 > npoints - 3) *i0 = npoints - 3;
  bspline_weights(s - *i0, w);
}

}  // namespace

DisplacementField make_field(int nx, int ny, int nz, double spacing) {
  if (!(spacing > 0.0))
    throw std::invalid_argument("make_field: spacing must be positive");
  if (nx < 2 || ny < 2 || nz < 2)
    throw std::invalid_argument("make_field: volume too small");
  return DisplacementField(grid_points(nx, spacing), grid_points(ny, spacing),
                           grid_points(nz, spacing), spacing);
}

void displacement_at(const DisplacementField& f, double x, double y, double z,
                     double out[3]) {
  int ix, iy, iz;
  double wx[4], wy[4], wz[4];
  bspline_setup(x, f.spacing, f.gx, &ix, wx);
  bspline_setup(y, f.spacing, f.gy, &iy, wy);
  bspline_setup(z, f.spacing, f.gz, &iz, wz);
  out[0] = out[1] = out[2] = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const double wab = wx[a] * wy[b];
      for (int c = 0; c < 4; ++c) {
        const double w = wab * wz[c];
        const std::size_t base =
            f.index(ix - 1 + a, iy - 1 + b, iz - 1 + c, 0);
        out[0] += w * f.d[base];
        out[1] += w * f.d[base + 1];
        out[2] += w * f.d[base + 2];
      }
    }
}

namespace {

double sample_trilinear(const Volume& vol, double x, double y, double z) {
  // border-value extrapolation
  x = std::min(std::max(x, 0.0), static_cast<double>(vol.nx - 1));
  y = std::min(std::max(y, 0.0), static_cast<double>(vol.ny - 1));
  z = std::min(std::max(z, 0.0), static_cast<double>(vol.nz - 1));
  int x0 = std::min(static_cast<int>(x), vol.nx - 2);
  int y0 = std::min(static_cast<int>(y), vol.ny - 2);
  int z0 = std::min(static_cast<int>(z), vol.nz - 2);
  if (vol.nx == 1) x0 = 0;
  if (vol.ny == 1) y0 = 0;
  if (vol.nz == 1) z0 = 0;
  const double fx = x - x0, fy = y - y0, fz = z - z0;
  auto v = [&](int dx, int dy, int dz) {
    return vol.at(std::min(x0 + dx, vol.nx - 1), std::min(y0 + dy, vol.ny - 1),
                  std::min(z0 + dz, vol.nz - 1));
  };
  const double c00 = v(0, 0, 0) * (1 - fz) + v(0, 0, 1) * fz;
  const double c01 = v(0, 1, 0) * (1 - fz) + v(0, 1, 1) * fz;
  const double c10 = v(1, 0, 0) * (1 - fz) + v(1, 0, 1) * fz;
  const double c11 = v(1, 1, 0) * (1 - fz) + v(1, 1, 1) * fz;
  return (c00 * (1 - fy) + c01 * fy) * (1 - fx) +
         (c10 * (1 - fy) + c11 * fy) * fx;
}

}  // namespace

Volume warp(const Volume& vol, const DisplacementField& f) {
  Volume out(vol.nx, vol.ny, vol.nz);
  for (int x = 0; x < vol.nx; ++x)
    for (int y = 0; y < vol.ny; ++y)
      for (int z = 0; z < vol.nz; ++z) {
        double u[3];
        displacement_at(f, x, y, z, u);
        out.at(x, y, z) =
            sample_trilinear(vol, x + u[0], y + u[1], z + u[2]);
      }
  return out;
}

// ---------------------------------------------------------------------------
// differentiable warp

Tensor warp_op(const Tensor& vol, const Tensor& disp, double spacing,
               double coord_scale, double coord_offset, double disp_scale) {
  if (vol.rank() != 3)
    shape_error("warp_op", "volume must be [X,Y,Z], got " +
                               shape_str(vol.shape()));
  if (disp.rank() != 4 || disp.dim(0) != 3)
    shape_error("warp_op", "displacements must be [3,gx,gy,gz], got " +
                               shape_str(disp.shape()));
  const int X = vol.dim(0), Y = vol.dim(1), Z = vol.dim(2);
  const int gx = disp.dim(1), gy = disp.dim(2), gz = disp.dim(3);
  const std::size_t gplane = static_cast<std::size_t>(gx) * gy * gz;
  const auto& vv = vol.data();
  const auto& dv = disp.data();

  std::vector<double> out(static_cast<std::size_t>(X) * Y * Z);
  // Per-voxel sampling record so the backward rule can replay exactly the
  // forward interpolation taps without re-deriving them.
  struct VoxelTap {
    int ix, iy, iz;          // B-spline cell origin
    double wx[4], wy[4], wz[4];
    double rx, ry, rz;       // sample position after displacement
    bool inside[3];          // spatial gradient valid per axis
  };
  auto taps = std::make_shared<std::vector<VoxelTap>>(out.size());

  auto clampd = [](double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
  };

  std::size_t p = 0;
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y)
      for (int z = 0; z < Z; ++z, ++p) {
        VoxelTap& tp = (*taps)[p];
        const double q[3] = {x * coord_scale + coord_offset,
                             y * coord_scale + coord_offset,
                             z * coord_scale + coord_offset};
        bspline_setup(q[0], spacing, gx, &tp.ix, tp.wx);
        bspline_setup(q[1], spacing, gy, &tp.iy, tp.wy);
        bspline_setup(q[2], spacing, gz, &tp.iz, tp.wz);
        double u[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            const double wab = tp.wx[a] * tp.wy[b];
            for (int c = 0; c < 4; ++c) {
              const double w = wab * tp.wz[c];
              const std::size_t node =
                  (static_cast<std::size_t>(tp.ix - 1 + a) * gy +
                   (tp.iy - 1 + b)) *
                      gz +
                  (tp.iz - 1 + c);
              u[0] += w * dv[node];
              u[1] += w * dv[gplane + node];
              u[2] += w * dv[2 * gplane + node];
            }
          }
        const double raw[3] = {x + u[0] * disp_scale, y + u[1] * disp_scale,
                               z + u[2] * disp_scale};
        tp.inside[0] = raw[0] > 0.0 && raw[0] < X - 1;
        tp.inside[1] = raw[1] > 0.0 && raw[1] < Y - 1;
        tp.inside[2] = raw[2] > 0.0 && raw[2] < Z - 1;
        tp.rx = clampd(raw[0], 0.0, X - 1);
        tp.ry = clampd(raw[1], 0.0, Y - 1);
        tp.rz = clampd(raw[2], 0.0, Z - 1);

        const int x0 = std::min(static_cast<int>(tp.rx), X - 2);
        const int y0 = std::min(static_cast<int>(tp.ry), Y - 2);
        const int z0 = std::min(static_cast<int>(tp.rz), Z - 2);
        const double fx = tp.rx - x0, fy = tp.ry - y0, fz = tp.rz - z0;
        auto vat = [&](int dx, int dy, int dz) {
          return vv[(static_cast<std::size_t>(x0 + dx) * Y + (y0 + dy)) * Z +
                    (z0 + dz)];
        };
        const double c00 = vat(0, 0, 0) * (1 - fz) + vat(0, 0, 1) * fz;
        const double c01 = vat(0, 1, 0) * (1 - fz) + vat(0, 1, 1) * fz;
        const double c10 = vat(1, 0, 0) * (1 - fz) + vat(1, 0, 1) * fz;
        const double c11 = vat(1, 1, 0) * (1 - fz) + vat(1, 1, 1) * fz;
        out[p] = (c00 * (1 - fy) + c01 * fy) * (1 - fx) +
                 (c10 * (1 - fy) + c11 * fy) * fx;
      }

  const bool tr = Tape::active() && disp.track();
  Tensor o = Tensor::from({X, Y, Z}, std::move(out));
  if (tr) {
    o.set_track(true);
    Tape::active()->record("warp_op", o, [vol, disp, o, taps, disp_scale, gy, gz,
                                       gplane] {
      if (!o.has_grad() || !disp.track()) return;
      const auto& g = o.impl()->grad;
      const auto& vv = vol.data();
      auto& gd = disp.grad();
      const int X = vol.dim(0), Y = vol.dim(1), Z = vol.dim(2);
      for (std::size_t p = 0; p < g.size(); ++p) {
        if (g[p] == 0.0) continue;
        const VoxelTap& tp = (*taps)[p];
        const int x0 = std::min(static_cast<int>(tp.rx), X - 2);
        const int y0 = std::min(static_cast<int>(tp.ry), Y - 2);
        const int z0 = std::min(static_cast<int>(tp.rz), Z - 2);
        const double fx = tp.rx - x0, fy = tp.ry - y0, fz = tp.rz - z0;
        auto vat = [&](int dx, int dy, int dz) {
          return vv[(static_cast<std::size_t>(x0 + dx) * Y + (y0 + dy)) * Z +
                    (z0 + dz)];
        };
        // d(sample)/d(position), zeroed where the clamp saturated
        const double c00 = vat(0, 0, 0) * (1 - fz) + vat(0, 0, 1) * fz;
        const double c01 = vat(0, 1, 0) * (1 - fz) + vat(0, 1, 1) * fz;
        const double c10 = vat(1, 0, 0) * (1 - fz) + vat(1, 0, 1) * fz;
        const double c11 = vat(1, 1, 0) * (1 - fz) + vat(1, 1, 1) * fz;
        double dpos[3];
        dpos[0] = tp.inside[0]
                      ? (c10 * (1 - fy) + c11 * fy) - (c00 * (1 - fy) + c01 * fy)
                      : 0.0;
        dpos[1] = tp.inside[1] ? (c01 - c00) * (1 - fx) + (c11 - c10) * fx : 0.0;
        if (tp.inside[2]) {
          const double d00 = vat(0, 0, 1) - vat(0, 0, 0);
          const double d01 = vat(0, 1, 1) - vat(0, 1, 0);
          const double d10 = vat(1, 0, 1) - vat(1, 0, 0);
          const double d11 = vat(1, 1, 1) - vat(1, 1, 0);
          dpos[2] = (d00 * (1 - fy) + d01 * fy) * (1 - fx) +
                    (d10 * (1 - fy) + d11 * fy) * fx;
        } else {
          dpos[2] = 0.0;
        }
        const double gx0 = g[p] * disp_scale * dpos[0];
        const double gy0 = g[p] * disp_scale * dpos[1];
        const double gz0 = g[p] * disp_scale * dpos[2];
        if (gx0 == 0.0 && gy0 == 0.0 && gz0 == 0.0) continue;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            const double wab = tp.wx[a] * tp.wy[b];
            for (int c = 0; c < 4; ++c) {
              const double w = wab * tp.wz[c];
              const std::size_t node =
                  (static_cast<std::size_t>(tp.ix - 1 + a) * gy +
                   (tp.iy - 1 + b)) *
                      gz +
                  (tp.iz - 1 + c);
              gd[node] += w * gx0;
              gd[gplane + node] += w * gy0;
              gd[2 * gplane + node] += w * gz0;
            }
          }
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// simulation and metrics

DisplacementField simulate_motion(int nx, int ny, int nz, double spacing,
                                  double magnitude, std::uint64_t seed) {
  if (!(magnitude > 0.0))
    throw std::invalid_argument("simulate_motion: magnitude must be positive");
  DisplacementField f = make_field(nx, ny, nz, spacing);
  std::mt19937_64 rng(mix_seed(seed, 7));
  std::uniform_real_distribution<double> uni(-magnitude, magnitude);
  for (double& v : f.d) v = uni(rng);

  // One smoothing pass over the control grid keeps the simulated motion
  // spatially coherent instead of voxel-noise-like.
  const double w1[3] = {0.25, 0.5, 0.25};
  DisplacementField sm = f;
  for (int i = 0; i < f.gx; ++i)
    for (int j = 0; j < f.gy; ++j)
      for (int k = 0; k < f.gz; ++k)
        for (int axis = 0; axis < 3; ++axis) {
          double acc = 0.0, norm = 0.0;
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj)
              for (int dk = -1; dk <= 1; ++dk) {
                const int a = i + di, b = j + dj, c = k + dk;
                if (a < 0 || a >= f.gx || b < 0 || b >= f.gy || c < 0 ||
                    c >= f.gz)
                  continue;
                const double w = w1[di + 1] * w1[dj + 1] * w1[dk + 1];
                acc += w * f.d[f.index(a, b, c, axis)];
                norm += w;
              }
          sm.d[sm.index(i, j, k, axis)] = acc / norm;
        }
  return sm;
}

DisplacementField scale_field(DisplacementField f, double s) {
  for (double& v : f.d) v *= s;
  return f;
}

double motion_error_mm(const DisplacementField& a, const DisplacementField& b,
                       const double voxel_mm[3]) {
  if (a.gx != b.gx || a.gy != b.gy || a.gz != b.gz ||
      a.spacing != b.spacing)
    throw std::invalid_argument("motion_error_mm: control grid mismatch");
  double total = 0.0;
  const std::size_t n = a.d.size() / 3;
  for (std::size_t p = 0; p < n; ++p) {
    double e = 0.0;
    for (int axis = 0; axis < 3; ++axis)
      e += std::abs(a.d[3 * p + axis] - b.d[3 * p + axis]) * voxel_mm[axis];
    total += e / 3.0;
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// registration

namespace {

Volume avg_pool2(const Volume& v) {
  Volume out((v.nx + 1) / 2, (v.ny + 1) / 2, (v.nz + 1) / 2);
  for (int x = 0; x < out.nx; ++x)
    for (int y = 0; y < out.ny; ++y)
      for (int z = 0; z < out.nz; ++z) {
        double s = 0.0;
        int n = 0;
        for (int dx = 0; dx < 2; ++dx)
          for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
              const int a = 2 * x + dx, b = 2 * y + dy, c = 2 * z + dz;
              if (a >= v.nx || b >= v.ny || c >= v.nz) continue;
              s += v.at(a, b, c);
              ++n;
            }
        out.at(x, y, z) = s / n;
      }
  return out;
}

Tensor tensor_of(const Volume& v) {
  return Tensor::from({v.nx, v.ny, v.nz}, v.v);
}

DisplacementField field_of(const Tensor& disp, double spacing) {
  DisplacementField f(disp.dim(1), disp.dim(2), disp.dim(3), spacing);
  const auto& dv = disp.data();
  const std::size_t gplane = static_cast<std::size_t>(f.gx) * f.gy * f.gz;
  for (std::size_t p = 0; p < gplane; ++p)
    for (int axis = 0; axis < 3; ++axis)
      f.d[3 * p + axis] = dv[axis * gplane + p];
  return f;
}

// Exact dyadic refinement of a cubic B-spline field from spacing 2s to s:
// the refined control points reproduce the same displacement function, so a
// finer level starts from exactly the loss its predecessor ended with. Fine
// point k sits either on a coarse point (odd k, the 1/8-6/8-1/8 stencil) or
// halfway between two (even k, the 1/2-1/2 stencil).
void subdivide_axis(int k, int gc, int idx[3], double w[3], int* terms) {
  if (k % 2 == 1) {
    const int j = (k + 1) / 2;
    idx[0] = std::clamp(j - 1, 0, gc - 1);
    idx[1] = std::clamp(j, 0, gc - 1);
    idx[2] = std::clamp(j + 1, 0, gc - 1);
    w[0] = 1.0 / 8.0;
    w[1] = 6.0 / 8.0;
    w[2] = 1.0 / 8.0;
    *terms = 3;
  } else {
    const int j = k / 2;
    idx[0] = std::clamp(j, 0, gc - 1);
    idx[1] = std::clamp(j + 1, 0, gc - 1);
    w[0] = 0.5;
    w[1] = 0.5;
    *terms = 2;
  }
}

DisplacementField subdivide_field(const DisplacementField& coarse,
                                  const DisplacementField& proto) {
  DisplacementField fine(proto.gx, proto.gy, proto.gz, proto.spacing);
  for (int i = 0; i < fine.gx; ++i)
    for (int j = 0; j < fine.gy; ++j)
      for (int k = 0; k < fine.gz; ++k) {
        int ix[3], iy[3], iz[3], na, nb, nc;
        double wx[3], wy[3], wz[3];
        subdivide_axis(i, coarse.gx, ix, wx, &na);
        subdivide_axis(j, coarse.gy, iy, wy, &nb);
        subdivide_axis(k, coarse.gz, iz, wz, &nc);
        double acc[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < na; ++a)
          for (int b = 0; b < nb; ++b)
            for (int c = 0; c < nc; ++c) {
              const double w = wx[a] * wy[b] * wz[c];
              const std::size_t base = coarse.index(ix[a], iy[b], iz[c], 0);
              for (int ax = 0; ax < 3; ++ax) acc[ax] += w * coarse.d[base + ax];
            }
        const std::size_t out = fine.index(i, j, k, 0);
        for (int ax = 0; ax < 3; ++ax) fine.d[out + ax] = acc[ax];
      }
  return fine;
}

}  // namespace

RegisterResult register_volumes(const Volume& moving, const Volume& fixed,
                                const RegisterOptions& opt) {
  if (!moving.same_grid(fixed))
    throw std::invalid_argument("register_volumes: grid mismatch");
  if (opt.levels < 1 || opt.iters < 1)
    throw std::invalid_argument("register_volumes: bad level/iteration count");

  RegisterResult result;
  result.trace.push_back(mse(moving, fixed));

  // image pyramid, index = level (0 is full resolution)
  std::vector<Volume> pyr_m{moving}, pyr_f{fixed};
  for (int l = 1; l < opt.levels; ++l) {
    pyr_m.push_back(avg_pool2(pyr_m.back()));
    pyr_f.push_back(avg_pool2(pyr_f.back()));
  }

  // The control grid coarsens with the image: spacing doubles per level, so
  // the coarsest grid spreads bulk motion across the whole volume and finer
  // grids only refine it. Each level starts from the previous level's field
  // sampled at its own control points, which composes the levels into one
  // full-resolution field.
  DisplacementField accumulated;
  bool have_accumulated = false;

  for (int level = opt.levels - 1; level >= 0; --level) {
    const double scale = std::pow(2.0, level);
    const Volume& vm = pyr_m[level];
    const Volume& vf = pyr_f[level];
    if (vm.nx < 2 || vm.ny < 2 || vm.nz < 2)
      throw std::invalid_argument("register_volumes: pyramid level too small");
    const Tensor tm = tensor_of(vm);
    const Tensor tf = tensor_of(vf);

    const double spacing_l = opt.spacing * scale;
    const DisplacementField proto =
        make_field(moving.nx, moving.ny, moving.nz, spacing_l);
    const DisplacementField carried =
        have_accumulated ? subdivide_field(accumulated, proto) : proto;
    const std::size_t np = static_cast<std::size_t>(proto.npoints());
    std::vector<double> init(np * 3, 0.0);
    for (std::size_t p = 0; p < np; ++p)
      for (int ax = 0; ax < 3; ++ax) init[ax * np + p] = carried.d[3 * p + ax];
    Tensor disp = Tensor::from({3, proto.gx, proto.gy, proto.gz}, init,
                               /*requires_grad=*/true);

    AdamState st;
    st.lr = opt.lr / std::pow(2.0, opt.levels - 1 - level);
    // Inputs are normalized to [-1, 1], so gradient magnitudes carry real
    // signal strength. A large epsilon keeps the step proportional to the
    // gradient for weakly constrained control points instead of letting the
    // per-parameter normalization walk them at full step size; without it,
    // points over flat image regions drift arbitrarily far.
    st.eps = 1e-2;
    std::vector<Tensor> params{disp};
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best = disp.data();
    // One extra pass evaluates the final iterate without stepping.
    for (int it = 0; it <= opt.iters; ++it) {
      Tape tape;
      Tape::Scope scope(tape);
      const Tensor warped = warp_op(tm, disp, spacing_l, scale,
                                    0.5 * (scale - 1.0), 1.0 / scale);
      const Tensor diff = sub(warped, tf);
      const Tensor loss = mean(mul(diff, diff));
      if (!std::isfinite(loss.scalar()))
        throw std::runtime_error("register_volumes: non-finite loss");
      if (loss.scalar() < best_loss) {
        best_loss = loss.scalar();
        best = disp.data();
      }
      if (it == opt.iters) break;
      tape.backward(loss);
      adam_step(params, st);
      disp.zero_grad();
    }
    disp.data() = best;

    // Adopt the level's best iterate only if it does not regress the
    // full-resolution error; otherwise keep the carried-over field, which
    // represents the previous level's solution exactly.
    const DisplacementField candidate = field_of(disp, spacing_l);
    const double cand_mse = mse(warp(moving, candidate), fixed);
    if (!have_accumulated || cand_mse <= result.trace.back()) {
      accumulated = candidate;
      result.trace.push_back(cand_mse);
    } else {
      accumulated = carried;
      result.trace.push_back(mse(warp(moving, accumulated), fixed));
    }
    have_accumulated = true;
  }

  result.field = accumulated;
  return result;
}

}  // namespace dynpet
